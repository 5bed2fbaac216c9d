"""
Reduced algebraic Riccati equations
-----------------------------------

Dense solvers for the small equations that appear in every BDF step and at
steady state::

    T^T Y + Y T - Y B B^T Y + Q = 0

Newton-Kleinman iteration, each step a Lyapunov equation solved by
Bartels-Stewart on the real Schur form.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg

from .errors import CareSolveError, LyapunovSpectrumError
from .linalg import max_real_part, symmetrize

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
STAGNATION_TOL = 1e-11


@dataclass
class CareProblem:
    T: np.ndarray
    B: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.T = np.atleast_2d(np.asarray(self.T, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        d = self.T.shape[0]
        self.B = np.asarray(self.B, dtype=float)
        if self.B.ndim != 2:
            self.B = self.B.reshape(d, -1)
        if self.T.shape != (d, d) or self.Q.shape != (d, d) or self.B.shape[0] != d:
            raise ValueError(
                f"inconsistent CARE shapes: T {self.T.shape}, B {self.B.shape}, "
                f"Q {self.Q.shape}"
            )
        asymmetry = np.abs(self.Q - self.Q.T).max() if d else 0.0
        if asymmetry > 1e-12 * max(1.0, np.abs(self.Q).max()):
            raise ValueError(f"Q must be symmetric (asymmetry {asymmetry:.3e})")
        self.Q = symmetrize(self.Q)

    @property
    def d(self):
        return self.T.shape[0]

    def scale(self, Y):
        """Size of the terms in the residual, used to make tolerances relative."""
        ny = np.linalg.norm(Y)
        return (
            np.linalg.norm(self.Q)
            + 2.0 * np.linalg.norm(self.T) * ny
            + np.linalg.norm(self.B) ** 2 * ny**2
        )


def solve_lyapunov(F, Q, check_spectrum=True):
    """Symmetric ``Y`` with ``F^T Y + Y F + Q = 0``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if F.shape[0] != F.shape[1] or Q.shape != F.shape:
        raise ValueError(f"solve_lyapunov: F {F.shape} and Q {Q.shape} mismatch")
    if check_spectrum:
        eigs = scipy.linalg.eigvals(F)
        sums = eigs[:, None] + eigs[None, :]
        worst = np.unravel_index(np.abs(sums).argmin(), sums.shape)
        if np.abs(sums[worst]) <= 1e-12 * max(np.linalg.norm(F, 1), 1e-300):
            raise LyapunovSpectrumError(sums[worst])
    Y = scipy.linalg.solve_continuous_lyapunov(F.T, -Q)
    if not np.all(np.isfinite(Y)):
        raise LyapunovSpectrumError(0.0)
    return symmetrize(Y)


def care_residual(p, Y):
    YB = Y @ p.B
    return np.linalg.norm(p.T.T @ Y + Y @ p.T - YB @ YB.T + p.Q)


def _is_stable(M):
    return max_real_part(M) < 0.0


def _initial_gain(p, initial):
    if initial is not None:
        K = p.B.T @ initial
        if _is_stable(p.T - p.B @ K):
            return K
        logger.debug("warm start is not stabilizing, ignoring it")
    if _is_stable(p.T):
        return np.zeros((p.B.shape[1], p.d))
    BBt = p.B @ p.B.T
    c = 1.0
    for _ in range(60):
        if _is_stable(p.T - c * BBt):
            return c * p.B.T
        c *= 2.0
    raise CareSolveError("could not find a stabilizing initial feedback")


def _schur_fallback(p):
    try:
        Y = scipy.linalg.solve_continuous_are(p.T, p.B, p.Q, np.eye(p.B.shape[1]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.debug("Schur CARE solver failed: %s", exc)
        return None
    return symmetrize(Y)


def solve_care(
    p, initial=None, check_psd=True, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER
):
    """Stabilizing symmetric solution of the CARE ``p``.

    Parameters
    ----------
    p : CareProblem
    initial : ndarray, optional
        Guess for ``Y`` (for example the previous time step); used only when
        ``T - B B^T Y`` is stable.
    check_psd : bool
        Reject an indefinite ``Q``. Multistep BDF right-hand sides may be
        slightly indefinite, so the integrator turns this off.
    """
    if p.d == 0:
        return np.zeros((0, 0))
    if check_psd:
        lowest = scipy.linalg.eigvalsh(p.Q)[0]
        if lowest < -1e-10 * max(np.abs(p.Q).max(), 1e-300):
            raise ValueError(
                f"Q must be positive semidefinite (eigenvalue {lowest:.3e})"
            )

    K = _initial_gain(p, initial)
    previous = np.inf
    residual = np.inf
    Y = None
    for iteration in range(1, max_iter + 1):
        try:
            Y = solve_lyapunov(p.T - p.B @ K, p.Q + K.T @ K, check_spectrum=False)
        except LyapunovSpectrumError:
            Y = None
            break
        K = p.B.T @ Y
        residual = care_residual(p, Y)
        scale = p.scale(Y)
        logger.debug(
            "newton %d: residual %.3e (scale %.3e)", iteration, residual, scale
        )
        if residual <= tol * scale:
            break
        if residual <= STAGNATION_TOL * scale and residual >= 0.9 * previous:
            break
        previous = residual
    else:
        Y = None

    if Y is not None and not _is_stable(p.T - p.B @ (p.B.T @ Y)):
        Y = None
    if Y is None:
        Y = _schur_fallback(p)
        if Y is None or not _is_stable(p.T - p.B @ (p.B.T @ Y)):
            raise CareSolveError(
                f"no stabilizing solution after {max_iter} Newton iterations "
                f"(last residual {residual:.3e})",
                residual=residual,
                iterations=max_iter,
            )
        logger.debug("Newton iteration failed, used the Schur solver")
    return Y
