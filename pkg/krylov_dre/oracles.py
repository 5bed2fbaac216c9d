"""
Reference solutions
-------------------

Dense solvers for small problems, used to check the projected solver.

* :func:`lyapunov_dre_closed_form`: the ``B = 0`` solution::

      X(t) = e^{t A^T} Z Z^T e^{t A} + int_0^t e^{s A^T} C^T C e^{s A} ds

  with the integral evaluated by composite Gauss-Legendre quadrature on
  panels graded geometrically toward ``s = 0``.
* :func:`dense_dre_reference`: the full DRE integrated by a fine BDF scheme.
* :func:`lyapunov_steady_state`: the ``t -> inf`` limit of the first one.
"""
import logging

import numpy as np
from numpy.polynomial.legendre import leggauss

from .bdf import BdfScheme, bdf_integrate
from .care import solve_lyapunov
from .errors import QuadratureError
from .linalg import expm, symmetrize

logger = logging.getLogger(__name__)

GAUSS_POINTS = 16
DEFAULT_PANELS = 8
QUADRATURE_RTOL = 1e-10
DENSE_MAX_N = 200


def _dense(A):
    if hasattr(A, "todense") and not isinstance(A, np.ndarray):
        A = A.todense()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if A.shape[0] > DENSE_MAX_N:
        raise ValueError(f"dense reference limited to n <= {DENSE_MAX_N}")
    return A


def geometric_breakpoints(t, panels):
    """``[0, t / 2**(panels - 1), ..., t / 2, t]``"""
    return np.concatenate([[0.0], t * 2.0 ** -np.arange(panels - 1, -1, -1)])


def _refine(breakpoints):
    mid = 0.5 * (breakpoints[:-1] + breakpoints[1:])
    out = np.empty(2 * breakpoints.size - 1)
    out[0::2] = breakpoints
    out[1::2] = mid
    return out


def _gramian_integral(A, C, breakpoints):
    x, w = leggauss(GAUSS_POINTS)
    total = np.zeros((A.shape[0], A.shape[0]))
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        half = 0.5 * (b - a)
        for node, weight in zip(0.5 * (a + b) + half * x, half * w):
            M = C @ expm(node * A)
            total += weight * (M.T @ M)
    return total


def lyapunov_dre_closed_form(A, C, Z, t, quad_nodes=DEFAULT_PANELS):
    """``X(t)`` for ``B = 0``, checked by doubling the quadrature panels."""
    A = _dense(A)
    n = A.shape[0]
    C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, n)
    Z = np.zeros((n, 0)) if Z is None else np.asarray(Z, dtype=float).reshape(n, -1)
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    X0 = Z @ Z.T
    if t == 0.0:
        return X0

    ZtE = Z.T @ expm(t * A)
    coarse_points = geometric_breakpoints(t, quad_nodes)
    coarse = _gramian_integral(A, C, coarse_points)
    fine = _gramian_integral(A, C, _refine(coarse_points))
    X = symmetrize(ZtE.T @ ZtE + fine)

    estimate = np.linalg.norm(fine - coarse)
    scale = np.linalg.norm(X)
    logger.debug("closed form at t=%g: quadrature estimate %.3e", t, estimate)
    if estimate > QUADRATURE_RTOL * scale and estimate > 1e-300:
        raise QuadratureError(estimate, estimate / scale if scale else np.inf)
    return X


def lyapunov_steady_state(A, C):
    """Solution of ``A^T X + X A + C^T C = 0`` for stable ``A``."""
    A = _dense(A)
    C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, A.shape[0])
    return solve_lyapunov(A, C.T @ C)


def dense_dre_reference(problem, scheme=None):
    """Full-size trajectory of ``problem`` by BDF, default ``bdf3-10000``."""
    scheme = scheme or BdfScheme(3, 10000)
    A = _dense(problem.operator.todense())
    logger.info("dense reference %s for n=%d", scheme, A.shape[0])
    return bdf_integrate(
        A, problem.B, problem.C, problem.Z @ problem.Z.T, problem.t_final, scheme
    )
