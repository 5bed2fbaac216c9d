"""
Dense kernels
-------------

Thin QR with deflation, block Gram-Schmidt against an existing basis, real
Schur form, symmetric low-rank truncation and the matrix exponential.

Every routine works on ``numpy`` arrays and returns new arrays; nothing is
modified in place.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from .errors import BasisStagnation, LinAlgKernelError

logger = logging.getLogger(__name__)

QR_DROP_TOL = 1e-12
BLOCK_DROP_TOL = 1e-10
SYMMETRY_TOL = 1e-10


def symmetrize(Y):
    return 0.5 * (Y + Y.T)


def _orthogonalize(V, W, rel_tol=0.0, abs_tol=0.0):
    """Two-pass modified Gram-Schmidt of ``W`` against ``V`` and itself.

    Returns ``(Q, H, kept)`` with ``W = [V, Q] @ H`` up to the dropped parts.
    A column is dropped when what remains of it is below
    ``max(rel_tol * |w_j|, abs_tol)``.
    """
    n, k = W.shape
    d = V.shape[1]
    W = np.array(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    H = np.zeros((d + k, k))

    for _ in range(2):
        for i in range(d):
            coeffs = V[:, i] @ W
            W -= np.outer(V[:, i], coeffs)
            H[i] += coeffs

    Q = np.empty((n, k))
    kept = []
    for j in range(k):
        w = W[:, j]
        r = len(kept)
        for _ in range(2):
            for i in range(r):
                c = Q[:, i] @ w
                w = w - c * Q[:, i]
                H[d + i, j] += c
        remaining = np.linalg.norm(w)
        if remaining > max(rel_tol * norms[j], abs_tol) and remaining > 0.0:
            Q[:, r] = w / remaining
            H[d + r, j] = remaining
            kept.append(j)
    r = len(kept)
    return Q[:, :r], H[: d + r], kept


def qr_thin(M, return_kept=False):
    """Economic QR with nonnegative ``diag(R)``.

    Rank-deficient input is deflated: columns whose remaining norm falls below
    ``1e-12 * |M|_F`` are dropped and ``R`` has one row per kept column.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"qr_thin expects a matrix, got shape {M.shape}")
    n, k = M.shape
    total = np.linalg.norm(M)
    if k == 0 or total == 0.0:
        Q, R, kept = np.zeros((n, 0)), np.zeros((0, k)), []
        return (Q, R, kept) if return_kept else (Q, R)

    if k <= n:
        Q, R = scipy.linalg.qr(M, mode="economic")
        signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
        Q = Q * signs
        R = signs[:, None] * R
        if np.abs(np.diag(R)).min() > QR_DROP_TOL * total:
            return (Q, R, list(range(k))) if return_kept else (Q, R)

    Q, R, kept = _orthogonalize(np.zeros((n, 0)), M, abs_tol=QR_DROP_TOL * total)
    logger.warning("rank-deficient block: numerical rank %d of %d", len(kept), k)
    return (Q, R, kept) if return_kept else (Q, R)


def block_orthogonalize(V, W, return_kept=False):
    """Orthonormalize ``W`` against the orthonormal columns of ``V``.

    Returns ``(V_new, H)`` where ``H`` stacks the coefficients on ``V`` over
    the coefficients on ``V_new``. Raises :class:`BasisStagnation` when
    nothing of ``W`` survives.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.shape[0] != W.shape[0]:
        raise ValueError(f"row mismatch: basis has {V.shape[0]}, block {W.shape[0]}")
    V_new, H, kept = _orthogonalize(V, W, rel_tol=BLOCK_DROP_TOL)
    if W.shape[1] and not kept:
        raise BasisStagnation("new block lies in the span of the current basis")
    if len(kept) < W.shape[1]:
        logger.debug("block deflated from %d to %d columns", W.shape[1], len(kept))
    return (V_new, H, kept) if return_kept else (V_new, H)


def real_schur(M):
    """Return ``(U, S)`` with ``U.T @ M @ U = S`` quasi-upper-triangular."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"real_schur expects a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise LinAlgKernelError("real_schur: matrix has non-finite entries")
    try:
        S, U = scipy.linalg.schur(M, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinAlgKernelError(
            f"QR iteration did not converge on a {M.shape[0]}x{M.shape[0]} matrix "
            f"(norm {np.linalg.norm(M):.3e}): {exc}"
        ) from exc
    return U, S


def schur_eigenvalues(S):
    """Eigenvalues read off the 1x1 and 2x2 diagonal blocks of ``S``."""
    n = S.shape[0]
    eigs = []
    i = 0
    while i < n:
        if i + 1 < n and S[i + 1, i] != 0.0:
            a, b, c, d = S[i, i], S[i, i + 1], S[i + 1, i], S[i + 1, i + 1]
            mean = 0.5 * (a + d)
            disc = np.sqrt(complex(0.25 * (a - d) ** 2 + b * c))
            eigs.extend([mean + disc, mean - disc])
            i += 2
        else:
            eigs.append(complex(S[i, i]))
            i += 1
    return np.array(eigs)


def max_real_part(M):
    """Spectral abscissa of ``M`` via the real Schur form."""
    if M.shape[0] == 0:
        return -np.inf
    _, S = real_schur(M)
    return schur_eigenvalues(S).real.max()


def sym_truncate(Y, tol=1e-8):
    """Low-rank factor ``F`` with ``F @ F.T`` close to the symmetric PSD ``Y``.

    Eigenvalues below ``tol * |Y|_2`` are discarded, negative ones clipped.
    Columns are ordered by decreasing eigenvalue.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = np.abs(Y).max()
    asymmetry = np.abs(Y - Y.T).max()
    if asymmetry > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise LinAlgKernelError(
            f"sym_truncate: input is not symmetric (asymmetry {asymmetry:.3e})"
        )
    eigvals, eigvecs = scipy.linalg.eigh(symmetrize(Y))
    top = np.abs(eigvals).max()
    if top == 0.0:
        return np.zeros((n, 0))
    if eigvals.min() < -tol * top:
        logger.debug(
            "clipping negative eigenvalue %.3e (largest %.3e)", eigvals.min(), top
        )
    keep = np.flatnonzero(eigvals > tol * top)[::-1]
    F = eigvecs[:, keep] * np.sqrt(eigvals[keep])
    pivots = np.abs(F).argmax(axis=0)
    signs = np.sign(F[pivots, np.arange(F.shape[1])])
    return F * np.where(signs == 0.0, 1.0, signs)


def expm(M):
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expm expects a square matrix, got {M.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        result = scipy.linalg.expm(M)
    if not np.all(np.isfinite(result)):
        raise LinAlgKernelError(
            f"matrix exponential overflowed (1-norm {np.linalg.norm(M, 1):.3e}); "
            "split the time interval into shorter pieces"
        )
    return result
