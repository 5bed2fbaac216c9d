"""
Operators
---------

The coefficient matrix ``A`` of a DRE as a
:class:`scipy.sparse.linalg.LinearOperator` that can also solve shifted
systems. Two flavours exist:

* :class:`SparseOperator` wraps an explicit sparse matrix.
* :class:`MassTransformOperator` represents ``F^{-1} Ahat F^{-T}`` for a
  generalized system with SPD mass matrix ``Ehat = F F^T`` without ever
  forming it.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse
from scipy.sparse.linalg import LinearOperator

from .factorization import BandedCholesky, FactorizationCache, canonical_csr

logger = logging.getLogger(__name__)


class DreOperator(LinearOperator):
    """Real square operator with shifted solves."""

    def __init__(self, n):
        super().__init__(dtype=np.dtype(float), shape=(n, n))

    @property
    def n(self):
        return self.shape[0]

    @property
    def symmetric(self):
        return False

    def solve_shifted(self, shift, rhs, transpose=False):
        """``(A - shift*I)^{-1} rhs``, or with ``A.T`` when ``transpose``."""
        raise NotImplementedError

    def _matvec(self, x):
        return self._matmat(x.reshape(-1, 1)).ravel()

    def _rmatvec(self, x):
        return self._rmatmat(x.reshape(-1, 1)).ravel()

    def todense(self):
        return self.matmat(np.eye(self.n))

    def cache_stats(self):
        return {}

    def use_backend(self, backend):
        self.cache.set_backend(backend)


class SparseOperator(DreOperator):
    def __init__(self, matrix, backend="direct"):
        self.matrix = canonical_csr(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"A must be square, got {self.matrix.shape}")
        super().__init__(self.matrix.shape[0])
        self.cache = FactorizationCache(backend)
        self.cache.bind(self.matrix)

    @property
    def symmetric(self):
        return self.cache.symmetric

    def _matmat(self, X):
        return self.matrix @ X

    def _rmatmat(self, X):
        return self.matrix.T @ X

    def solve_shifted(self, shift, rhs, transpose=False):
        return self.cache.get(shift).solve(rhs, transpose=transpose)

    def todense(self):
        return self.matrix.toarray()

    def cache_stats(self):
        return self.cache.stats()


class MassTransformOperator(DreOperator):
    """``A = F^{-1} Ahat F^{-T}`` applied through triangular solves with ``F``."""

    def __init__(self, A_hat, E_hat, backend="direct"):
        self.A_hat = canonical_csr(A_hat)
        self.E_hat = canonical_csr(E_hat)
        if self.A_hat.shape != self.E_hat.shape:
            raise ValueError(
                f"Ahat {self.A_hat.shape} and Ehat {self.E_hat.shape} differ in shape"
            )
        self.factor = BandedCholesky(self.E_hat)
        super().__init__(self.A_hat.shape[0])
        self.cache = FactorizationCache(backend)
        self.cache.bind(self.A_hat, self.E_hat)

    @property
    def symmetric(self):
        return self.cache.symmetric

    def _matmat(self, X):
        inner = self.A_hat @ self.factor.solve_lower_transpose(X)
        return self.factor.solve_lower(inner)

    def _rmatmat(self, X):
        inner = self.A_hat.T @ self.factor.solve_lower_transpose(X)
        return self.factor.solve_lower(inner)

    def solve_shifted(self, shift, rhs, transpose=False):
        # (F^{-1} Ahat F^{-T} - s I)^{-1} = F^T (Ahat - s Ehat)^{-1} F
        inner = self.cache.get(shift).solve(
            self.factor.apply_lower(np.asarray(rhs)), transpose=transpose
        )
        return self.factor.apply_lower_transpose(inner)

    def cache_stats(self):
        return self.cache.stats()


def as_operator(A, backend="direct"):
    if isinstance(A, DreOperator):
        return A
    if scipy.sparse.issparse(A) or isinstance(A, np.ndarray):
        return SparseOperator(A, backend=backend)
    raise TypeError(f"cannot use {type(A).__name__} as a DRE coefficient operator")


def estimate_spectral_bounds(operator, steps=20, seed=0):
    """Rough ``(s_min, s_max)`` for the mirrored spectrum of a stable ``A``.

    Power iteration on ``-(A + A^T)/2`` gives the large end, inverse power
    steps with ``A`` the small end.
    """
    n = operator.n
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.random(n) - 0.5
    v /= np.linalg.norm(v)
    s_max = 0.0
    for _ in range(steps):
        w = -0.5 * (operator.matvec(v) + operator.rmatvec(v))
        s_max = np.linalg.norm(w)
        if s_max == 0.0:
            break
        v = w / s_max

    u = rng.random(n) - 0.5
    u /= np.linalg.norm(u)
    growth = 1.0
    for _ in range(max(3, steps // 4)):
        w = np.real(operator.solve_shifted(0.0, u))
        growth = np.linalg.norm(w)
        u = w / growth
    s_min = 1.0 / growth

    s_min, s_max = sorted((s_min, s_max))
    if s_max <= s_min:
        s_max = 2.0 * s_min
    logger.debug("estimated spectral bounds [%.3e, %.3e]", s_min, s_max)
    return s_min, s_max
