"""
Shifted sparse factorizations
-----------------------------

Solves with ``A - shift*M`` (``M`` the identity or a mass matrix) backed by a
per-operator cache, so every shift is factored once and reused for all later
right-hand sides.

Kinds
-----

``lu``
    SuperLU with COLAMD column ordering; complex arithmetic for complex
    shifts. Transposed solves reuse the same factors.
``cholesky``
    Reverse Cuthill-McKee ordering followed by a banded Cholesky
    factorization. Used for symmetric matrices and real shifts.
``cg``
    Conjugate gradients preconditioned by an incomplete ``L D L^T``
    factorization, inner tolerance ``1e-10``. Symmetric matrices and real
    shifts only.
"""
from __future__ import annotations

import logging
import threading

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.csgraph import reverse_cuthill_mckee
import scipy.sparse.linalg

from .errors import LinAlgKernelError, SingularShiftError

logger = logging.getLogger(__name__)

BACKENDS = ("direct", "cg")
CG_RTOL = 1e-10


def canonical_csr(A):
    """CSR with sorted column indices and no stored zeros."""
    A = scipy.sparse.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def is_symmetric(A):
    return (A != A.T).nnz == 0


def shifted_matrix(A, shift, mass=None):
    """``A - shift*M`` in CSC layout, complex when the shift is."""
    shift = complex(shift)
    if mass is None:
        mass = scipy.sparse.identity(A.shape[0], format="csc")
    if shift.imag == 0.0:
        return scipy.sparse.csc_matrix(A - shift.real * mass)
    return scipy.sparse.csc_matrix(A, dtype=complex) - shift * mass


class BandedCholesky:
    """``M = F @ F.T`` for sparse SPD ``M``, with ``F = P.T @ L @ P``.

    ``P`` is the reverse Cuthill-McKee permutation and ``L`` a banded lower
    triangular factor of the permuted matrix. A diagonal ``M`` gives a
    diagonal ``F``.
    """

    def __init__(self, M):
        M = scipy.sparse.csr_matrix(M)
        n = M.shape[0]
        self.permutation = np.asarray(
            reverse_cuthill_mckee(M, symmetric_mode=True), dtype=np.intp
        )
        permuted = M[self.permutation][:, self.permutation]
        lower = scipy.sparse.tril(permuted).tocoo()
        offsets = lower.row - lower.col
        self.bandwidth = int(offsets.max()) if offsets.size else 0
        band = np.zeros((self.bandwidth + 1, n))
        band[offsets, lower.col] = lower.data
        try:
            self.band = scipy.linalg.cholesky_banded(band, lower=True)
        except np.linalg.LinAlgError as exc:
            raise LinAlgKernelError(
                f"Cholesky factorization failed, matrix is not positive definite: {exc}"
            ) from exc

        u = self.bandwidth
        self._upper = np.zeros_like(self.band)
        for k in range(u + 1):
            self._upper[u - k, k:] = self.band[k, : n - k]
        self.lower = scipy.sparse.diags(
            [self.band[k, : n - k] for k in range(u + 1)],
            [-k for k in range(u + 1)],
            format="csr",
        )

    @property
    def n(self):
        return self.band.shape[1]

    def _scatter(self, y):
        out = np.empty_like(y)
        out[self.permutation] = y
        return out

    def apply_lower(self, b):
        """``F @ b``"""
        return self._scatter(self.lower @ b[self.permutation])

    def apply_lower_transpose(self, b):
        """``F.T @ b``"""
        return self._scatter(self.lower.T @ b[self.permutation])

    def solve_lower(self, b):
        """``F^{-1} @ b``"""
        y = scipy.linalg.solve_banded(
            (self.bandwidth, 0), self.band, b[self.permutation], check_finite=False
        )
        return self._scatter(y)

    def solve_lower_transpose(self, b):
        """``F^{-T} @ b``"""
        y = scipy.linalg.solve_banded(
            (0, self.bandwidth), self._upper, b[self.permutation], check_finite=False
        )
        return self._scatter(y)

    def solve(self, b):
        return self.solve_lower_transpose(self.solve_lower(b))


class Factorization:
    kind = None

    def __init__(self, shift, permutation, factors):
        self.shift = complex(shift)
        self.permutation = permutation
        self.factors = factors

    def solve(self, rhs, transpose=False):
        raise NotImplementedError

    def _checked(self, x):
        if not np.all(np.isfinite(x)):
            raise SingularShiftError(self.shift)
        return x

    def __repr__(self):
        return f"<{type(self).__name__} shift={self.shift}>"


class LUFactorization(Factorization):
    kind = "lu"

    def __init__(self, shifted, shift):
        try:
            lu = scipy.sparse.linalg.splu(
                scipy.sparse.csc_matrix(shifted), permc_spec="COLAMD"
            )
        except RuntimeError as exc:
            raise SingularShiftError(shift) from exc
        super().__init__(shift, lu.perm_c, lu)
        self._complex = np.iscomplexobj(shifted)

    def solve(self, rhs, transpose=False):
        trans = "T" if transpose else "N"
        rhs = np.asarray(rhs)
        if self._complex:
            x = self.factors.solve(np.asarray(rhs, dtype=complex), trans=trans)
        elif np.iscomplexobj(rhs):
            x = self.factors.solve(np.ascontiguousarray(rhs.real), trans=trans) + (
                1j * self.factors.solve(np.ascontiguousarray(rhs.imag), trans=trans)
            )
        else:
            x = self.factors.solve(np.asarray(rhs, dtype=float), trans=trans)
        return self._checked(x)


class CholeskyFactorization(Factorization):
    """Symmetric shifted matrix factored as ``sign * F @ F.T``."""

    kind = "cholesky"

    def __init__(self, shifted, shift):
        last = None
        for sign in (-1.0, 1.0):
            try:
                chol = BandedCholesky(sign * shifted)
            except LinAlgKernelError as exc:
                last = exc
                continue
            super().__init__(shift, chol.permutation, chol)
            self.sign = sign
            return
        raise last

    def solve(self, rhs, transpose=False):
        return self._checked(self.sign * self.factors.solve(np.asarray(rhs)))


def incomplete_ldl(M, drop_tol=1e-4, fill_factor=10):
    """SPD preconditioner ``P^T L D L^T P`` for an SPD matrix ``M``.

    Only the unit lower factor and the pivots of a symmetric-mode incomplete
    LU are kept, so the preconditioner is symmetric whatever was dropped from
    the upper factor.
    """
    try:
        ilu = scipy.sparse.linalg.spilu(
            scipy.sparse.csc_matrix(M),
            drop_tol=drop_tol,
            fill_factor=fill_factor,
            permc_spec="NATURAL",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise LinAlgKernelError(f"incomplete factorization failed: {exc}") from exc
    perm = ilu.perm_c
    if not np.array_equal(ilu.perm_r, perm):
        raise LinAlgKernelError("incomplete factorization pivoted off the diagonal")
    pivots = ilu.U.diagonal()
    if not np.all(pivots > 0.0):
        raise LinAlgKernelError("incomplete factorization lost definiteness")
    lower = ilu.L.tocsr()
    upper = lower.T.tocsr()

    def apply(b):
        b = np.ravel(b)
        permuted = np.empty_like(b)
        permuted[perm] = b
        y = scipy.sparse.linalg.spsolve_triangular(
            lower, permuted, lower=True, unit_diagonal=True
        )
        y = scipy.sparse.linalg.spsolve_triangular(
            upper, y / pivots, lower=False, unit_diagonal=True
        )
        return y[perm]

    return scipy.sparse.linalg.LinearOperator(M.shape, matvec=apply, dtype=float), perm


class IterativeSolve(Factorization):
    kind = "cg"

    def __init__(self, shifted, shift, rtol=CG_RTOL):
        operator = scipy.sparse.csc_matrix(-shifted)
        preconditioner, perm = incomplete_ldl(operator)
        super().__init__(shift, perm, (operator, preconditioner))
        self.rtol = rtol

    def _solve_vector(self, b):
        operator, preconditioner = self.factors
        x, info = scipy.sparse.linalg.cg(
            operator, b, rtol=self.rtol, M=preconditioner, maxiter=10 * b.size
        )
        if info < 0:
            raise LinAlgKernelError(f"conjugate gradients broke down (info={info})")
        if info > 0:
            logger.warning(
                "conjugate gradients stopped before tolerance (shift %s)", self.shift
            )
        return -x

    def solve(self, rhs, transpose=False):
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs):
            return self.solve(rhs.real) + 1j * self.solve(rhs.imag)
        if rhs.ndim == 1:
            return self._checked(self._solve_vector(rhs))
        columns = [self._solve_vector(rhs[:, j]) for j in range(rhs.shape[1])]
        return self._checked(np.column_stack(columns) if columns else rhs.copy())


def factorize(A, shift, mass=None, symmetric=False, backend="direct"):
    """Pick and build a factorization of ``A - shift*M``."""
    shift = complex(shift)
    shifted = shifted_matrix(A, shift, mass)
    if symmetric and shift.imag == 0.0:
        if backend == "cg":
            try:
                return IterativeSolve(shifted, shift)
            except LinAlgKernelError as exc:
                logger.warning("falling back to a direct solve: %s", exc)
        try:
            return CholeskyFactorization(shifted, shift)
        except LinAlgKernelError:
            logger.debug("shift %s: not definite, using LU", shift)
    return LUFactorization(shifted, shift)


class FactorizationCache:
    """Factorizations of one matrix (pencil) keyed by shift.

    Reads are lock-free; insertion happens under a lock so concurrent callers
    factor each shift once.
    """

    def __init__(self, backend="direct"):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend '{backend}', expected one of {BACKENDS}")
        self.backend = backend
        self.matrix = None
        self.mass = None
        self.symmetric = False
        self.hits = 0
        self.misses = 0
        self._store = {}
        self._lock = threading.Lock()

    def bind(self, matrix, mass=None):
        with self._lock:
            if self.matrix is None:
                self.matrix = matrix
                self.mass = mass
                self.symmetric = is_symmetric(matrix) and (
                    mass is None or is_symmetric(mass)
                )
            elif self.matrix is not matrix:
                raise ValueError("factorization cache is bound to a different matrix")

    def set_backend(self, backend):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend '{backend}', expected one of {BACKENDS}")
        if self._store and backend != self.backend:
            raise ValueError("cannot switch backend once factorizations are cached")
        self.backend = backend

    def get(self, shift):
        key = complex(shift)
        found = self._store.get(key)
        if found is not None:
            self.hits += 1
            return found
        with self._lock:
            found = self._store.get(key)
            if found is None:
                logger.debug("factoring A - (%s)*M", key)
                found = factorize(
                    self.matrix, key, self.mass, self.symmetric, self.backend
                )
                self._store[key] = found
                self.misses += 1
        return found

    def __len__(self):
        return len(self._store)

    def stats(self):
        return {"factorizations": self.misses, "reuses": self.hits}


def solve_shifted(A, shift, rhs, cache=None, transpose=False):
    """Solve ``(A - shift*I) X = rhs`` (or the transposed system).

    ``A`` is a sparse matrix or an operator providing ``solve_shifted``.
    """
    if hasattr(A, "solve_shifted"):
        return A.solve_shifted(shift, rhs, transpose=transpose)
    if cache is None:
        cache = FactorizationCache()
        A = canonical_csr(A)
    cache.bind(A)
    return cache.get(shift).solve(rhs, transpose=transpose)
