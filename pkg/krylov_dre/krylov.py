"""
Krylov bases
------------

Block extended and rational Krylov subspaces generated by ``A^T`` from the
starting block ``N = [C^T, Z]``, together with the Arnoldi-type relation::

    A^T V = V T^T + nu tau^T,    T = V^T A V

that couples the basis to the residual of the projected DRE.

Extended
    ``V_1 = qr([N, A^{-T} N])``; each step maps the forward half of the last
    block by ``A^T`` and the inverse half by ``A^{-T}``.
Rational
    ``V_1 = qr(N)``; each step solves with ``A^T - s I``. A complex shift
    contributes the real and imaginary parts of the solution as two real
    blocks, so the basis stays real.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg

from .errors import BasisStagnation, SingularShiftError
from .linalg import block_orthogonalize, qr_thin
from .operators import as_operator, estimate_spectral_bounds

logger = logging.getLogger(__name__)

EXTENDED = "extended"
RATIONAL = "rational"
KINDS = (EXTENDED, RATIONAL)

COUPLING_RTOL = 1e-13


@dataclass
class RationalExtras:
    """Shift history and the pencil ``A^T V H = V L`` of a rational basis.

    Every generated basis direction contributes one pencil column: ``H``
    holds its orthogonalization coefficients, ``L`` the matching right-hand
    side. ``gamma`` and ``r_next`` are filled by :func:`rational_coupling`.
    """

    bounds: tuple
    real_only: bool = False
    shifts: list = field(default_factory=list)
    multiplicity: list = field(default_factory=list)
    H: np.ndarray = None
    L: np.ndarray = None
    gamma: np.ndarray = None
    r_next: np.ndarray = None

    def record(self, d, k_cols, l_cols):
        def grow(M):
            if M is None:
                return np.zeros((d, 0))
            return np.vstack([M, np.zeros((d - M.shape[0], M.shape[1]))])

        self.H = np.hstack([grow(self.H), k_cols])
        self.L = np.hstack([grow(self.L), l_cols])


@dataclass
class BasisState:
    kind: str
    operator: object
    B: np.ndarray
    C: np.ndarray
    Z: np.ndarray
    blocks: list = field(default_factory=list)
    AtV: np.ndarray = None
    T: np.ndarray = None
    B_m: np.ndarray = None
    C_m: np.ndarray = None
    Z_m: np.ndarray = None
    tau: np.ndarray = None
    nu: np.ndarray = None
    forward_width: int = 0
    stagnated: bool = False
    extras: RationalExtras = None
    _V: np.ndarray = field(default=None, repr=False)

    @property
    def n(self):
        return self.operator.shape[0]

    @property
    def block_width(self):
        return self.C.shape[0] + self.Z.shape[1]

    @property
    def V(self):
        if self._V is None:
            self._V = np.hstack(self.blocks) if self.blocks else np.zeros((self.n, 0))
        return self._V

    @property
    def dim(self):
        return sum(block.shape[1] for block in self.blocks)

    def append_block(self, V_new):
        """Append orthonormal columns and update the projections incrementally."""
        AtV_new = self.operator.rmatmat(V_new)
        if not self.blocks:
            Tt = V_new.T @ AtV_new
            self.AtV = AtV_new
            self.B_m = V_new.T @ self.B
            self.C_m = self.C @ V_new
            self.Z_m = V_new.T @ self.Z
        else:
            V = self.V
            Tt = np.block(
                [
                    [self.T.T, V.T @ AtV_new],
                    [V_new.T @ self.AtV, V_new.T @ AtV_new],
                ]
            )
            self.AtV = np.hstack([self.AtV, AtV_new])
            self.B_m = np.vstack([self.B_m, V_new.T @ self.B])
            self.C_m = np.hstack([self.C_m, self.C @ V_new])
            self.Z_m = np.vstack([self.Z_m, V_new.T @ self.Z])
        self.T = Tt.T
        self.blocks.append(V_new)
        self._V = None


def compute_coupling(state):
    """``nu`` and ``tau`` from a thin SVD of ``(I - V V^T) A^T V``."""
    V = state.V
    R = state.AtV - V @ state.T.T
    R -= V @ (V.T @ R)
    d = state.dim
    scale = np.linalg.norm(state.AtV)
    if d == 0 or scale == 0.0 or np.linalg.norm(R) == 0.0:
        state.nu, state.tau = np.zeros((state.n, 0)), np.zeros((d, 0))
        return state
    Q, Rf = scipy.linalg.qr(R, mode="economic")
    U, s, Wt = scipy.linalg.svd(Rf)
    keep = s > max(COUPLING_RTOL * s[0], 1e-15 * scale)
    state.nu = Q @ U[:, keep]
    state.tau = (s[keep, None] * Wt[keep]).T
    return state


def init_basis(kind, A, B, C, Z=None, bounds=None, real_only=False):
    """First block of an extended or rational basis."""
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind '{kind}', expected one of {KINDS}")
    operator = as_operator(A)
    n = operator.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    Z = np.zeros((n, 0)) if Z is None else np.asarray(Z, dtype=float).reshape(n, -1)
    N = np.hstack([C.T, Z])

    forward = N.shape[1]
    if kind == EXTENDED:
        try:
            inverse = operator.solve_shifted(0.0, N, transpose=True)
        except SingularShiftError as exc:
            raise SingularShiftError(
                0.0, "extended basis needs a nonsingular A"
            ) from exc
        V1, _, kept = qr_thin(np.hstack([N, np.real(inverse)]), return_kept=True)
        forward = sum(1 for j in kept if j < N.shape[1])
    else:
        V1, _, kept = qr_thin(N, return_kept=True)
        forward = len(kept)
    if V1.shape[1] == 0:
        raise BasisStagnation("starting block [C^T, Z] is zero")

    state = BasisState(kind, operator, B, C, Z, forward_width=forward)
    state.append_block(V1)
    if kind == RATIONAL:
        if bounds is None:
            bounds = estimate_spectral_bounds(operator)
        state.extras = RationalExtras(tuple(sorted(bounds)), real_only=real_only)
    logger.debug("%s basis: first block of width %d", kind, V1.shape[1])
    return compute_coupling(state)


def _last_block_columns(state):
    w = state.blocks[-1].shape[1]
    return np.arange(state.dim - w, state.dim)


def eksm_expand(state, A=None):
    """Append one extended Krylov block."""
    if state.kind != EXTENDED:
        raise ValueError("eksm_expand needs an extended basis")
    operator = state.operator if A is None else as_operator(A)
    last = state.blocks[-1]
    f = state.forward_width
    columns = _last_block_columns(state)
    forward_images = state.AtV[:, columns[:f]]
    inverse_images = last[:, f:]
    if inverse_images.shape[1]:
        inverse_images = np.real(
            operator.solve_shifted(0.0, inverse_images, transpose=True)
        )
    W = np.hstack([forward_images, inverse_images])
    try:
        V_new, _, kept = block_orthogonalize(state.V, W, return_kept=True)
    except BasisStagnation:
        logger.warning("extended basis stagnated at dimension %d", state.dim)
        state.stagnated = True
        return state
    state.forward_width = sum(1 for j in kept if j < f)
    state.append_block(V_new)
    return compute_coupling(state)


def _orthogonalize_or_empty(V, W):
    try:
        return block_orthogonalize(V, W, return_kept=True)
    except BasisStagnation:
        return np.zeros((V.shape[0], 0)), np.zeros((V.shape[1], W.shape[1])), []


def rksm_expand(state, shift, A=None):
    """Append the block(s) spanned by ``(A^T - shift I)^{-1}`` of the last block."""
    if state.kind != RATIONAL:
        raise ValueError("rksm_expand needs a rational basis")
    operator = state.operator if A is None else as_operator(A)
    extras = state.extras
    s = complex(shift)
    sources = _last_block_columns(state)
    W = operator.solve_shifted(s, state.blocks[-1], transpose=True)
    d = state.dim
    V = state.V

    if s.imag == 0.0:
        V_new, h, _ = _orthogonalize_or_empty(V, np.real(W))
        new_blocks = [V_new]
        d_after = d + V_new.shape[1]
        k_cols = _pad(h, d_after)
        l_cols = s.real * k_cols
        l_cols[sources, np.arange(len(sources))] += 1.0
        used = [s]
    else:
        V_r, h_r, _ = _orthogonalize_or_empty(V, np.real(W))
        V_c, h_c, _ = _orthogonalize_or_empty(np.hstack([V, V_r]), np.imag(W))
        new_blocks = [V_r, V_c]
        d_after = d + V_r.shape[1] + V_c.shape[1]
        h_r, h_c = _pad(h_r, d_after), _pad(h_c, d_after)
        l_r = s.real * h_r - s.imag * h_c
        l_r[sources, np.arange(len(sources))] += 1.0
        l_c = s.real * h_c + s.imag * h_r
        k_cols = np.hstack([h_r, h_c])
        l_cols = np.hstack([l_r, l_c])
        used = [s, s.conjugate()]

    added = d_after - d
    if added == 0:
        logger.warning("rational basis stagnated at dimension %d (shift %s)", d, s)
        state.stagnated = True
        return state
    for value in used:
        extras.shifts.append(value)
        extras.multiplicity.append(added // len(used) or 1)
    extras.record(d_after, k_cols, l_cols)
    for block in new_blocks:
        if block.shape[1]:
            state.append_block(block)
    logger.debug("rational step with shift %s: dimension %d", s, state.dim)
    return compute_coupling(state)


def _pad(h, rows):
    return np.vstack([h, np.zeros((rows - h.shape[0], h.shape[1]))])


def arnoldi_defect(state, A=None):
    """``|A^T V - V T^T - nu tau^T|_F`` with ``A^T V`` recomputed."""
    operator = state.operator if A is None else as_operator(A)
    V = state.V
    defect = operator.rmatmat(V) - V @ state.T.T
    if state.tau is not None and state.tau.shape[1]:
        defect -= state.nu @ state.tau.T
    return np.linalg.norm(defect)


def rational_coupling(state):
    """Coupling of the leading subspace (all blocks but the last) from the pencil.

    Returns ``(nu_hat, G_T)`` with
    ``A^T V_lead = V_lead T_lead^T + nu_hat G_T``. Requires a square,
    invertible leading pencil block, i.e. no deflated expansions.
    """
    extras = state.extras
    if state.kind != RATIONAL or extras.H is None:
        raise ValueError("rational_coupling needs an expanded rational basis")
    w = state.blocks[-1].shape[1]
    d_lead = state.dim - w
    if extras.H.shape[1] != d_lead:
        raise ValueError(
            f"pencil has {extras.H.shape[1]} columns for a leading subspace of "
            f"dimension {d_lead}"
        )
    K_lead, k_new = extras.H[:d_lead], extras.H[d_lead:]
    l_new = extras.L[d_lead:]
    V = state.V
    V_lead, V_new = V[:, :d_lead], V[:, d_lead:]
    P = state.AtV[:, d_lead:]
    for _ in range(2):
        P = P - V_lead @ (V_lead.T @ P)
    nu_hat, gamma = scipy.linalg.qr(np.hstack([V_new, P]), mode="economic")
    extras.gamma = gamma
    extras.r_next = l_new
    rhs = gamma[:, :w] @ l_new - gamma[:, w:] @ k_new
    G_T = scipy.linalg.solve(K_lead.T, rhs.T).T
    return nu_hat, G_T
