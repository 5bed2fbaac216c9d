"""
Projected DRE solver
--------------------

Two-phase solution of::

    X' = A^T X + X A - X B B^T X + C^T C,    X(0) = Z Z^T

Reduction
    Grow an extended or rational basis ``V``; after each expansion integrate
    the projected equation with a cheap BDF scheme and stop once the
    backward error, computed from reduced quantities only, drops below
    ``tol``.
Refinement
    Re-integrate the final projected equation with an accurate scheme and
    return low-rank factors ``Yhat(t_j)`` with ``X(t_j) ~ V Yhat Yhat^T V^T``.
    Its history row repeats the stopping value and records the backward
    error of the refined trajectory as ``refined_error``.

The residual of ``X_m = V Y V^T`` splits into an inner part, which the BDF
steps drive to zero, and an outer part ``nu tau^T Y`` whose time integral
is the stopping quantity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import time

import numpy as np

from .bdf import (
    BdfScheme,
    ReducedTrajectory,
    bdf_integrate,
    difference_quotient,
    riccati_rhs,
)
from .care import CareProblem, solve_care
from .errors import BdfStepError, SolverIterationError
from .krylov import EXTENDED, KINDS, RATIONAL, eksm_expand, init_basis, rksm_expand
from .linalg import sym_truncate
from .operators import as_operator
from .shifts import next_shift

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-300
RECONSTRUCT_MAX_N = 500


@dataclass
class DreProblem:
    A: object
    B: np.ndarray
    C: np.ndarray
    Z: np.ndarray = None
    t_final: float = 1.0
    name: str = ""
    transform: object = None

    def __post_init__(self):
        self.operator = as_operator(self.A)
        n = self.operator.shape[0]
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if self.B.shape[0] != n and self.B.shape[1] == n:
            self.B = self.B.T
        self.Z = (
            np.zeros((n, 0))
            if self.Z is None
            else np.asarray(self.Z, dtype=float).reshape(n, -1)
        )
        if self.B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got shape {self.B.shape}")
        if self.C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got shape {self.C.shape}")
        if not self.t_final > 0.0:
            raise ValueError(f"final time must be positive, got {self.t_final}")

    @property
    def n(self):
        return self.operator.shape[0]

    @property
    def starting_block(self):
        return np.hstack([self.C.T, self.Z])


@dataclass
class SolverConfig:
    kind: str = RATIONAL
    tol: float = 1e-7
    timesteps: int = 10
    reduction_order: int = 1
    refinement: BdfScheme = field(default_factory=lambda: BdfScheme(2, 100))
    max_dim: int = None
    rank_tol: float = 1e-8
    real_shifts_only: bool = False
    residual_check_period: int = 1
    bounds: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown method '{self.kind}', expected one of {KINDS}")
        if isinstance(self.refinement, str):
            self.refinement = BdfScheme.parse(self.refinement)
        if not self.tol > 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be at least 1, got {self.timesteps}")
        if self.residual_check_period < 1:
            raise ValueError("residual_check_period must be at least 1")
        if self.max_dim is not None and self.max_dim < 1:
            raise ValueError(f"max_dim must be positive, got {self.max_dim}")

    @property
    def reduction_scheme(self):
        return BdfScheme(self.reduction_order, self.timesteps)


@dataclass
class ResidualEstimate:
    rho: float
    xi: float
    psi: float
    backward_error: float


@dataclass
class HistoryRecord:
    iteration: int
    basis_dim: int
    backward_error: float
    wall_seconds: float
    phase: str = "reduction"
    shifts: tuple = ()
    cache: dict = field(default_factory=dict)
    # backward error of the refined trajectory, refinement rows only
    refined_error: float = None


@dataclass
class SolveResult:
    basis: np.ndarray
    times: np.ndarray
    factors: list
    history: list
    converged: bool
    trajectory: ReducedTrajectory = None
    estimate: ResidualEstimate = None
    refined_estimate: ResidualEstimate = None
    state: object = None
    reduction_seconds: float = 0.0
    refinement_seconds: float = 0.0

    @property
    def ranks(self):
        return [F.shape[1] for F in self.factors]

    @property
    def min_rank(self):
        return min(self.ranks, default=0)

    @property
    def max_rank(self):
        return max(self.ranks, default=0)

    @property
    def total_seconds(self):
        return self.reduction_seconds + self.refinement_seconds

    @property
    def backward_error(self):
        """Stopping value of the reduction phase."""
        return self.history[-1].backward_error if self.history else 0.0

    @property
    def refined_error(self):
        return self.refined_estimate.backward_error if self.refined_estimate else 0.0

    def full_factor(self, j):
        """``n x r`` factor ``V Yhat(t_j)``."""
        return self.basis @ self.factors[j]

    def reconstruct(self, j):
        """Dense ``X_m(t_j)``; meant for small test problems."""
        n = self.basis.shape[0]
        if n > RECONSTRUCT_MAX_N:
            raise ValueError(f"refusing to densify a {n}x{n} solution")
        F = self.full_factor(j)
        return F @ F.T


def residual_quadrature(trajectory, tau):
    """``sum_{j=1..l} h |tau^T Y(t_j)|_F``"""
    if tau is None or tau.shape[1] == 0:
        return 0.0
    h = trajectory.step
    terms = [np.linalg.norm(tau.T @ trajectory[j]) for j in range(1, len(trajectory))]
    return float(h * sum(terms))


def backward_error(rho, trajectory, state, B_m=None, t_final=None):
    """Normalize ``rho`` by ``t_f |C|_F^2 + 2 xi + psi``.

    ``xi`` integrates ``|A^T V Y|_F`` through the Arnoldi relation, ``psi``
    integrates ``|Y B_m|_F^2``; both use the rectangle rule of ``rho``.
    """
    B_m = state.B_m if B_m is None else B_m
    t_final = trajectory.t_final if t_final is None else t_final
    h = trajectory.step
    tau = state.tau
    xi = psi = 0.0
    for j in range(1, len(trajectory)):
        Y = trajectory[j]
        inner = np.linalg.norm(state.T.T @ Y) ** 2
        if tau is not None and tau.shape[1]:
            inner += np.linalg.norm(tau.T @ Y) ** 2
        xi += h * np.sqrt(inner)
        psi += h * np.linalg.norm(Y @ B_m) ** 2
    denominator = t_final * np.linalg.norm(state.C) ** 2 + 2.0 * xi + psi
    if denominator < DENOMINATOR_FLOOR:
        error = rho
    else:
        error = rho / denominator
    return ResidualEstimate(float(rho), float(xi), float(psi), float(error))


def residual_split(Y, Ydot, T, B_m, C_m, tau):
    """``(|R_inner|_F, |tau^T Y|_F)`` for one instant.

    ``|R|_F^2 = |R_inner|_F^2 + 2 |tau^T Y|_F^2`` for ``X = V Y V^T``.
    """
    inner = np.linalg.norm(Ydot - riccati_rhs(T, B_m, C_m, Y))
    outer = np.linalg.norm(tau.T @ Y) if tau is not None and tau.shape[1] else 0.0
    return inner, outer


def dense_residual_split_check(problem, state, trajectory, scheme=None):
    """Per instant ``(|R|_F^2 dense, |R_inner|_F^2 + 2 |R_outer|_F^2)``."""
    n = problem.n
    if n > RECONSTRUCT_MAX_N:
        raise ValueError(f"dense residual check needs n <= {RECONSTRUCT_MAX_N}")
    A = problem.operator.todense()
    V = state.V
    B, C = problem.B, problem.C
    pairs = []
    for j in range(1, len(trajectory)):
        Y = trajectory[j]
        Ydot = difference_quotient(trajectory, j, scheme)
        X = V @ Y @ V.T
        XB = X @ B
        R = V @ Ydot @ V.T - A.T @ X - X @ A + XB @ XB.T - C.T @ C
        inner, outer = residual_split(Y, Ydot, state.T, state.B_m, state.C_m, state.tau)
        pairs.append((np.linalg.norm(R) ** 2, inner**2 + 2.0 * outer**2))
    return pairs


def steady_state(state):
    """Stabilizing solution of the projected algebraic Riccati equation."""
    problem = CareProblem(state.T, state.B_m, state.C_m.T @ state.C_m)
    return solve_care(problem)


@dataclass
class FeedbackGain:
    """``K = core V^T`` kept in factored form."""

    core: np.ndarray
    basis: np.ndarray

    @property
    def shape(self):
        return (self.core.shape[0], self.basis.shape[0])

    def apply(self, v):
        return self.core @ (self.basis.T @ v)

    def todense(self):
        return self.core @ self.basis.T


def feedback_gain(result, j):
    """Optimal feedback ``K(t_j) = B_m^T Y(t_j) V^T``."""
    Y = result.trajectory[j]
    B_m = result.state.B_m if result.state is not None else np.zeros((0, 0))
    if Y.shape[0] == 0:
        s = B_m.shape[1] if B_m.ndim == 2 else 0
        return FeedbackGain(np.zeros((s, 0)), result.basis)
    return FeedbackGain(B_m.T @ Y, result.basis)


def _trivial_result(problem, config):
    scheme = config.refinement
    times = np.linspace(0.0, problem.t_final, scheme.steps + 1)
    trajectory = ReducedTrajectory(times, [np.zeros((0, 0)) for _ in times], scheme)
    record = HistoryRecord(0, 0, 0.0, 0.0, "refinement", refined_error=0.0)
    logger.info("zero data: X(t) vanishes identically")
    return SolveResult(
        basis=np.zeros((problem.n, 0)),
        times=times,
        factors=[np.zeros((0, 0)) for _ in times],
        history=[record],
        converged=True,
        trajectory=trajectory,
        estimate=ResidualEstimate(0.0, 0.0, 0.0, 0.0),
        refined_estimate=ResidualEstimate(0.0, 0.0, 0.0, 0.0),
    )


def _integrate(state, t_final, scheme, iteration):
    Y0 = state.Z_m @ state.Z_m.T
    try:
        return bdf_integrate(state.T, state.B_m, state.C_m, Y0, t_final, scheme)
    except BdfStepError as exc:
        raise SolverIterationError(
            iteration, f"{scheme} failed at step {exc.step} (basis dim {state.dim})"
        ) from exc


def solve_dre(problem, config=None):
    """Run the reduction and refinement phases on ``problem``."""
    config = config or SolverConfig()
    start = time.perf_counter()
    if np.linalg.norm(problem.starting_block) == 0.0:
        return _trivial_result(problem, config)

    max_dim = min(config.max_dim or problem.n, problem.n)
    state = init_basis(
        config.kind,
        problem.operator,
        problem.B,
        problem.C,
        problem.Z,
        bounds=config.bounds,
        real_only=config.real_shifts_only,
    )
    scheme = config.reduction_scheme
    history = []
    converged = False
    estimate = None
    iteration = 0
    while True:
        iteration += 1
        trajectory = _integrate(state, problem.t_final, scheme, iteration)
        at_cap = state.dim >= max_dim
        if (
            iteration % config.residual_check_period == 0
            or at_cap
            or state.stagnated
        ):
            rho = residual_quadrature(trajectory, state.tau)
            estimate = backward_error(rho, trajectory, state)
            shifts = tuple(state.extras.shifts) if state.extras else ()
            history.append(
                HistoryRecord(
                    iteration,
                    state.dim,
                    estimate.backward_error,
                    time.perf_counter() - start,
                    "reduction",
                    shifts,
                    problem.operator.cache_stats(),
                )
            )
            logger.info(
                "iteration %d: dim %d, backward error %.3e",
                iteration,
                state.dim,
                estimate.backward_error,
            )
            if estimate.backward_error < config.tol:
                converged = True
                break
        if at_cap or state.stagnated:
            logger.warning(
                "stopping unconverged at dimension %d (%s)",
                state.dim,
                "basis stagnated" if state.stagnated else "max_dim reached",
            )
            break
        if config.kind == EXTENDED:
            eksm_expand(state)
        else:
            rksm_expand(state, next_shift(state, state.extras, trajectory.final))

    reduction_seconds = time.perf_counter() - start
    logger.info("refining with %s at dimension %d", config.refinement, state.dim)
    refined = _integrate(state, problem.t_final, config.refinement, iteration)
    refined_estimate = backward_error(
        residual_quadrature(refined, state.tau), refined, state
    )
    logger.info("refined backward error %.3e", refined_estimate.backward_error)
    history.append(
        HistoryRecord(
            iteration,
            state.dim,
            estimate.backward_error,
            time.perf_counter() - start,
            "refinement",
            tuple(state.extras.shifts) if state.extras else (),
            problem.operator.cache_stats(),
            refined_estimate.backward_error,
        )
    )
    factors = [sym_truncate(Y, config.rank_tol) for Y in refined]
    refinement_seconds = time.perf_counter() - start - reduction_seconds
    return SolveResult(
        basis=state.V,
        times=refined.times,
        factors=factors,
        history=history,
        converged=converged,
        trajectory=refined,
        estimate=estimate,
        refined_estimate=refined_estimate,
        state=state,
        reduction_seconds=reduction_seconds,
        refinement_seconds=refinement_seconds,
    )
