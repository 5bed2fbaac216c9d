"""
BDF integration of the reduced DRE
----------------------------------

Matrix-valued b-step backward differentiation formulas on a uniform grid.
Each implicit step of::

    Y' = T^T Y + Y T - Y B B^T Y + C^T C

is rewritten as an algebraic Riccati equation and handed to
:func:`krylov_dre.care.solve_care`.

Syntax
------

Schemes are written ``bdf<order>-<steps>``, e.g. ``bdf2-100``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import re

import numpy as np

from .care import CareProblem, solve_care
from .errors import BdfStepError, CareSolveError
from .linalg import symmetrize

logger = logging.getLogger(__name__)

# order -> (beta, alphas)
COEFFICIENTS = {
    1: (1.0, (1.0,)),
    2: (2.0 / 3.0, (4.0 / 3.0, -1.0 / 3.0)),
    3: (6.0 / 11.0, (18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0)),
}

_SCHEME_RE = re.compile(r"^\s*bdf\s*([123])\s*-\s*(\d+)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class BdfScheme:
    order: int
    steps: int

    def __post_init__(self):
        if self.order not in COEFFICIENTS:
            raise ValueError(f"BDF order must be 1, 2 or 3, got {self.order}")
        if self.steps < 1:
            raise ValueError(f"BDF needs at least one step, got {self.steps}")

    @property
    def beta(self):
        return COEFFICIENTS[self.order][0]

    @property
    def alphas(self):
        return COEFFICIENTS[self.order][1]

    def step_size(self, t_final):
        return t_final / self.steps

    @classmethod
    def parse(cls, text):
        match = _SCHEME_RE.match(str(text))
        if not match:
            raise ValueError(
                f"Error processing scheme '{text}', expected syntax: bdf<1|2|3>-<steps>"
            )
        return cls(int(match.group(1)), int(match.group(2)))

    def __str__(self):
        return f"bdf{self.order}-{self.steps}"


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    solutions: list = field(default_factory=list)
    scheme: BdfScheme = None
    # instant -> Y' of the sub-grid run that produced a starting value
    start_rates: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, j):
        return self.solutions[j]

    @property
    def step(self):
        return self.times[1] - self.times[0] if len(self.times) > 1 else 0.0

    @property
    def t_final(self):
        return self.times[-1]

    @property
    def final(self):
        return self.solutions[-1]


def riccati_rhs(T, B, C, Y):
    """``T^T Y + Y T - Y B B^T Y + C^T C``"""
    YB = Y @ B
    return T.T @ Y + Y @ T - YB @ YB.T + C.T @ C


def bdf_step_matrices(T, B, C, history, scheme, h):
    """CARE whose stabilizing solution is the next BDF iterate.

    ``history`` holds the last ``scheme.order`` iterates, most recent first.
    """
    if len(history) != scheme.order:
        raise ValueError(
            f"BDF({scheme.order}) step needs {scheme.order} previous iterates, "
            f"got {len(history)}"
        )
    hb = h * scheme.beta
    d = T.shape[0]
    T_hat = hb * T - 0.5 * np.eye(d)
    B_hat = math.sqrt(hb) * B
    Q_hat = hb * (C.T @ C)
    for alpha, Y in zip(scheme.alphas, history):
        Q_hat = Q_hat + alpha * Y
    return CareProblem(T_hat, B_hat, symmetrize(Q_hat))


def _bootstrap(T, B, C, Y0, h, scheme):
    """Starting values ``Y_1 .. Y_{b-1}`` for a b-step scheme.

    A BDF(b-1) run on a sub-grid refined by ``r`` keeps the starting error
    below the global error of the b-step scheme. Returns the values and the
    sub-grid difference quotients at them.
    """
    b = scheme.order
    count = min(b - 1, scheme.steps)
    if count == 0:
        return [], []
    r = 1 if b == 2 else 2 * math.ceil(math.sqrt(scheme.steps))
    sub = BdfScheme(b - 1, count * r)
    start = bdf_integrate(T, B, C, Y0, count * h, sub)
    instants = [k * r for k in range(1, count + 1)]
    return (
        [start[j] for j in instants],
        [difference_quotient(start, j) for j in instants],
    )


def bdf_integrate(T, B, C, Y0, t_final, scheme):
    """Integrate the reduced DRE on ``scheme.steps`` uniform steps."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    d = T.shape[0]
    B = np.asarray(B, dtype=float).reshape(d, -1)
    C = np.asarray(C, dtype=float).reshape(-1, d)
    Y0 = np.asarray(Y0, dtype=float).reshape(d, d)
    if t_final <= 0.0:
        raise ValueError(f"final time must be positive, got {t_final}")
    if d and np.abs(Y0 - Y0.T).max() > 1e-10 * max(np.abs(Y0).max(), 1e-300):
        raise ValueError("initial value must be symmetric")

    h = scheme.step_size(t_final)
    times = np.linspace(0.0, t_final, scheme.steps + 1)
    solutions = [symmetrize(Y0)]
    try:
        starts, rates = _bootstrap(T, B, C, solutions[0], h, scheme)
        solutions.extend(starts)
    except BdfStepError as exc:
        raise BdfStepError(1, ReducedTrajectory(times[:1], solutions, scheme)) from exc

    b = scheme.order
    for k in range(len(solutions), scheme.steps + 1):
        history = solutions[: -b - 1 : -1]
        problem = bdf_step_matrices(T, B, C, history, scheme, h)
        try:
            Y = solve_care(problem, initial=history[0], check_psd=False)
        except CareSolveError as exc:
            partial = ReducedTrajectory(times[:k], solutions, scheme)
            raise BdfStepError(k, partial) from exc
        solutions.append(symmetrize(Y))
    logger.debug("%s: integrated d=%d up to t=%g", scheme, d, t_final)
    start_rates = dict(enumerate(rates, start=1))
    return ReducedTrajectory(times, solutions, scheme, start_rates)


def difference_quotient(trajectory, j, scheme=None):
    """BDF approximation of ``Y'(t_j)``.

    Starting values of a multistep run get the quotient of the sub-grid run
    that produced them; every other instant the b-step quotient.
    """
    if j < 1:
        raise ValueError("no difference quotient at the initial instant")
    if scheme is None or scheme == trajectory.scheme:
        if j in trajectory.start_rates:
            return trajectory.start_rates[j].copy()
    scheme = scheme or trajectory.scheme
    order = min(scheme.order, j)
    beta, alphas = COEFFICIENTS[order]
    Ydot = trajectory[j].copy()
    for i, alpha in enumerate(alphas):
        Ydot -= alpha * trajectory[j - 1 - i]
    return Ydot / (trajectory.step * beta)


def inner_defect(trajectory, T, B, C, scheme=None):
    """``|Y' - F(Y)|_F`` at ``t_1 .. t_l`` with ``Y'`` the BDF quotient."""
    return [
        np.linalg.norm(
            difference_quotient(trajectory, j, scheme)
            - riccati_rhs(T, B, C, trajectory[j])
        )
        for j in range(1, len(trajectory))
    ]
