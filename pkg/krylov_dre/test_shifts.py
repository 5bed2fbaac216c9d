import math

import numpy as np
import pytest

from . import krylov, shifts
from .problems import gen_advdiff, gen_sym2d


def rational_state(A, bounds, real_only=False):
    rng = np.random.default_rng(8)
    n = A.shape[0]
    return krylov.init_basis(
        krylov.RATIONAL,
        A,
        rng.standard_normal((n, 1)),
        rng.standard_normal((1, n)),
        rng.standard_normal((n, 1)),
        bounds=bounds,
        real_only=real_only,
    )


def test_objective_value():
    value = shifts.shift_objective([2.0], [1.0], [1.0], [-1.0])
    assert value[0] == pytest.approx(-math.log(3.0))


def test_objective_at_used_shift():
    value = shifts.shift_objective([1.0, 2.0], [1.0], [2], [-1.0])
    assert value[0] == -np.inf
    assert np.isfinite(value[1])


def test_first_shift_is_lower_bound():
    state = rational_state(gen_advdiff(5), (3.0, 900.0))
    assert shifts.next_shift(state) == 3.0


def test_complex_shift_in_right_half_plane():
    state = rational_state(gen_advdiff(6), (5.0, 800.0))
    krylov.rksm_expand(state, shifts.next_shift(state))
    for _ in range(3):
        s = shifts.next_shift(state)
        assert s.real > 0.0
        assert s.imag >= 0.0
        krylov.rksm_expand(state, s)
    assert len(state.extras.shifts) >= 4


def test_real_only_shifts_stay_in_bounds():
    state = rational_state(gen_advdiff(6), (5.0, 800.0), real_only=True)
    krylov.rksm_expand(state, shifts.next_shift(state))
    for _ in range(3):
        s = shifts.next_shift(state)
        assert s.imag == 0.0
        assert 5.0 <= s.real <= 800.0
        krylov.rksm_expand(state, s)


def test_symmetric_problem_gets_real_shifts():
    state = rational_state(gen_sym2d(6), (10.0, 400.0))
    krylov.rksm_expand(state, shifts.next_shift(state))
    s = shifts.next_shift(state)
    assert s.imag == 0.0
    krylov.rksm_expand(state, s)
    assert state.dim == 3 * 2


def test_closed_loop_ritz_uses_feedback():
    state = rational_state(gen_sym2d(4), (10.0, 200.0))
    Y = np.eye(state.dim)
    expected = np.linalg.eigvals(state.T - state.B_m @ state.B_m.T)
    np.testing.assert_allclose(
        np.sort_complex(shifts.closed_loop_ritz(state, Y)),
        np.sort_complex(expected),
    )
    np.testing.assert_allclose(
        np.sort_complex(shifts.closed_loop_ritz(state)),
        np.sort_complex(np.linalg.eigvals(state.T)),
    )


def test_real_shift_maximizes_objective_on_fine_grid():
    state = rational_state(gen_sym2d(6), (10.0, 400.0), real_only=True)
    for _ in range(3):
        krylov.rksm_expand(state, shifts.next_shift(state))
    s = shifts.next_shift(state)
    extras = state.extras
    ritz = shifts.closed_loop_ritz(state)
    ritz = -np.abs(ritz.real) + 1j * ritz.imag

    def objective(z):
        return shifts.shift_objective(z, extras.shifts, extras.multiplicity, ritz)

    grid = objective(np.linspace(10.0, 400.0, 40001))
    best = grid[np.isfinite(grid)].max()
    assert objective([s])[0] >= best - 1e-2 * max(1.0, abs(best))
