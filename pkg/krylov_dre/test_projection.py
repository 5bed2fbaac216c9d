from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import krylov, projection
from .bdf import BdfScheme, ReducedTrajectory, bdf_integrate, difference_quotient
from .errors import BdfStepError, SolverIterationError
from .oracles import dense_dre_reference, lyapunov_dre_closed_form
from .problems import (
    ProblemRecipe,
    apply_mass_transform,
    gen_advdiff,
    gen_sym2d,
    seeded_inputs,
)


def small_problem(n0=6, t_final=1.0):
    A = gen_sym2d(n0)
    B, C, Z = seeded_inputs(A.shape[0], 1, 1, 1, 3)
    return projection.DreProblem(A, B, C, Z, t_final, "small")


def dense_problem():
    rng = np.random.default_rng(6)
    A = -np.diag(np.arange(2.0, 10.0)) + 0.1 * rng.standard_normal((8, 8))
    B, C, Z = seeded_inputs(8, 1, 1, 1, 9)
    return projection.DreProblem(A, B, C, Z, 0.5)


class TestProblemAndConfig:
    def test_row_input_is_transposed(self):
        A = gen_sym2d(3)
        problem = projection.DreProblem(A, np.ones((1, 9)), np.ones((1, 9)))
        assert problem.B.shape == (9, 1)
        assert problem.Z.shape == (9, 0)
        assert problem.starting_block.shape == (9, 1)

    @pytest.mark.parametrize(
        "B,C,t_final",
        [
            (np.ones((4, 1)), np.ones((1, 9)), 1.0),
            (np.ones((9, 1)), np.ones((1, 4)), 1.0),
            (np.ones((9, 1)), np.ones((1, 9)), 0.0),
        ],
    )
    def test_invalid_problem(self, B, C, t_final):
        with pytest.raises(ValueError):
            projection.DreProblem(gen_sym2d(3), B, C, None, t_final)

    def test_config_parses_scheme(self):
        config = projection.SolverConfig(refinement="bdf3-50")
        assert config.refinement == BdfScheme(3, 50)
        assert config.reduction_scheme == BdfScheme(1, 10)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "polynomial"},
            {"tol": 0.0},
            {"timesteps": 0},
            {"residual_check_period": 0},
            {"max_dim": 0},
            {"refinement": "bdf5-10"},
        ],
    )
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            projection.SolverConfig(**kwargs)


def test_residual_quadrature_without_coupling():
    trajectory = ReducedTrajectory(np.array([0.0, 1.0]), [np.eye(1), np.eye(1)])
    assert projection.residual_quadrature(trajectory, None) == 0.0
    assert projection.residual_quadrature(trajectory, np.zeros((1, 0))) == 0.0


def test_residual_quadrature_rectangle_rule():
    Y = [np.eye(2) * k for k in range(3)]
    trajectory = ReducedTrajectory(np.array([0.0, 0.5, 1.0]), Y)
    tau = np.array([[3.0], [4.0]])
    # h * (|tau^T Y_1| + |tau^T Y_2|) = 0.5 * (5 + 10)
    assert projection.residual_quadrature(trajectory, tau) == pytest.approx(7.5)


def test_backward_error_zero_denominator():
    trajectory = ReducedTrajectory(np.array([0.0, 1.0]), [np.zeros((1, 1))] * 2)
    state = SimpleNamespace(
        T=np.zeros((1, 1)), tau=None, B_m=np.zeros((1, 1)), C=np.zeros((1, 3))
    )
    estimate = projection.backward_error(0.25, trajectory, state)
    assert estimate.backward_error == 0.25
    assert estimate.xi == estimate.psi == 0.0


def test_backward_error_normalization():
    trajectory = ReducedTrajectory(np.array([0.0, 2.0]), [np.zeros((1, 1)), np.eye(1)])
    state = SimpleNamespace(
        T=np.array([[-3.0]]),
        tau=np.array([[4.0]]),
        B_m=np.array([[2.0]]),
        C=np.ones((1, 2)),
    )
    estimate = projection.backward_error(1.0, trajectory, state)
    # t_f |C|^2 = 4, xi = 2 * sqrt(9 + 16) = 10, psi = 2 * 4 = 8
    assert estimate.xi == pytest.approx(10.0)
    assert estimate.psi == pytest.approx(8.0)
    assert estimate.backward_error == pytest.approx(1.0 / 32.0)


def test_residual_split_matches_dense_residual():
    A = gen_advdiff(5)
    rng = np.random.default_rng(12)
    B, C, Z = rng.standard_normal((25, 1)), rng.standard_normal((2, 25)), None
    problem = projection.DreProblem(A, B, C, Z, 0.5)
    state = krylov.init_basis(krylov.RATIONAL, A, B, C, bounds=(5.0, 600.0))
    krylov.rksm_expand(state, 5.0)
    krylov.rksm_expand(state, 80.0)
    scheme = BdfScheme(2, 10)
    Y0 = np.zeros((state.dim, state.dim))
    trajectory = bdf_integrate(state.T, state.B_m, state.C_m, Y0, 0.5, scheme)
    pairs = projection.dense_residual_split_check(problem, state, trajectory)
    floor = 1e-10 * max(lhs for lhs, _ in pairs)
    for lhs, rhs in pairs:
        assert rhs == pytest.approx(lhs, rel=1e-8, abs=floor)


def test_steady_state_is_limit_of_reduced_trajectory():
    problem = small_problem(4)
    state = krylov.init_basis(
        krylov.EXTENDED, problem.operator, problem.B, problem.C, problem.Z
    )
    limit = projection.steady_state(state)
    Y0 = state.Z_m @ state.Z_m.T
    distances = []
    for t_final in (0.1, 1.0, 25.0):
        trajectory = bdf_integrate(
            state.T, state.B_m, state.C_m, Y0, t_final, BdfScheme(1, 5)
        )
        distances.append(np.linalg.norm(trajectory.final - limit))
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] < 1e-6 * np.linalg.norm(limit)


@pytest.mark.parametrize("kind", krylov.KINDS)
def test_solve_converges(kind):
    problem = small_problem()
    config = projection.SolverConfig(
        kind=kind, tol=1e-6, refinement=BdfScheme(2, 20), timesteps=5
    )
    result = projection.solve_dre(problem, config)
    assert result.converged
    reduction = [r for r in result.history if r.phase == "reduction"]
    assert reduction[-1].backward_error < 1e-6
    assert result.history[-1].phase == "refinement"
    np.testing.assert_allclose(
        result.basis.T @ result.basis, np.eye(result.basis.shape[1]), atol=1e-10
    )
    assert len(result.factors) == len(result.times) == 21
    assert result.min_rank <= result.max_rank <= result.basis.shape[1]
    assert result.total_seconds >= result.reduction_seconds


def test_solution_close_to_dense_reference():
    problem = small_problem()
    scheme = BdfScheme(2, 20)
    config = projection.SolverConfig(kind=krylov.EXTENDED, tol=1e-9, refinement=scheme)
    result = projection.solve_dre(problem, config)
    reference = dense_dre_reference(problem, scheme)
    X = result.reconstruct(len(result.times) - 1)
    assert np.linalg.norm(X - reference.final) < 1e-4 * np.linalg.norm(reference.final)


def test_full_dimension_is_exact():
    problem = dense_problem()
    scheme = BdfScheme(2, 20)
    config = projection.SolverConfig(
        kind=krylov.EXTENDED, tol=1e-300, refinement=scheme, rank_tol=1e-13
    )
    result = projection.solve_dre(problem, config)
    assert result.basis.shape[1] == 8
    reference = dense_dre_reference(problem, scheme)
    for j in range(len(result.times)):
        X = result.reconstruct(j)
        scale = max(np.linalg.norm(reference[j]), 1.0)
        assert np.linalg.norm(X - reference[j]) < 1e-8 * scale
    X_inf = result.basis @ projection.steady_state(result.state) @ result.basis.T
    reference_inf = scipy.linalg.solve_continuous_are(
        problem.operator.todense(), problem.B, problem.C.T @ problem.C, np.eye(1)
    )
    assert np.linalg.norm(X_inf - reference_inf) <= 1e-9 * np.linalg.norm(reference_inf)


def test_max_dim_stops_unconverged(caplog):
    problem = small_problem()
    config = projection.SolverConfig(kind=krylov.EXTENDED, tol=1e-14, max_dim=6)
    result = projection.solve_dre(problem, config)
    assert not result.converged
    assert result.basis.shape[1] >= 6
    assert "max_dim reached" in caplog.text


def test_residual_check_period():
    problem = small_problem()
    config = projection.SolverConfig(
        kind=krylov.EXTENDED, tol=1e-6, residual_check_period=2
    )
    result = projection.solve_dre(problem, config)
    reduction = [r for r in result.history if r.phase == "reduction"]
    assert all(r.iteration % 2 == 0 for r in reduction[:-1])


def test_zero_data():
    problem = ProblemRecipe(name="zero", grid=4, t_final=2.0).build()
    result = projection.solve_dre(problem)
    assert result.converged
    assert result.basis.shape == (16, 0)
    assert all(F.shape == (0, 0) for F in result.factors)
    assert result.backward_error == 0.0
    assert result.reconstruct(0).shape == (16, 16)
    assert projection.feedback_gain(result, 0).shape[1] == 16


def test_feedback_gain():
    problem = small_problem()
    config = projection.SolverConfig(kind=krylov.EXTENDED, tol=1e-6)
    result = projection.solve_dre(problem, config)
    j = len(result.times) - 1
    K = projection.feedback_gain(result, j)
    expected = problem.B.T @ result.basis @ result.trajectory[j] @ result.basis.T
    np.testing.assert_allclose(K.todense(), expected, atol=1e-12)
    v = np.ones(problem.n)
    np.testing.assert_allclose(K.apply(v), expected @ v, atol=1e-12)
    assert K.shape == (1, problem.n)


def test_integration_failure_is_reported(monkeypatch):
    def fail(*args, **kwargs):
        raise BdfStepError(3, None)

    monkeypatch.setattr(projection, "bdf_integrate", fail)
    with pytest.raises(SolverIterationError, match="iteration 1"):
        projection.solve_dre(small_problem(4))


def test_reconstruct_refuses_large_problems():
    result = projection.SolveResult(
        basis=np.zeros((600, 1)),
        times=np.zeros(1),
        factors=[np.zeros((1, 1))],
        history=[],
        converged=True,
    )
    with pytest.raises(ValueError):
        result.reconstruct(0)


def test_mass_matrix_problem():
    A_hat = gen_sym2d(4)
    E_hat = scipy.sparse.identity(16) * 2.0
    B, C, Z = seeded_inputs(16, 1, 1, 1, 5)
    problem = apply_mass_transform(A_hat, B, C, E_hat, Z)
    np.testing.assert_allclose(problem.operator.todense(), A_hat.toarray() / 2.0)
    np.testing.assert_allclose(problem.B, B / np.sqrt(2.0))
    result = projection.solve_dre(problem, projection.SolverConfig(tol=1e-6))
    assert result.converged


def reduction_trajectory(result, config):
    state = result.state
    return bdf_integrate(
        state.T,
        state.B_m,
        state.C_m,
        state.Z_m @ state.Z_m.T,
        result.times[-1],
        config.reduction_scheme,
    )


def dense_backward_error(problem, state, trajectory):
    """Backward error with every term formed from the explicit ``X = V Y V^T``."""
    A = problem.operator.todense()
    V = state.V
    B, C = problem.B, problem.C
    h = trajectory.step
    rho = xi = psi = 0.0
    for j in range(1, len(trajectory)):
        X = V @ trajectory[j] @ V.T
        Xdot = V @ difference_quotient(trajectory, j) @ V.T
        AtX = A.T @ X
        XB = X @ B
        R = Xdot - AtX - AtX.T + XB @ XB.T - C.T @ C
        rho += h * np.linalg.norm(R)
        xi += h * np.linalg.norm(AtX)
        psi += h * np.linalg.norm(XB) ** 2
    return rho / (trajectory.t_final * np.linalg.norm(C) ** 2 + 2.0 * xi + psi)


@pytest.fixture(scope="module")
def sym2d_runs():
    problem = ProblemRecipe("sym2d", grid=20, p=5, s=1, q=1, seed=1).build()
    runs = {}
    for kind in krylov.KINDS:
        config = projection.SolverConfig(
            kind=kind, tol=1e-7, refinement=BdfScheme(2, 20)
        )
        runs[kind] = projection.solve_dre(problem, config)
    return runs


@pytest.mark.parametrize("kind", krylov.KINDS)
def test_reported_backward_error_is_the_stopping_value(sym2d_runs, kind):
    result = sym2d_runs[kind]
    assert result.converged
    assert result.backward_error < 1e-7
    last = result.history[-1]
    reduction = [r for r in result.history if r.phase == "reduction"]
    assert last.phase == "refinement"
    assert last.backward_error == reduction[-1].backward_error < 1e-7
    assert last.refined_error == result.refined_error > 0.0
    assert result.estimate.backward_error == result.backward_error
    assert all(r.refined_error is None for r in reduction)


def test_rational_basis_needs_fewer_columns(sym2d_runs):
    dims = {
        kind: [r.basis_dim for r in result.history if r.phase == "reduction"]
        for kind, result in sym2d_runs.items()
    }
    assert dims[krylov.RATIONAL][0] == 6
    assert dims[krylov.EXTENDED][0] == 12
    assert set(np.diff(dims[krylov.RATIONAL])) == {6}
    assert set(np.diff(dims[krylov.EXTENDED])) == {12}
    assert dims[krylov.EXTENDED][-1] <= 150
    assert dims[krylov.RATIONAL][-1] <= 0.75 * dims[krylov.EXTENDED][-1]


@pytest.mark.parametrize("kind", krylov.KINDS)
def test_backward_error_matches_dense_residual(kind):
    problem = ProblemRecipe("sym2d", grid=10, p=2, s=1, q=1, seed=3).build()
    config = projection.SolverConfig(kind=kind, tol=1e-6, refinement=BdfScheme(1, 10))
    result = projection.solve_dre(problem, config)
    assert result.converged
    trajectory = reduction_trajectory(result, config)
    reduced = projection.backward_error(
        projection.residual_quadrature(trajectory, result.state.tau),
        trajectory,
        result.state,
    )
    assert reduced.backward_error == pytest.approx(result.backward_error, rel=1e-10)
    # |R|_F = sqrt(2) |tau^T Y|_F once the BDF steps are solved exactly
    dense = dense_backward_error(problem, result.state, trajectory)
    ratio = dense / reduced.backward_error
    assert 0.1 < ratio < 10.0
    assert ratio == pytest.approx(np.sqrt(2.0), rel=0.05)


@pytest.fixture(scope="module")
def lyapunov_run():
    """``B = 0`` on the 10 x 10 Laplacian with its closed-form solution."""
    A = gen_sym2d(10)
    _, C, _ = seeded_inputs(100, 1, 1, 0, 4)
    problem = projection.DreProblem(A, np.zeros((100, 1)), C, None, 1.0, "lyapunov")
    config = projection.SolverConfig(
        kind=krylov.RATIONAL, tol=1e-9, refinement=BdfScheme(3, 1000)
    )
    result = projection.solve_dre(problem, config)
    exact = {
        j: lyapunov_dre_closed_form(A, C, None, result.times[j])
        for j in range(100, 1001, 100)
    }
    return config, result, exact


def test_lyapunov_case_matches_closed_form(lyapunov_run):
    # before t = 0.1 the modes decaying at rates up to 2000 are not resolved
    # by 1000 steps
    _, result, exact = lyapunov_run
    assert result.converged
    for j, X in exact.items():
        error = np.linalg.norm(result.reconstruct(j) - X)
        assert error <= 1e-5 * np.linalg.norm(X)


def test_refinement_is_more_accurate(lyapunov_run):
    config, result, exact = lyapunov_run
    coarse = reduction_trajectory(result, config)
    V = result.basis
    for k in range(1, len(coarse)):
        X = exact[100 * k]
        coarse_error = np.linalg.norm(V @ coarse[k] @ V.T - X)
        refined_error = np.linalg.norm(result.reconstruct(100 * k) - X)
        assert refined_error <= coarse_error + 1e-12


def test_solution_approaches_riccati_steady_state():
    """Distance to the algebraic Riccati solution shrinks with the horizon.

    The slowest mode of the 10 x 10 Laplacian decays like exp(-2 pi^2 t), so
    the horizons sit where the approach is still visible.
    """
    recipe = ProblemRecipe("sym2d", grid=10, p=1, s=1, q=1, seed=3)
    A = gen_sym2d(10).toarray()
    B, C, _ = seeded_inputs(100, 1, 1, 1, 3)
    limit = scipy.linalg.solve_continuous_are(A, B, C.T @ C, np.eye(1))
    config = projection.SolverConfig(
        kind=krylov.RATIONAL, tol=1e-6, refinement=BdfScheme(2, 40)
    )
    distances = []
    for t_final in (0.02, 0.05, 0.2):
        recipe.t_final = t_final
        result = projection.solve_dre(recipe.build(), config)
        assert result.converged
        distances.append(np.linalg.norm(result.reconstruct(-1) - limit))
    assert distances[0] > distances[1] > distances[2]


@pytest.mark.parametrize(
    "kind,recipe,options",
    [
        (krylov.EXTENDED, ProblemRecipe("sym2d", grid=8, p=2, seed=2), {"tol": 1e-8}),
        (
            krylov.RATIONAL,
            ProblemRecipe("advdiff", grid=8),
            {"tol": 1e-10, "bounds": (5.0, 800.0), "max_dim": 30},
        ),
    ],
)
def test_arnoldi_relation_after_every_expansion(monkeypatch, kind, recipe, options):
    defects = []

    def recording(expand):
        def expand_and_check(state, *args):
            expand(state, *args)
            defects.append(krylov.arnoldi_defect(state))
            return state

        return expand_and_check

    monkeypatch.setattr(projection, "eksm_expand", recording(krylov.eksm_expand))
    monkeypatch.setattr(projection, "rksm_expand", recording(krylov.rksm_expand))
    problem = recipe.build()
    config = projection.SolverConfig(kind=kind, refinement=BdfScheme(1, 5), **options)
    projection.solve_dre(problem, config)
    assert defects
    assert max(defects) <= 1e-8 * scipy.sparse.linalg.norm(problem.A)
