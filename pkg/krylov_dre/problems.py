"""
Problem suite
-------------

Benchmark DREs and the registry that builds them from a
:class:`ProblemRecipe`.

``sym2d``
    Five-point Laplacian on the unit square.
``nsym3d``
    Variable-coefficient convection-diffusion on the unit cube.
``advdiff``
    ``Lap w - 10 x w_x - 100 y w_y`` on the unit square with
    ``B = C^T = ones / sqrt(n)``.
``zero``
    The Laplacian with all data zero.
``matrix_market``
    ``Ahat`` (and optionally a mass matrix ``Ehat``, ``Bhat``, ``Chat``) read
    from files.

All grids are uniform with ``n0`` interior points per side, mesh
``h = 1 / (n0 + 1)``, homogeneous Dirichlet boundary and ``x`` varying
fastest in the unknown numbering. Diffusion coefficients are sampled at cell
interfaces, convection is differenced centrally.

New problems register a builder with::

    @register_problem("name")
    def build(recipe):
        return DreProblem(...)
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
import io
import logging
import math
from pathlib import Path
import warnings

import numpy as np
import scipy.sparse

from .factorization import canonical_csr
from .linalg import max_real_part
from .matrix_market import load_dense, load_matrix_market
from .operators import MassTransformOperator
from .projection import DreProblem

logger = logging.getLogger(__name__)

PROBLEMS = {}


def register_problem(name):
    """Decorator to register a problem builder"""

    def dec(func):
        if name in PROBLEMS:
            warnings.warn("krylov-dre: overriding problem '%s'" % name)
        PROBLEMS[name] = func
        return func

    return dec


@dataclass
class ProblemRecipe:
    name: str = "sym2d"
    grid: int = 20
    p: int = 1
    s: int = 1
    q: int = 1
    seed: int = 1
    t_final: float = 1.0
    matrix: str = ""
    mass: str = ""
    input: str = ""
    output: str = ""

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError(f"grid size must be at least 2, got {self.grid}")
        if min(self.p, self.s) < 1 or self.q < 0:
            raise ValueError(
                f"need p, s >= 1 and q >= 0, got p={self.p} s={self.s} q={self.q}"
            )
        if not self.t_final > 0.0:
            raise ValueError(f"final time must be positive, got {self.t_final}")

    def to_config(self):
        """``[problem]`` section that reads back into an equal recipe."""
        parser = configparser.ConfigParser()
        parser["problem"] = {f.name: str(getattr(self, f.name)) for f in fields(self)}
        out = io.StringIO()
        parser.write(out)
        return out.getvalue()

    def build(self):
        return build_problem(self)


def _one(*coords):
    return np.ones_like(coords[0])


def grid_coordinates(n0, dim):
    """Coordinates of the interior grid points, ``x`` varying fastest."""
    points = np.arange(1, n0 + 1) / (n0 + 1)
    mesh = np.meshgrid(*([points] * dim), indexing="ij")
    return [axis.ravel(order="F") for axis in mesh]


def _convection_diffusion(n0, dim, diffusion, convection=None):
    """``sum_k (d_k u_k)_k + c_k u_k`` by second-order differences."""
    if n0 < 2:
        raise ValueError(f"need at least 2 grid points per side, got {n0}")
    h = 1.0 / (n0 + 1)
    inv_h2 = float((n0 + 1) ** 2)
    coords = grid_coordinates(n0, dim)
    size = n0**dim
    index = np.arange(size)
    position = np.unravel_index(index, (n0,) * dim, order="F")

    rows, cols, vals = [index], [index], []
    diagonal = np.zeros(size)
    for axis in range(dim):
        stride = n0**axis
        wind = convection[axis](*coords) / (2.0 * h) if convection else 0.0
        for sign in (1, -1):
            shifted = list(coords)
            shifted[axis] = coords[axis] + 0.5 * sign * h
            coupling = diffusion[axis](*shifted) * inv_h2
            diagonal -= coupling
            inside = (position[axis] + sign >= 0) & (position[axis] + sign < n0)
            rows.append(index[inside])
            cols.append(index[inside] + sign * stride)
            vals.append((coupling + sign * wind)[inside])
    vals.insert(0, diagonal)
    A = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    return canonical_csr(A)


def gen_sym2d(n0):
    """Negative 2D Laplacian stencil, ``n = n0**2``."""
    if n0 < 2:
        raise ValueError(f"need at least 2 grid points per side, got {n0}")
    inv_h2 = float((n0 + 1) ** 2)
    T = scipy.sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n0, n0)) * inv_h2
    eye = scipy.sparse.identity(n0)
    return canonical_csr(scipy.sparse.kron(eye, T) + scipy.sparse.kron(T, eye))


def gen_nsym3d(n0, diffusion=None, convection=None):
    """Nonsymmetric 3D convection-diffusion operator, ``n = n0**3``."""
    if diffusion is None:
        diffusion = (
            lambda x, y, z: np.exp(x * y),
            lambda x, y, z: np.exp(x * y),
            _one,
        )
    if convection is None:
        convection = (
            lambda x, y, z: (1.0 + x) * np.exp(-x),
            lambda x, y, z: y**2,
            lambda x, y, z: 10.0 * (x + y),
        )
    return _convection_diffusion(n0, 3, diffusion, convection)


def gen_advdiff(n0, wind=(10.0, 100.0)):
    """``Lap w - wind_x x w_x - wind_y y w_y``, ``n = n0**2``."""
    convection = (
        lambda x, y: -wind[0] * x,
        lambda x, y: -wind[1] * y,
    )
    return _convection_diffusion(n0, 2, (_one, _one), convection)


def gershgorin_max_real(A):
    """Rightmost point of the Gershgorin discs of ``A``."""
    A = scipy.sparse.csr_matrix(A)
    diagonal = A.diagonal()
    radii = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diagonal)
    return float((diagonal + radii).max())


def max_real_eigenvalue(A):
    """Spectral abscissa from the dense real Schur form."""
    if scipy.sparse.issparse(A):
        A = A.toarray()
    return float(max_real_part(np.asarray(A, dtype=float)))


def _standard_normal(rng, shape):
    count = math.prod(shape)
    half = (count + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    draws = np.concatenate(
        [radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)]
    )
    return draws[:count].reshape(shape)


def seeded_inputs(n, p, s, q, seed):
    """Normally distributed ``B`` (n x s), ``C`` (p x n), ``Z`` (n x q).

    PCG64 uniforms turned into normals by the Box-Muller transform, drawn
    in the order ``B``, ``C``, ``Z`` from one stream. The output depends on
    nothing but the arguments.
    """
    if min(n, p, s) < 1 or q < 0:
        raise ValueError(f"invalid dimensions n={n} p={p} s={s} q={q}")
    rng = np.random.Generator(np.random.PCG64(seed))
    B = _standard_normal(rng, (n, s))
    C = _standard_normal(rng, (p, n))
    Z = _standard_normal(rng, (n, q))
    return B, C, Z


def advection_diffusion_inputs(n):
    B = np.ones((n, 1)) / math.sqrt(n)
    return B, B.T.copy(), np.zeros((n, 0))


@dataclass
class MassTransform:
    """``E = F F^T``; ``A = F^{-1} Ahat F^{-T}``, ``B = F^{-1} Bhat``,
    ``C = Chat F^{-T}``."""

    A_hat: object
    E_hat: object
    B_hat: np.ndarray
    C_hat: np.ndarray
    operator: MassTransformOperator = None

    def __post_init__(self):
        if self.operator is None:
            self.operator = MassTransformOperator(self.A_hat, self.E_hat)

    @property
    def factor(self):
        return self.operator.factor

    @property
    def B(self):
        return self.factor.solve_lower(np.asarray(self.B_hat, dtype=float))

    @property
    def C(self):
        C_hat = np.atleast_2d(np.asarray(self.C_hat, dtype=float))
        return self.factor.solve_lower(C_hat.T).T


def apply_mass_transform(A_hat, B_hat, C_hat, E_hat, Z=None, t_final=1.0, name=""):
    """Standard-form problem whose ``A`` is applied through ``E``'s factor."""
    transform = MassTransform(A_hat, E_hat, B_hat, C_hat)
    return DreProblem(
        transform.operator,
        transform.B,
        transform.C,
        Z,
        t_final=t_final,
        name=name,
        transform=transform,
    )


@register_problem("sym2d")
def _build_sym2d(recipe):
    A = gen_sym2d(recipe.grid)
    B, C, Z = seeded_inputs(A.shape[0], recipe.p, recipe.s, recipe.q, recipe.seed)
    return DreProblem(A, B, C, Z, recipe.t_final, "sym2d")


@register_problem("nsym3d")
def _build_nsym3d(recipe):
    A = gen_nsym3d(recipe.grid)
    B, C, Z = seeded_inputs(A.shape[0], recipe.p, recipe.s, recipe.q, recipe.seed)
    return DreProblem(A, B, C, Z, recipe.t_final, "nsym3d")


@register_problem("advdiff")
def _build_advdiff(recipe):
    A = gen_advdiff(recipe.grid)
    B, C, Z = advection_diffusion_inputs(A.shape[0])
    return DreProblem(A, B, C, Z, recipe.t_final, "advdiff")


@register_problem("zero")
def _build_zero(recipe):
    A = gen_sym2d(recipe.grid)
    n = A.shape[0]
    B, _, _ = seeded_inputs(n, recipe.p, recipe.s, recipe.q, recipe.seed)
    return DreProblem(
        A, B, np.zeros((recipe.p, n)), np.zeros((n, recipe.q)), recipe.t_final, "zero"
    )


def _required(path, what):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


@register_problem("matrix_market")
def _build_matrix_market(recipe):
    if not recipe.matrix:
        raise ValueError("matrix_market problems need 'matrix' set to a .mtx file")
    A_hat = load_matrix_market(_required(recipe.matrix, "matrix"))
    n = A_hat.shape[0]
    B, C, Z = seeded_inputs(n, recipe.p, recipe.s, recipe.q, recipe.seed)
    if recipe.input:
        B = load_dense(_required(recipe.input, "input")).reshape(n, -1)
    if recipe.output:
        C = load_dense(_required(recipe.output, "output")).reshape(-1, n)
    name = Path(recipe.matrix).stem
    if recipe.mass:
        E_hat = load_matrix_market(_required(recipe.mass, "mass"))
        logger.info("%s: mass matrix transform with %s", name, recipe.mass)
        return apply_mass_transform(A_hat, B, C, E_hat, Z, recipe.t_final, name)
    return DreProblem(A_hat, B, C, Z, recipe.t_final, name)


def build_problem(recipe):
    try:
        builder = PROBLEMS[recipe.name]
    except KeyError:
        raise ValueError(
            f"unknown problem '{recipe.name}', expected one of {sorted(PROBLEMS)}"
        ) from None
    problem = builder(recipe)
    logger.info("built %s: n=%d", recipe.name, problem.n)
    return problem
