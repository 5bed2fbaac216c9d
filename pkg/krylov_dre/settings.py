"""
Settings
--------

Run configuration for the command-line tool. Files are INI-style::

    [problem]
    name = sym2d
    grid = 20
    p = 5

    [solver]
    method = eksm
    tol = 1e-7
    refine = bdf3-1000

Every key has a default in ``DRE_CONFIG`` and a description in ``DRE_HELP``;
values are converted to the type of the default. Relative file names are
taken relative to the configuration file.
"""
import configparser
import copy
import logging
from pathlib import Path

from .bdf import BdfScheme
from .krylov import EXTENDED, RATIONAL
from .problems import ProblemRecipe
from .projection import SolverConfig

logger = logging.getLogger(__name__)

METHODS = {"rksm": RATIONAL, "eksm": EXTENDED}
PATH_KEYS = ("matrix", "mass", "input", "output")

DRE_CONFIG = {
    "problem": {
        "name": "sym2d",
        "grid": 20,
        "p": 1,
        "s": 1,
        "q": 1,
        "seed": 1,
        "t_final": 1.0,
        "matrix": "",
        "mass": "",
        "input": "",
        "output": "",
    },
    "solver": {
        "method": "rksm",
        "tol": 1e-7,
        "timesteps": 10,
        "reduction_order": 1,
        "refine": "bdf2-100",
        "max_dim": 0,
        "rank_tol": 1e-8,
        "real_shifts_only": False,
        "residual_check_period": 1,
        "backend": "direct",
        "s_min": 0.0,
        "s_max": 0.0,
    },
}
DRE_HELP = {
    "problem": {
        "name": "Problem builder (sym2d, nsym3d, advdiff, zero, matrix_market)",
        "grid": "Interior grid points per side",
        "p": "Rows of C",
        "s": "Columns of B",
        "q": "Columns of the initial factor Z",
        "seed": "Seed of the random inputs",
        "t_final": "Final time",
        "matrix": "Matrix Market file with A (matrix_market problems)",
        "mass": "Matrix Market file with the SPD mass matrix E",
        "input": "Matrix Market file with B",
        "output": "Matrix Market file with C",
    },
    "solver": {
        "method": "rksm (rational) or eksm (extended)",
        "tol": "Backward error at which the reduction phase stops",
        "timesteps": "BDF steps during the reduction phase",
        "reduction_order": "BDF order during the reduction phase",
        "refine": "Refinement scheme, bdf<order>-<steps>",
        "max_dim": "Largest basis dimension, 0 for n",
        "rank_tol": "Relative eigenvalue cutoff of the low-rank factors",
        "real_shifts_only": "Restrict rational shifts to the real axis",
        "residual_check_period": "Iterations between residual evaluations",
        "backend": "Shifted solves: direct or cg",
        "s_min": "Lower spectral bound for the shifts, 0 to estimate",
        "s_max": "Upper spectral bound for the shifts, 0 to estimate",
    },
}


def _coerce(key, raw, default):
    if isinstance(raw, type(default)) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            states = configparser.ConfigParser.BOOLEAN_STATES
            if text.lower() not in states:
                raise ValueError(text)
            return states[text.lower()]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ValueError(
            f"Error processing '{key}': expected {type(default).__name__}, got '{text}'"
        ) from None
    return text


def read_config(path=None, overrides=None):
    """Defaults, updated by the file at ``path`` and then by ``overrides``.

    ``overrides`` maps ``(section, key)`` to a value; ``None`` values are
    skipped.
    """
    settings = copy.deepcopy(DRE_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"configuration file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ValueError(f"Error processing {path}: {exc}") from exc
        for section in parser.sections():
            if section not in settings:
                raise ValueError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in settings[section]:
                    raise ValueError(f"{path}: unknown key '{key}' in [{section}]")
                value = _coerce(key, raw, DRE_CONFIG[section][key])
                if key in PATH_KEYS and value and not Path(value).is_absolute():
                    value = str(path.parent / value)
                settings[section][key] = value
        logger.debug("read configuration %s", path)

    for (section, key), value in (overrides or {}).items():
        if value is None:
            continue
        if key not in settings.get(section, {}):
            raise ValueError(f"unknown setting '{key}' in [{section}]")
        settings[section][key] = _coerce(key, value, DRE_CONFIG[section][key])
    return settings


def recipe_from_settings(settings):
    return ProblemRecipe(**settings["problem"])


def solver_from_settings(settings, method=None):
    solver = settings["solver"]
    method = method or solver["method"]
    if method not in METHODS:
        raise ValueError(f"unknown method '{method}', expected one of {list(METHODS)}")
    bounds = None
    if solver["s_min"] > 0.0 and solver["s_max"] > solver["s_min"]:
        bounds = (solver["s_min"], solver["s_max"])
    return SolverConfig(
        kind=METHODS[method],
        tol=solver["tol"],
        timesteps=solver["timesteps"],
        reduction_order=solver["reduction_order"],
        refinement=BdfScheme.parse(solver["refine"]),
        max_dim=solver["max_dim"] or None,
        rank_tol=solver["rank_tol"],
        real_shifts_only=solver["real_shifts_only"],
        residual_check_period=solver["residual_check_period"],
        bounds=bounds,
    )


def build_from_settings(settings, method=None):
    """``(DreProblem, SolverConfig)`` described by ``settings``."""
    problem = recipe_from_settings(settings).build()
    problem.operator.use_backend(settings["solver"]["backend"])
    return problem, solver_from_settings(settings, method)


def describe():
    """Settings reference, one ``[section] key = default: help`` line per key."""
    lines = []
    for section, values in DRE_CONFIG.items():
        for key, default in values.items():
            lines.append(
                f"[{section}] {key} = {default!s}: {DRE_HELP[section][key]}"
            )
    return "\n".join(lines)
