"""
Adaptive shifts
---------------

Greedy pole selection for the rational basis. The next shift is the point of
the mirrored spectral region where the current rational function is
smallest, i.e. where::

    sum_j w_j log|z - s_j| - sum_i log|z - lambda_i|

is largest. ``s_j`` are the shifts used so far (``w_j`` the number of basis
columns each produced) and ``lambda_i`` the Ritz values of the closed-loop
projection ``T - B_m B_m^T Y(t_f)``. The region is the convex hull of the
mirrored Ritz values and the spectral bounds; with real shifts only it
collapses to the interval they span.
"""
import logging

import numpy as np
import scipy.linalg
from scipy.spatial import ConvexHull, QhullError

logger = logging.getLogger(__name__)

SAMPLES_PER_GAP = 50
SAMPLES_PER_EDGE = 20


def shift_objective(z, shifts, weights, ritz):
    z = np.asarray(z, dtype=complex)
    value = np.zeros(z.shape)
    with np.errstate(divide="ignore"):
        for s, w in zip(shifts, weights):
            value += w * np.log(np.abs(z - s))
        for lam in ritz:
            value -= np.log(np.abs(z - lam))
    return value


def closed_loop_ritz(state, Y_tf=None):
    M = state.T
    if Y_tf is not None and state.B_m.shape[1]:
        M = M - state.B_m @ (state.B_m.T @ Y_tf)
    return scipy.linalg.eigvals(M)


def _mirror(ritz):
    return np.abs(ritz.real) + 1j * np.abs(ritz.imag)


def _real_candidates(points, shifts, bounds):
    nodes = np.unique(
        np.concatenate([np.asarray(bounds), points.real, np.real(shifts)])
    )
    nodes = nodes[(nodes >= bounds[0]) & (nodes <= bounds[1])]
    if nodes.size < 2:
        return nodes.astype(complex)
    samples = [
        np.linspace(a, b, SAMPLES_PER_GAP, endpoint=False)
        for a, b in zip(nodes[:-1], nodes[1:])
    ]
    return np.concatenate(samples + [nodes[-1:]]).astype(complex)


def _hull_candidates(points, bounds):
    cloud = np.concatenate([points, np.asarray(bounds, dtype=complex)])
    xy = np.column_stack([cloud.real, cloud.imag])
    hull = ConvexHull(xy)
    samples = []
    for a, b in hull.simplices:
        t = np.linspace(0.0, 1.0, SAMPLES_PER_EDGE)
        samples.append(cloud[a] + t * (cloud[b] - cloud[a]))
    return np.concatenate(samples)


def next_shift(state, extras=None, Y_tf=None):
    """Next pole of the rational basis, in the right half-plane."""
    extras = extras or state.extras
    s_min, s_max = extras.bounds
    if not extras.shifts:
        return complex(s_min)

    ritz = closed_loop_ritz(state, Y_tf)
    mirrored = _mirror(ritz)
    ritz = -np.abs(ritz.real) + 1j * ritz.imag
    shifts = np.asarray(extras.shifts, dtype=complex)
    if extras.real_only:
        candidates = _real_candidates(mirrored, shifts, (s_min, s_max))
    else:
        try:
            candidates = _hull_candidates(mirrored, (s_min, s_max))
        except (QhullError, ValueError):
            candidates = _real_candidates(mirrored, shifts, (s_min, s_max))

    if candidates.size:
        values = shift_objective(candidates, shifts, extras.multiplicity, ritz)
        values[~np.isfinite(values)] = -np.inf
    if not candidates.size or not np.isfinite(values).any():
        logger.debug("no admissible shift candidate, using the midpoint")
        return complex(0.5 * (s_min + s_max))

    best = candidates[int(np.argmax(values))]
    if extras.real_only or abs(best.imag) <= 1e-12 * abs(best):
        best = complex(best.real)
    else:
        best = complex(best.real, abs(best.imag))
    logger.debug("next shift %s", best)
    return best
