#!/usr/bin/env python3
"""
One-dimensional slices of the single-site loss landscape.

Along T(s) = (T + s u) / ||T + s u|| for a tangent direction u, every overlap
(T(s), w_x) changes sign at most once, and the unregularized loss has a
logarithmic pole exactly there. Smoothing with eps replaces each pole with a
finite bump.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateError
from .loss import LocalProblem, project_tangent
from .sweep import format_value

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LandscapeSlice:
    steps: np.ndarray
    overlaps: np.ndarray
    loss_none: np.ndarray
    loss_smooth: Dict[float, np.ndarray]

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        epsilons = sorted(self.loss_smooth, reverse=True)
        header = (
            ['step']
            + [f"overlap_{i}" for i in range(self.overlaps.shape[1])]
            + ['loss_none']
            + [f"loss_eps_{eps:g}" for eps in epsilons]
        )
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row, s in enumerate(self.steps):
                values = [s, *self.overlaps[row], self.loss_none[row]]
                values += [self.loss_smooth[eps][row] for eps in epsilons]
                writer.writerow([format_value(v) for v in values])
        return path


def _unit_direction(problem: LocalProblem, direction: np.ndarray) -> np.ndarray:
    u = project_tangent(problem.tensor, direction).components
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise DegenerateError("Slice direction has no tangent component")
    return u / norm


def slice_points(problem: LocalProblem, direction: np.ndarray, steps: Sequence[float]) -> np.ndarray:
    """(S, D) unit points T(s) along the normalized tangent direction."""
    u = _unit_direction(problem, direction)
    t = problem.tensor / np.linalg.norm(problem.tensor)
    points = t[None, :] + np.asarray(steps, dtype=np.float64)[:, None] * u[None, :]
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def landscape_slice(
    problem: LocalProblem,
    direction: np.ndarray,
    steps: Sequence[float],
    epsilons: Sequence[float] = (0.1, 0.025, 1e-3)
) -> LandscapeSlice:
    """
    Overlaps and losses along a tangent slice.

    Args:
        problem: Local problem defining T, w_x and n_x
        direction: Slice direction (projected to the tangent space and normalized)
        steps: Slice parameters s
        epsilons: Smoothing constants for the regularized curves

    Returns:
        LandscapeSlice; loss_none is inf where an overlap vanishes
    """
    steps = np.asarray(steps, dtype=np.float64)
    overlaps = slice_points(problem, direction, steps) @ problem.envs.T
    squared = overlaps ** 2
    with np.errstate(divide='ignore'):
        loss_none = -(np.log(squared) @ problem.weights)
    loss_smooth = {
        float(eps): -(np.log(squared + eps) @ problem.weights) for eps in epsilons
    }
    return LandscapeSlice(steps, overlaps, loss_none, loss_smooth)


def zero_crossings(
    problem: LocalProblem,
    direction: np.ndarray,
    s_min: float,
    s_max: float,
    n_grid: int = 1001
) -> List[Tuple[int, float]]:
    """
    Parameters s in [s_min, s_max] where some overlap changes sign.

    Sign changes are bracketed on a uniform grid and refined with brentq.

    Returns:
        Sorted list of (sample_index, s)
    """
    grid = np.linspace(s_min, s_max, n_grid)
    u = _unit_direction(problem, direction)
    t = problem.tensor / np.linalg.norm(problem.tensor)
    overlaps = slice_points(problem, direction, grid) @ problem.envs.T
    roots = []
    for sample in range(problem.n_samples):
        w = problem.envs[sample]

        def overlap(s, w=w):
            point = t + s * u
            return float(point @ w) / np.linalg.norm(point)

        values = overlaps[:, sample]
        exact = np.flatnonzero(values == 0.0)
        for index in exact:
            roots.append((sample, float(grid[index])))
        brackets = np.flatnonzero(values[:-1] * values[1:] < 0)
        for index in brackets:
            root = brentq(overlap, grid[index], grid[index + 1], xtol=1e-14)
            roots.append((sample, float(root)))
    return sorted(roots, key=lambda item: (item[1], item[0]))


def vanishing_overlap_problem(dim: int, n_samples: int, seed: int) -> Tuple[LocalProblem, np.ndarray]:
    """
    Random unit-T problem whose first overlap is exactly zero, plus a tangent
    direction along which that overlap changes sign at s = 0.

    T has no component along the first basis vector, which is the first
    sample's environment and the slice direction.

    Returns:
        (problem, direction)
    """
    rng = np.random.default_rng(seed)
    tensor = rng.standard_normal(dim)
    tensor[0] = 0.0
    tensor /= np.linalg.norm(tensor)
    envs = rng.standard_normal((n_samples, dim))
    envs[0] = 0.0
    envs[0, 0] = 1.0
    weights = np.full(n_samples, 1.0 / n_samples)
    direction = np.zeros(dim)
    direction[0] = 1.0
    return LocalProblem.build(tensor, envs, weights), direction
