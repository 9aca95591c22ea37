#!/usr/bin/env python3
"""
Timing helpers for the cost model of the Newton paths.

hvp() should scale as O(D N_s); the dense Newton solve as O(D^3).
"""

import time
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from .loss import LocalProblem, RegMode, hess_dense, hvp
from .newton import solve_newton_system_dense


@dataclass(frozen=True)
class TimingRecord:
    operation: str
    dim: int
    n_samples: int
    seconds: float


def random_problem(dim: int, n_samples: int, seed: int) -> LocalProblem:
    rng = np.random.default_rng(seed)
    tensor = rng.standard_normal(dim)
    tensor /= np.linalg.norm(tensor)
    envs = rng.standard_normal((n_samples, dim))
    return LocalProblem.build(tensor, envs, np.full(n_samples, 1.0 / n_samples))


def median_time(fn: Callable[[], object], repeats: int) -> float:
    """Median wall time of `repeats` calls after one warm-up call."""
    fn()
    samples = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - started)
    return float(np.median(samples))


def time_hvp(dim: int, n_samples: int, repeats: int = 20, seed: int = 0) -> TimingRecord:
    problem = random_problem(dim, n_samples, seed)
    mode = RegMode.smooth(0.025)
    v = np.random.default_rng(seed + 1).standard_normal(dim)
    seconds = median_time(lambda: hvp(problem, mode, v), repeats)
    return TimingRecord('hvp', dim, n_samples, seconds)


def time_dense_solve(dim: int, n_samples: int, repeats: int = 5, seed: int = 0) -> TimingRecord:
    problem = random_problem(dim, n_samples, seed)
    mode = RegMode.smooth(0.025)
    hessian = hess_dense(problem, mode)
    g = np.random.default_rng(seed + 1).standard_normal(dim)
    g -= (g @ problem.tensor) * problem.tensor
    seconds = median_time(lambda: solve_newton_system_dense(hessian, g, problem.tensor), repeats)
    return TimingRecord('dense_solve', dim, n_samples, seconds)


def fit_exponent(sizes: Sequence[float], seconds: Sequence[float]) -> float:
    """Slope of log(seconds) against log(size)."""
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(seconds)), 1)
    return float(slope)


def hvp_grid(dims: Sequence[int], sample_counts: Sequence[int], repeats: int = 20) -> List[TimingRecord]:
    return [time_hvp(d, n, repeats) for d in dims for n in sample_counts]
