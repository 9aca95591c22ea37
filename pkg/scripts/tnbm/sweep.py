#!/usr/bin/env python3
"""
Single-site sweeps: one optimizer step per site visit, back and forth along the chain.

An epoch visits sites 0, 1, ..., N-1, N-2, ..., 0 (2N - 1 visits; the end
sites are optimized once per epoch). If the center starts at N - 1 the order
is mirrored. After every step the unregularized NLL is read off the cached
overlaps at the center, so the trace costs O(N_s) per record.
"""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .environments import EnvironmentCache, build_cache, move_center
from .errors import CacheConsistencyError, DegenerateError, SingularityError
from .loss import (
    DEFAULT_BIAS,
    LocalProblem,
    RegMode,
    grad_projected,
    local_loss,
    mode_label,
    nll_from_amplitudes,
)
from .mps import Mps
from .newton import NewtonConfig, newton_step, retract

logger = logging.getLogger(__name__)

STEEPEST_DESCENT = 'steepest_descent'
NEWTON = 'newton'
REG_NEWTON_SMOOTH = 'reg_newton_smooth'
REG_NEWTON_BIAS = 'reg_newton_bias'
OPTIMIZER_VARIANTS = (STEEPEST_DESCENT, NEWTON, REG_NEWTON_SMOOTH, REG_NEWTON_BIAS)

TRACE_COLUMNS = ('iteration', 'sweep', 'site', 'nll', 'reg_loss', 'epsilon', 'inner_iters', 'seconds')
INT_COLUMNS = frozenset({'iteration', 'sweep', 'site', 'inner_iters'})


@dataclass(frozen=True)
class OptimizerKind:
    """
    Optimizer used at every site visit.

    Args:
        variant: One of steepest_descent, newton, reg_newton_smooth, reg_newton_bias
        learning_rate: Step size eta (steepest descent only)
        bias: Overlap shift eps_b (reg_newton_bias only)
    """
    variant: str
    learning_rate: float = 0.05
    bias: float = DEFAULT_BIAS

    def __post_init__(self):
        if self.variant not in OPTIMIZER_VARIANTS:
            raise ValueError(f"Unknown optimizer {self.variant!r}; expected one of {OPTIMIZER_VARIANTS}")
        if self.variant == STEEPEST_DESCENT and not self.learning_rate > 0:
            raise ValueError(f"Learning rate must be > 0, got {self.learning_rate}")

    @classmethod
    def steepest_descent(cls, learning_rate: float = 0.05) -> "OptimizerKind":
        return cls(STEEPEST_DESCENT, learning_rate=learning_rate)

    @classmethod
    def newton(cls) -> "OptimizerKind":
        return cls(NEWTON)

    @classmethod
    def reg_newton_smooth(cls) -> "OptimizerKind":
        return cls(REG_NEWTON_SMOOTH)

    @classmethod
    def reg_newton_bias(cls, bias: float = DEFAULT_BIAS) -> "OptimizerKind":
        return cls(REG_NEWTON_BIAS, bias=bias)

    @property
    def name(self) -> str:
        return self.variant

    def epsilon_for(self, schedule: "RegularizationSchedule", sweep_index: int) -> float:
        """Regularization constant used during the given sweep (0 when unregularized)."""
        if self.variant == REG_NEWTON_SMOOTH:
            return schedule.epsilon(sweep_index)
        if self.variant == REG_NEWTON_BIAS:
            return self.bias
        return 0.0

    def reg_mode(self, epsilon: float) -> RegMode:
        if self.variant == REG_NEWTON_SMOOTH:
            return RegMode.smooth(epsilon, abs_correct=True)
        if self.variant == REG_NEWTON_BIAS:
            return RegMode.bias(epsilon)
        return RegMode.none()


@dataclass(frozen=True)
class RegularizationSchedule:
    """eps(k) = max(epsilon0 * decay^k, floor) for sweep k."""
    epsilon0: float = 0.025
    decay: float = 0.5
    floor: float = 1e-8

    def __post_init__(self):
        if self.epsilon0 < 0:
            raise ValueError(f"epsilon0 must be >= 0, got {self.epsilon0}")
        if not 0 < self.decay <= 1:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.floor < 0:
            raise ValueError(f"floor must be >= 0, got {self.floor}")

    def epsilon(self, sweep_index: int) -> float:
        return max(self.epsilon0 * self.decay ** sweep_index, self.floor)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    sweep: int
    site: int
    nll: float
    reg_loss: float
    epsilon: float
    inner_iters: int
    seconds: float = 0.0


@dataclass(frozen=True)
class StepDiagnostics:
    site: int
    nll: float
    reg_loss: float
    epsilon: float
    inner_iters: int = 0
    hvp_calls: int = 0
    step_norm: float = 0.0
    fallback_used: bool = False
    skipped: bool = False
    singular_samples: Tuple[int, ...] = ()


@dataclass
class LossTrace:
    """
    Per-step records, one per single-site optimization.

    The step counters are kept in memory only; the CSV holds the records.
    """
    records: List[TraceRecord] = field(default_factory=list)
    skipped_steps: int = 0
    fallback_steps: int = 0
    hvp_calls: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def append(self, record: TraceRecord):
        self.records.append(record)

    def extend(self, other: "LossTrace"):
        self.records.extend(other.records)
        self.skipped_steps += other.skipped_steps
        self.fallback_steps += other.fallback_steps
        self.hvp_calls += other.hvp_calls

    def count_step(self, diag: "StepDiagnostics"):
        self.skipped_steps += int(diag.skipped)
        self.fallback_steps += int(diag.fallback_used)
        self.hvp_calls += diag.hvp_calls

    def step_events(self) -> Dict[str, int]:
        return {
            "skipped_steps": self.skipped_steps,
            "fallback_steps": self.fallback_steps,
            "hvp_calls": self.hvp_calls,
        }

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def nll(self) -> np.ndarray:
        return self.column('nll')

    @property
    def final_nll(self) -> float:
        return self.records[-1].nll if self.records else math.nan

    def sweep_means(self) -> np.ndarray:
        """Mean NLL per sweep, in sweep order."""
        sweeps = self.column('sweep')
        values = self.nll
        return np.array([values[sweeps == k].mean() for k in np.unique(sweeps)])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(TRACE_COLUMNS)
            for record in self.records:
                writer.writerow([format_value(v) for v in astuple_ordered(record)])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "LossTrace":
        records = []
        with open(path, newline='') as f:
            for row in csv.DictReader(f):
                values = {
                    name: int(row[name]) if name in INT_COLUMNS else float(row[name])
                    for name in TRACE_COLUMNS
                }
                records.append(TraceRecord(**values))
        return cls(records)


def astuple_ordered(record: TraceRecord) -> Tuple:
    data = asdict(record)
    return tuple(data[name] for name in TRACE_COLUMNS)


def format_value(value) -> str:
    """Shortest round-trip text for floats; ints verbatim."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def visit_order(n_sites: int, start: int) -> List[int]:
    """Site visits of one epoch starting from an end of the chain."""
    forward = list(range(n_sites)) + list(range(n_sites - 2, -1, -1))
    if start == 0:
        return forward
    if start == n_sites - 1:
        return [n_sites - 1 - s for s in forward]
    raise CacheConsistencyError(f"Sweeps start at an end of the chain, center is at {start}")


def single_site_step(
    mps: Mps,
    cache: EnvironmentCache,
    site: int,
    opt: OptimizerKind,
    epsilon: float,
    cfg: NewtonConfig,
    *,
    weights: np.ndarray
) -> Tuple[Mps, StepDiagnostics]:
    """
    One optimizer step on the center core.

    Args:
        mps: Model with its center at `site`
        cache: Environments positioned at `site`
        site: Site to optimize
        opt: Optimizer kind
        epsilon: Regularization constant for this step
        cfg: Newton solver settings
        weights: Sample frequencies aligned with the cache rows

    Returns:
        (updated Mps, diagnostics); a step hitting a singular overlap is skipped
    """
    cache.check_position(mps)
    if site != mps.center:
        raise CacheConsistencyError(f"Step requested at site {site}, center is {mps.center}")

    core = mps.cores[site]
    envs = cache.reduced_environments()
    problem = LocalProblem.build(core, envs, weights)
    mode = opt.reg_mode(epsilon)

    inner_iters = 0
    hvp_calls = 0
    fallback = False
    skipped = False
    step = np.zeros(problem.dim)
    try:
        if opt.variant == STEEPEST_DESCENT:
            step = -opt.learning_rate * grad_projected(problem, mode).components
        else:
            result = newton_step(problem, mode, cfg)
            step = result.step.components
            inner_iters = result.inner_iters
            hvp_calls = result.hvp_calls
            fallback = result.fallback_used
    except SingularityError as e:
        skipped = True
        logger.warning(f"⚠️  Step skipped at site {site}: {e}")

    if skipped or not np.any(step):
        new_tensor = problem.tensor
    else:
        try:
            new_tensor = retract(problem.tensor, step)
        except DegenerateError as e:
            skipped = True
            new_tensor = problem.tensor
            logger.warning(f"⚠️  Step skipped at site {site}: {e}")

    new_mps = mps.with_core(site, new_tensor.reshape(core.shape), center=site)
    updated = problem.with_tensor(new_tensor)
    nll = nll_from_amplitudes(updated.overlaps, problem.weights, float(new_tensor @ new_tensor))
    if nll.singular_samples:
        logger.warning(f"⚠️  Zero probability at site {site} for samples {list(nll.singular_samples)}")
    reg_loss = local_loss(updated, mode)
    logger.debug(
        f"site {site} [{mode_label(mode)}]: nll={nll.value:.6f} reg_loss={reg_loss:.6f} "
        f"inner={inner_iters} |step|={np.linalg.norm(step):.3e}"
    )
    return new_mps, StepDiagnostics(
        site=site,
        nll=nll.value,
        reg_loss=reg_loss,
        epsilon=epsilon,
        inner_iters=inner_iters,
        hvp_calls=hvp_calls,
        step_norm=float(np.linalg.norm(step)),
        fallback_used=fallback,
        skipped=skipped,
        singular_samples=nll.singular_samples,
    )


def sweep_epoch(
    mps: Mps,
    dataset,
    opt: OptimizerKind,
    schedule: RegularizationSchedule,
    sweep_index: int,
    cfg: NewtonConfig,
    *,
    iteration_offset: int = 0,
    site_vectors: Optional[np.ndarray] = None,
    record_wall_time: bool = False
) -> Tuple[Mps, LossTrace]:
    """
    One forward and backward pass of single-site steps.

    Args:
        mps: Canonical model with its center at an end of the chain
        dataset: Provides `weights` and `site_vectors(site_dim)`
        opt: Optimizer kind
        schedule: Regularization schedule (smooth variant only)
        sweep_index: Index k of this epoch (selects eps_k)
        cfg: Newton solver settings
        iteration_offset: Global iteration index of the first record
        site_vectors: Overrides dataset.site_vectors (continuous inputs)
        record_wall_time: Fill the seconds column

    Returns:
        (model with center at the starting end, trace segment of 2N - 1 records)
    """
    if site_vectors is None:
        site_vectors = dataset.site_vectors(mps.site_dim)
    weights = np.asarray(dataset.weights, dtype=np.float64)
    epsilon = opt.epsilon_for(schedule, sweep_index)
    order = visit_order(mps.n_sites, mps.center)
    cache = build_cache(mps, site_vectors)
    segment = LossTrace()

    for position, site in enumerate(order):
        if position > 0:
            direction = 'right' if site > mps.center else 'left'
            mps, cache = move_center(mps, cache, direction)
        started = time.perf_counter()
        mps, diag = single_site_step(mps, cache, site, opt, epsilon, cfg, weights=weights)
        elapsed = time.perf_counter() - started
        segment.append(TraceRecord(
            iteration=iteration_offset + position,
            sweep=sweep_index,
            site=site,
            nll=diag.nll,
            reg_loss=diag.reg_loss,
            epsilon=epsilon,
            inner_iters=diag.inner_iters,
            seconds=elapsed if record_wall_time else 0.0,
        ))
        segment.count_step(diag)
    if segment.skipped_steps or segment.fallback_steps:
        logger.warning(
            f"⚠️  Sweep {sweep_index}: {segment.skipped_steps} skipped step(s), "
            f"{segment.fallback_steps} gradient fallback(s)"
        )
    return mps, segment


def train(
    mps: Mps,
    dataset,
    opt: OptimizerKind,
    schedule: RegularizationSchedule,
    n_sweeps: int,
    cfg: NewtonConfig,
    seed: Optional[int] = None,
    *,
    record_wall_time: bool = False,
    progress: bool = False
) -> Tuple[Mps, LossTrace]:
    """
    Run n_sweeps epochs.

    The procedure itself draws no random numbers; `seed` identifies the
    realization in logs (initialization is seeded by the caller).
    """
    if n_sweeps < 1:
        raise ValueError(f"n_sweeps must be >= 1, got {n_sweeps}")
    trace = LossTrace()
    label = opt.name if seed is None else f"{opt.name} seed {seed}"
    for k in tqdm(range(n_sweeps), desc=label, disable=not progress, leave=False):
        mps, segment = sweep_epoch(
            mps, dataset, opt, schedule, k, cfg,
            iteration_offset=len(trace), record_wall_time=record_wall_time
        )
        trace.extend(segment)
        logger.debug(f"{label}: sweep {k} mean NLL {segment.nll.mean():.6f}")
    return mps, trace
