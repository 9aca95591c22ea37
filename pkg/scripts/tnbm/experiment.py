#!/usr/bin/env python3
"""
Experiment campaigns: YAML configuration, multi-seed optimizer comparisons,
deterministic artifacts and run comparison.

Output layout of a run directory:

    <out>/<optimizer>/seed_<k>.csv       per-seed loss trace
    <out>/<optimizer>/aggregate.csv      mean/std of the NLL per iteration
    <out>/<optimizer>/seed_<k>_mps.npz   final model (output.save_checkpoints)
    <out>/summary.json                   per-optimizer final NLLs and config hash
    <out>/manifest.json                  provenance (the only non-deterministic file)
    <out>/comparison.csv                 written by compare()

Usage:
    from tnbm.experiment import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load("configs/toy_4site.yaml")
    result = run_experiment(cfg, threads=4)
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union, get_args, get_origin

import numpy as np
import yaml
from tqdm import tqdm

from . import provenance_helper
from .cvbm import ContinuousDataset, EmbeddingLayer, train_continuous
from .datasets import (
    MNIST_SIDE,
    Dataset,
    gen_bas,
    load_iris_csv,
    load_mnist_idx,
    mnist_prepare,
    read_dataset_cache,
    sample_training_set,
)
from .errors import AlignmentError, ConfigError
from .mps import Mps, random_init, save_mps
from .newton import NewtonConfig
from .sweep import (
    OPTIMIZER_VARIANTS,
    LossTrace,
    OptimizerKind,
    RegularizationSchedule,
    format_value,
    train,
)

logger = logging.getLogger(__name__)

DATASET_KINDS = ('bas', 'mnist', 'iris', 'cache')
SUMMARY_FILE = 'summary.json'
MANIFEST_FILE = 'manifest.json'
AGGREGATE_FILE = 'aggregate.csv'
COMPARISON_FILE = 'comparison.csv'
AGGREGATE_COLUMNS = ('iteration', 'sweep', 'site', 'mean_nll', 'std_nll', 'n_seeds')


# ============================================================================
# Configuration
# ============================================================================

@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    seeds: List[int] = field(default_factory=lambda: [0])
    description: str = ''


@dataclass(frozen=True)
class DatasetSpec:
    """
    kind: bas | mnist | iris | cache. n_train draws the training multiset
    (bas: with replacement, mnist/iris: without); null uses every record.
    Cache files are used as-is.
    """
    kind: str
    n: int = 4
    snake: bool = False
    path: Optional[str] = None
    out_side: int = 7
    threshold: float = 0.5
    scale: bool = True
    n_features: int = 4
    n_train: Optional[int] = 100
    replace: Optional[bool] = None
    sample_seed: int = 0

    @property
    def draws_with_replacement(self) -> bool:
        if self.replace is not None:
            return self.replace
        return self.kind == 'bas'


@dataclass(frozen=True)
class ModelSpec:
    bond_dim: int = 5
    n_sites: Optional[int] = None


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    label: Optional[str] = None
    learning_rate: float = 0.05
    epsilon0: float = 0.025
    decay: float = 0.5
    floor: float = 1e-8
    bias: float = 0.01

    @property
    def name(self) -> str:
        return self.label or self.kind

    def optimizer(self) -> OptimizerKind:
        return OptimizerKind(self.kind, learning_rate=self.learning_rate, bias=self.bias)

    def schedule(self) -> RegularizationSchedule:
        return RegularizationSchedule(self.epsilon0, self.decay, self.floor)


@dataclass(frozen=True)
class TrainingSpec:
    n_sweeps: int = 5


@dataclass(frozen=True)
class CvbmSpec:
    raw_dim: int = 25
    reduced_dim: int = 3
    eta: float = 0.05
    isometry_steps_per_sweep: int = 1


@dataclass(frozen=True)
class OutputSpec:
    dir: Optional[str] = None
    record_wall_time: bool = False
    save_checkpoints: bool = False
    progress: bool = True


SECTIONS = {
    'experiment': ExperimentSpec,
    'dataset': DatasetSpec,
    'model': ModelSpec,
    'solver': NewtonConfig,
    'training': TrainingSpec,
    'cvbm': CvbmSpec,
    'output': OutputSpec,
}
REQUIRED_SECTIONS = ('experiment', 'dataset', 'optimizers')


def _type_name(annotation) -> str:
    origin = get_origin(annotation)
    if origin is Union:
        return ' or '.join(_type_name(arg) for arg in get_args(annotation))
    if origin is list:
        return f"list of {_type_name(get_args(annotation)[0])}"
    if annotation is type(None):
        return 'null'
    return getattr(annotation, '__name__', str(annotation))


def _type_ok(value, annotation) -> bool:
    origin = get_origin(annotation)
    if origin is Union:
        return any(_type_ok(value, arg) for arg in get_args(annotation))
    if origin is list:
        item = get_args(annotation)[0]
        return isinstance(value, list) and all(_type_ok(v, item) for v in value)
    if annotation is type(None):
        return value is None
    if annotation is bool:
        return isinstance(value, bool)
    if annotation is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if annotation is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if annotation is str:
        return isinstance(value, str)
    return True


def _coerce(value, annotation):
    """YAML 1.1 reads '1e-8' as a string; accept numeric text for float fields."""
    accepts_float = annotation is float or float in get_args(annotation)
    if accepts_float and isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if accepts_float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build_section(section: str, raw, cls, problems: List[str]):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{section}: expected a mapping, got {type(raw).__name__}")
        return None
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            problems.append(f"{section}.{key}: unknown key")
    values = {}
    ok = True
    for name, f in known.items():
        if name in raw:
            value = _coerce(raw[name], f.type)
            if not _type_ok(value, f.type):
                problems.append(f"{section}.{name}: expected {_type_name(f.type)}, got {raw[name]!r}")
                ok = False
                continue
            values[name] = value
        elif f.default is MISSING and f.default_factory is MISSING:
            problems.append(f"{section}.{name}: required key missing")
            ok = False
    if not ok:
        return None
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        problems.append(f"{section}: {e}")
        return None


def _check_dataset(spec: DatasetSpec, problems: List[str]):
    if spec.kind not in DATASET_KINDS:
        problems.append(f"dataset.kind: expected one of {DATASET_KINDS}, got {spec.kind!r}")
        return
    if spec.kind == 'bas' and spec.n < 1:
        problems.append(f"dataset.n: grid side must be >= 1, got {spec.n}")
    if spec.kind != 'bas':
        if spec.path is None:
            problems.append(f"dataset.path: required for kind {spec.kind!r}")
        elif not Path(spec.path).exists():
            problems.append(f"dataset.path: file not found: {spec.path}")
    if spec.kind == 'mnist':
        if spec.out_side < 1 or MNIST_SIDE % spec.out_side:
            problems.append(f"dataset.out_side: must divide {MNIST_SIDE}, got {spec.out_side}")
        if not 0.0 <= spec.threshold <= 1.0:
            problems.append(f"dataset.threshold: must lie in [0, 1], got {spec.threshold}")
    if spec.n_train is not None and spec.n_train < 1:
        problems.append(f"dataset.n_train: must be >= 1, got {spec.n_train}")
    if spec.n_features < 1:
        problems.append(f"dataset.n_features: must be >= 1, got {spec.n_features}")


def _expected_sites(spec: DatasetSpec) -> Optional[int]:
    if spec.kind == 'bas':
        return spec.n * spec.n
    if spec.kind == 'mnist':
        return spec.out_side * spec.out_side
    if spec.kind == 'iris':
        return spec.n_features
    return None


def _check_optimizers(raw, problems: List[str]) -> List[OptimizerSpec]:
    if not isinstance(raw, list) or not raw:
        problems.append("optimizers: expected a non-empty list")
        return []
    specs = []
    for i, entry in enumerate(raw):
        if isinstance(entry, str):
            entry = {'kind': entry}
        section = f"optimizers[{i}]"
        spec = _build_section(section, entry, OptimizerSpec, problems)
        if spec is None:
            continue
        if spec.kind not in OPTIMIZER_VARIANTS:
            problems.append(f"{section}.kind: expected one of {OPTIMIZER_VARIANTS}, got {spec.kind!r}")
            continue
        if not spec.learning_rate > 0:
            problems.append(f"{section}.learning_rate: must be > 0, got {spec.learning_rate}")
        if spec.epsilon0 < 0:
            problems.append(f"{section}.epsilon0: must be >= 0, got {spec.epsilon0}")
        if not 0 < spec.decay <= 1:
            problems.append(f"{section}.decay: must lie in (0, 1], got {spec.decay}")
        if spec.floor < 0:
            problems.append(f"{section}.floor: must be >= 0, got {spec.floor}")
        specs.append(spec)
    names = [s.name for s in specs]
    for name in sorted({n for n in names if names.count(n) > 1}):
        problems.append(f"optimizers: duplicate label {name!r} (set 'label' to disambiguate)")
    return specs


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSpec
    dataset: DatasetSpec
    optimizers: List[OptimizerSpec]
    model: ModelSpec = ModelSpec()
    solver: NewtonConfig = NewtonConfig()
    training: TrainingSpec = TrainingSpec()
    cvbm: CvbmSpec = CvbmSpec()
    output: OutputSpec = OutputSpec()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Validate a parsed configuration.

        Raises:
            ConfigError: listing every offending key (unknown keys included)
        """
        problems: List[str] = []
        if not isinstance(data, dict):
            raise ConfigError([f"config: expected a mapping, got {type(data).__name__}"])
        for key in data:
            if key not in SECTIONS and key != 'optimizers':
                problems.append(f"{key}: unknown section")
        for key in REQUIRED_SECTIONS:
            if key not in data:
                problems.append(f"{key}: required section missing")

        built = {
            name: _build_section(name, data.get(name), section_cls, problems)
            for name, section_cls in SECTIONS.items()
            if name in data or name not in REQUIRED_SECTIONS
        }
        optimizers = _check_optimizers(data.get('optimizers'), problems) if 'optimizers' in data else []

        experiment = built.get('experiment')
        if experiment is not None:
            if not experiment.seeds:
                problems.append("experiment.seeds: must be non-empty")
            elif len(set(experiment.seeds)) != len(experiment.seeds):
                problems.append("experiment.seeds: seeds must be unique")
        dataset = built.get('dataset')
        if dataset is not None:
            _check_dataset(dataset, problems)
        model = built.get('model')
        if model is not None:
            if model.bond_dim < 1:
                problems.append(f"model.bond_dim: must be >= 1, got {model.bond_dim}")
            if model.n_sites is not None:
                expected = _expected_sites(dataset) if dataset is not None else None
                if model.n_sites < 2:
                    problems.append(f"model.n_sites: must be >= 2, got {model.n_sites}")
                elif expected is not None and model.n_sites != expected:
                    problems.append(f"model.n_sites: dataset implies {expected} sites, got {model.n_sites}")
        training = built.get('training')
        if training is not None and training.n_sweeps < 1:
            problems.append(f"training.n_sweeps: must be >= 1, got {training.n_sweeps}")
        cvbm = built.get('cvbm')
        if cvbm is not None:
            if not 1 <= cvbm.reduced_dim <= cvbm.raw_dim:
                problems.append(
                    f"cvbm.reduced_dim: must lie in [1, raw_dim={cvbm.raw_dim}], got {cvbm.reduced_dim}"
                )
            if not cvbm.eta > 0:
                problems.append(f"cvbm.eta: must be > 0, got {cvbm.eta}")
            if cvbm.isometry_steps_per_sweep < 0:
                problems.append(
                    f"cvbm.isometry_steps_per_sweep: must be >= 0, got {cvbm.isometry_steps_per_sweep}"
                )

        if problems:
            raise ConfigError(problems)
        return cls(optimizers=optimizers, **built)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError([f"config: file not found: {path}"])
        try:
            with open(path) as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError([f"config: invalid YAML in {path}: {e}"]) from e
        return cls.from_dict(data or {})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        return provenance_helper.config_hash(self.to_dict())

    @property
    def output_dir(self) -> Path:
        if self.output.dir:
            return Path(self.output.dir)
        return Path('results') / self.experiment.name

    @property
    def is_continuous(self) -> bool:
        return self.dataset.kind == 'iris'

    def with_overrides(
        self,
        out_dir: Optional[Union[str, Path]] = None,
        seeds: Optional[Sequence[int]] = None
    ) -> "ExperimentConfig":
        """Apply CLI overrides; the result is what gets hashed."""
        cfg = self
        if out_dir is not None:
            cfg = replace(cfg, output=replace(cfg.output, dir=str(out_dir)))
        if seeds is not None:
            seeds = list(seeds)
            if not seeds or len(set(seeds)) != len(seeds):
                raise ConfigError([f"experiment.seeds: override must be non-empty and unique, got {seeds}"])
            cfg = replace(cfg, experiment=replace(cfg.experiment, seeds=seeds))
        return cfg


def parse_seed_list(text: str) -> List[int]:
    """'0,1,2' -> [0, 1, 2]."""
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise ConfigError([f"experiment.seeds: invalid seed list {text!r}"]) from e


# ============================================================================
# Data
# ============================================================================

def load_training_data(cfg: ExperimentConfig) -> Union[Dataset, ContinuousDataset]:
    """Build the training set shared by every optimizer and seed."""
    spec = cfg.dataset
    rng = np.random.default_rng(spec.sample_seed)
    if spec.kind == 'cache':
        data = read_dataset_cache(spec.path)
    elif spec.kind == 'iris':
        records = load_iris_csv(spec.path, scale=spec.scale, n_features=spec.n_features)
        if spec.n_train is not None and spec.n_train < len(records):
            picks = np.sort(rng.choice(len(records), size=spec.n_train, replace=False))
            records = [records[i] for i in picks]
        data = ContinuousDataset.from_records(records, raw_dim=cfg.cvbm.raw_dim)
    else:
        if spec.kind == 'bas':
            pool = gen_bas(spec.n, snake=spec.snake)
        else:
            images = load_mnist_idx(spec.path)
            pool = np.array([mnist_prepare(image, spec.out_side, spec.threshold) for image in images])
        if spec.n_train is None:
            data = pool if isinstance(pool, Dataset) else Dataset.from_samples(pool)
        else:
            data = sample_training_set(pool, spec.n_train, rng, replace=spec.draws_with_replacement)
    logger.info(f"📊 Training set: {data.n_samples} distinct samples on {data.n_sites} sites")
    return data


# ============================================================================
# Runs
# ============================================================================

@dataclass
class SeedResult:
    optimizer: str
    seed: int
    trace: Optional[LossTrace] = None
    mps: Optional[Mps] = None
    layer: Optional[EmbeddingLayer] = None
    error: Optional[str] = None
    wall_time: float = 0.0

    @property
    def failed(self) -> bool:
        return self.error is not None or self.trace is None or not np.isfinite(self.trace.final_nll)


def run_seed(
    cfg: ExperimentConfig,
    opt_spec: OptimizerSpec,
    seed: int,
    data: Union[Dataset, ContinuousDataset]
) -> SeedResult:
    """Train one realization; failures are captured, not raised."""
    started = time.perf_counter()
    opt = opt_spec.optimizer()
    schedule = opt_spec.schedule()
    try:
        if isinstance(data, ContinuousDataset):
            mps = random_init(data.n_sites, cfg.cvbm.reduced_dim, cfg.model.bond_dim, seed)
            layer = EmbeddingLayer.initialize(
                data.n_sites, seed, cfg.cvbm.raw_dim, cfg.cvbm.reduced_dim
            )
            mps, layer, trace = train_continuous(
                mps, layer, data, opt, schedule, cfg.training.n_sweeps, cfg.solver,
                eta=cfg.cvbm.eta,
                isometry_steps_per_sweep=cfg.cvbm.isometry_steps_per_sweep,
                record_wall_time=cfg.output.record_wall_time
            )
        else:
            layer = None
            mps = random_init(data.n_sites, data.site_dim, cfg.model.bond_dim, seed)
            mps, trace = train(
                mps, data, opt, schedule, cfg.training.n_sweeps, cfg.solver, seed,
                record_wall_time=cfg.output.record_wall_time
            )
    except Exception as e:
        logger.error(f"❌ {opt_spec.name} seed {seed} failed: {type(e).__name__}: {e}")
        return SeedResult(
            opt_spec.name, seed, error=f"{type(e).__name__}: {e}",
            wall_time=time.perf_counter() - started
        )
    return SeedResult(opt_spec.name, seed, trace, mps, layer, wall_time=time.perf_counter() - started)


@dataclass
class RunSummary:
    """
    Per-optimizer statistics over seeds.

    mean/std are taken across seeds at every iteration (population std).
    wall_time is not persisted in summary.json (it lives in the manifest).
    """
    optimizer: str
    seeds: List[int]
    final_nll: Dict[int, float]
    iterations: np.ndarray
    sweeps: np.ndarray
    sites: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    config_hash: str
    wall_time: float = float('nan')
    failed_seeds: List[int] = field(default_factory=list)

    @classmethod
    def from_traces(
        cls,
        optimizer: str,
        traces: Dict[int, LossTrace],
        config_hash: str,
        wall_time: float = float('nan'),
        failed_seeds: Sequence[int] = ()
    ) -> "RunSummary":
        if not traces:
            raise ValueError(f"No traces to summarize for {optimizer}")
        seeds = sorted(traces)
        lengths = {len(traces[s]) for s in seeds}
        if len(lengths) != 1:
            raise AlignmentError(f"Traces of {optimizer} differ in length: {sorted(lengths)}")
        reference = traces[seeds[0]]
        values = np.array([traces[s].nll for s in seeds])
        return cls(
            optimizer=optimizer,
            seeds=seeds,
            final_nll={s: float(traces[s].final_nll) for s in seeds},
            iterations=reference.column('iteration'),
            sweeps=reference.column('sweep'),
            sites=reference.column('site'),
            mean=values.mean(axis=0),
            std=values.std(axis=0),
            config_hash=config_hash,
            wall_time=wall_time,
            failed_seeds=sorted(failed_seeds),
        )

    @property
    def mean_final_nll(self) -> float:
        return float(np.mean(list(self.final_nll.values())))

    @property
    def std_final_nll(self) -> float:
        return float(np.std(list(self.final_nll.values())))

    def to_json(self) -> Dict[str, Any]:
        return {
            "seeds": self.seeds,
            "final_nll": {str(s): v for s, v in self.final_nll.items()},
            "mean_final_nll": self.mean_final_nll,
            "std_final_nll": self.std_final_nll,
            "n_iterations": int(self.iterations.size),
            "failed_seeds": self.failed_seeds,
            "config_hash": self.config_hash,
        }

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write <out_dir>/<optimizer>/aggregate.csv and merge into summary.json."""
        out_dir = Path(out_dir)
        path = out_dir / self.optimizer / AGGREGATE_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(AGGREGATE_COLUMNS)
            for row in zip(self.iterations, self.sweeps, self.sites, self.mean, self.std):
                writer.writerow([format_value(v) for v in row] + [len(self.seeds)])
        summary_path = out_dir / SUMMARY_FILE
        document = _read_summary_file(summary_path) if summary_path.exists() else {"optimizers": {}}
        document["config_hash"] = self.config_hash
        document["optimizers"][self.optimizer] = self.to_json()
        _write_json(summary_path, document)
        return path

    @classmethod
    def load(cls, out_dir: Union[str, Path], optimizer: str) -> "RunSummary":
        out_dir = Path(out_dir)
        document = _read_summary_file(out_dir / SUMMARY_FILE)
        if optimizer not in document.get("optimizers", {}):
            raise FileNotFoundError(f"No summary for optimizer {optimizer!r} in {out_dir}")
        entry = document["optimizers"][optimizer]
        columns = {name: [] for name in AGGREGATE_COLUMNS}
        with open(out_dir / optimizer / AGGREGATE_FILE, newline='') as f:
            for row in csv.DictReader(f):
                for name in AGGREGATE_COLUMNS:
                    columns[name].append(row[name])
        return cls(
            optimizer=optimizer,
            seeds=[int(s) for s in entry["seeds"]],
            final_nll={int(s): float(v) for s, v in entry["final_nll"].items()},
            iterations=np.array(columns['iteration'], dtype=np.int64),
            sweeps=np.array(columns['sweep'], dtype=np.int64),
            sites=np.array(columns['site'], dtype=np.int64),
            mean=np.array(columns['mean_nll'], dtype=np.float64),
            std=np.array(columns['std_nll'], dtype=np.float64),
            config_hash=entry.get("config_hash", document.get("config_hash", "")),
            failed_seeds=[int(s) for s in entry.get("failed_seeds", [])],
        )


def _read_summary_file(path: Path) -> Dict[str, Any]:
    with open(path) as f:
        return json.load(f)


def _write_json(path: Path, document: Dict[str, Any]):
    with open(path, 'w') as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write('\n')


def load_summaries(out_dir: Union[str, Path]) -> List[RunSummary]:
    """All optimizer summaries of a run directory, in file order."""
    document = _read_summary_file(Path(out_dir) / SUMMARY_FILE)
    return [RunSummary.load(out_dir, name) for name in document.get("optimizers", {})]


@dataclass
class ExperimentResult:
    out_dir: Path
    summaries: Dict[str, RunSummary]
    failures: List[Tuple[str, int, str]]

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_jobs(cfg: ExperimentConfig, data, threads: int) -> Dict[Tuple[str, int], SeedResult]:
    jobs = [(spec, seed) for spec in cfg.optimizers for seed in cfg.experiment.seeds]
    results = {}
    progress = dict(total=len(jobs), desc="Realizations", disable=not cfg.output.progress)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_seed, cfg, spec, seed, data) for spec, seed in jobs]
            for future in tqdm(as_completed(futures), **progress):
                result = future.result()
                results[(result.optimizer, result.seed)] = result
    else:
        for spec, seed in tqdm(jobs, **progress):
            results[(spec.name, seed)] = run_seed(cfg, spec, seed, data)
    return results


def run_experiment(
    config: Union[ExperimentConfig, str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    seeds: Optional[Sequence[int]] = None,
    threads: int = 1
) -> ExperimentResult:
    """
    Train every configured optimizer on every seed and write the artifacts.

    Failed realizations are recorded in the manifest; everything that did
    succeed is still written.

    Args:
        config: ExperimentConfig or path to a YAML file
        out_dir: Overrides output.dir
        seeds: Overrides experiment.seeds
        threads: Worker processes for independent realizations

    Returns:
        ExperimentResult with one RunSummary per optimizer
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    cfg = cfg.with_overrides(out_dir, seeds)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    effective = cfg.to_dict()
    digest = provenance_helper.config_hash(effective)
    seeds = cfg.experiment.seeds
    planned = [
        f"{spec.name}/seed_{seed}.csv" for spec in cfg.optimizers for seed in seeds
    ] + [f"{spec.name}/{AGGREGATE_FILE}" for spec in cfg.optimizers] + [SUMMARY_FILE]
    manifest = provenance_helper.create_run_manifest(cfg.experiment.name, effective, planned)

    logger.info("=" * 60)
    logger.info(f"EXPERIMENT: {cfg.experiment.name}")
    logger.info("=" * 60)
    logger.info(f"Optimizers: {[spec.name for spec in cfg.optimizers]}")
    logger.info(f"Seeds: {seeds}, sweeps: {cfg.training.n_sweeps}, bond_dim: {cfg.model.bond_dim}")
    logger.info(f"Config hash: {digest[:12]}")

    started = time.perf_counter()
    data = load_training_data(cfg)
    results = _run_jobs(cfg, data, threads)

    summary_path = out / SUMMARY_FILE
    if summary_path.exists():
        summary_path.unlink()
    summaries: Dict[str, RunSummary] = {}
    failures: List[Tuple[str, int, str]] = []
    step_events: Dict[str, Dict[str, Dict[str, int]]] = {}
    for spec in cfg.optimizers:
        traces = {}
        failed = []
        wall = 0.0
        for seed in seeds:
            result = results[(spec.name, seed)]
            wall += result.wall_time
            if result.trace is not None:
                relative = f"{spec.name}/seed_{seed}.csv"
                result.trace.to_csv(out / relative)
                provenance_helper.update_run_manifest(manifest, relative, "seed_trace", success=True)
                traces[seed] = result.trace
                step_events.setdefault(spec.name, {})[str(seed)] = result.trace.step_events()
            if result.mps is not None and cfg.output.save_checkpoints:
                relative = f"{spec.name}/seed_{seed}_mps.npz"
                save_mps(result.mps, out / relative)
                provenance_helper.update_run_manifest(manifest, relative, "checkpoint", success=True)
            if result.failed:
                reason = result.error or f"non-finite final NLL {result.trace.final_nll}"
                failed.append(seed)
                failures.append((spec.name, seed, reason))
                provenance_helper.update_run_manifest(
                    manifest, f"{spec.name}/seed_{seed}.csv", "seed_trace",
                    success=result.trace is not None, error=reason
                )
        if not traces:
            logger.error(f"🚨 No realization of {spec.name} produced a trace")
            continue
        summary = RunSummary.from_traces(spec.name, traces, digest, wall, failed)
        summary.save(out)
        provenance_helper.update_run_manifest(
            manifest, f"{spec.name}/{AGGREGATE_FILE}", "aggregate", success=True
        )
        summaries[spec.name] = summary
        logger.info(
            f"📊 {spec.name}: final NLL {summary.mean_final_nll:.4f} ± {summary.std_final_nll:.4f}"
        )

    if summaries:
        document = _read_summary_file(summary_path)
        document["experiment"] = cfg.experiment.name
        _write_json(summary_path, document)
        provenance_helper.update_run_manifest(manifest, SUMMARY_FILE, "run_summary", success=True)

    wall_time = time.perf_counter() - started
    status = "ok" if not failures else "partial"
    provenance_helper.finalize_run_manifest(
        manifest, status, wall_time,
        {
            "wall_time_per_optimizer": {name: s.wall_time for name, s in summaries.items()},
            "step_events": step_events,
        }
    )
    provenance_helper.save_manifest(manifest, out / MANIFEST_FILE)

    if failures:
        logger.warning(f"⚠️  {len(failures)} realization(s) failed; partial results in {out}")
    else:
        logger.info(f"✅ Experiment complete: {out}")
    return ExperimentResult(out, summaries, failures)


# ============================================================================
# Comparison
# ============================================================================

@dataclass
class ComparisonTable:
    """
    Aligned mean/std curves; delta is each mean minus the first summary's mean.
    """
    labels: List[str]
    iterations: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    delta: np.ndarray
    ranking: List[Tuple[str, float]]

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ['iteration']
        for label in self.labels:
            header += [f"mean_{label}", f"std_{label}", f"delta_{label}"]
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row, iteration in enumerate(self.iterations):
                values = [iteration]
                for k in range(len(self.labels)):
                    values += [self.mean[row, k], self.std[row, k], self.delta[row, k]]
                writer.writerow([format_value(v) for v in values])
        return path


def _unique_labels(summaries: Sequence[RunSummary]) -> List[str]:
    labels = []
    for summary in summaries:
        label = summary.optimizer
        suffix = 2
        while label in labels:
            label = f"{summary.optimizer}#{suffix}"
            suffix += 1
        labels.append(label)
    return labels


def compare(
    summaries: Sequence[RunSummary],
    out_path: Optional[Union[str, Path]] = None
) -> ComparisonTable:
    """
    Align summaries on their iteration axis and rank them by mean final NLL.

    Raises:
        AlignmentError: iteration axes differ (no silent truncation)
    """
    if not summaries:
        raise AlignmentError("Nothing to compare")
    reference = summaries[0].iterations
    for summary in summaries[1:]:
        if summary.iterations.shape != reference.shape or not np.array_equal(summary.iterations, reference):
            raise AlignmentError(
                f"Iteration axis of {summary.optimizer} ({summary.iterations.size} points) "
                f"does not match {summaries[0].optimizer} ({reference.size} points)"
            )
    labels = _unique_labels(summaries)
    mean = np.column_stack([s.mean for s in summaries])
    std = np.column_stack([s.std for s in summaries])
    with np.errstate(invalid='ignore'):
        delta = mean - mean[:, :1]
    ranking = sorted(
        ((label, s.mean_final_nll) for label, s in zip(labels, summaries)),
        key=lambda item: item[1]
    )
    table = ComparisonTable(labels, reference.copy(), mean, std, delta, ranking)
    if out_path is not None:
        table.to_csv(out_path)
        logger.info(f"💾 Comparison saved: {out_path}")
    logger.info("📊 Final NLL ranking:")
    for position, (label, value) in enumerate(ranking, start=1):
        logger.info(f"   {position}. {label}: {value:.6f}")
    return table
