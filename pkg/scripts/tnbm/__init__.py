"""
Canonical library for training MPS Born machines with regularized Newton sweeps.

All scripts import from this package. No duplicate implementations.

Core modules:
- mps / environments: Mps model, canonical gauge, per-sample environment caches
- loss: Local NLL objective, Riemannian gradient and Hessian, regularizations
- newton: Dense and matrix-free Newton steps on the sphere, retraction
- sweep: Optimizer kinds, epsilon schedule, single-site sweeps, loss traces
- datasets: Bars-and-stripes, MNIST IDX, IRIS CSV, weighted datasets
- cvbm: Continuous embedding layer with trainable isometries
- landscape: 1-D loss landscape slices
- experiment: YAML-configured multi-seed campaigns and comparisons
- provenance_helper: Run manifests and config hashes
"""

from .errors import (
    AlignmentError,
    BoundaryError,
    CacheConsistencyError,
    ConfigError,
    DegenerateError,
    DimensionError,
    FormatError,
    NormalizationError,
    ParseError,
    SingularityError,
    TnbmError,
)
from .mps import (
    Mps,
    amplitude,
    amplitudes,
    canonicalize,
    load_mps,
    probability,
    random_init,
    sample,
    sample_batch,
    save_mps,
)
from .environments import EnvironmentCache, build_cache, move_center, reduced_environment
from .loss import (
    LocalProblem,
    NllResult,
    RegMode,
    TangentVector,
    global_nll,
    grad_free,
    grad_projected,
    hess_dense,
    hvp,
    local_loss,
    project_tangent,
)
from .newton import (
    NewtonConfig,
    NewtonStepResult,
    krylov_solve,
    newton_step_dense,
    newton_step_iterative,
    retract,
)
from .sweep import (
    LossTrace,
    OptimizerKind,
    RegularizationSchedule,
    single_site_step,
    sweep_epoch,
    train,
)
from .datasets import (
    ContinuousRecord,
    Dataset,
    GridImage,
    gen_bas,
    load_iris_csv,
    load_mnist_idx,
    mnist_prepare,
    snake_order,
)
from .cvbm import (
    ContinuousDataset,
    EmbeddingLayer,
    embed,
    isometry_gd_step,
    reduce,
    train_continuous,
)
from .experiment import ExperimentConfig, RunSummary, compare, run_experiment

__all__ = [
    # Errors
    'TnbmError',
    'DimensionError',
    'BoundaryError',
    'CacheConsistencyError',
    'SingularityError',
    'DegenerateError',
    'NormalizationError',
    'FormatError',
    'ParseError',
    'ConfigError',
    'AlignmentError',

    # Model
    'Mps',
    'random_init',
    'canonicalize',
    'amplitude',
    'amplitudes',
    'probability',
    'sample',
    'sample_batch',
    'save_mps',
    'load_mps',
    'EnvironmentCache',
    'build_cache',
    'move_center',
    'reduced_environment',

    # Loss
    'LocalProblem',
    'RegMode',
    'TangentVector',
    'NllResult',
    'global_nll',
    'local_loss',
    'grad_free',
    'project_tangent',
    'grad_projected',
    'hess_dense',
    'hvp',

    # Newton
    'NewtonConfig',
    'NewtonStepResult',
    'newton_step_dense',
    'newton_step_iterative',
    'krylov_solve',
    'retract',

    # Sweeps
    'OptimizerKind',
    'RegularizationSchedule',
    'LossTrace',
    'single_site_step',
    'sweep_epoch',
    'train',

    # Data
    'Dataset',
    'GridImage',
    'ContinuousRecord',
    'gen_bas',
    'snake_order',
    'mnist_prepare',
    'load_mnist_idx',
    'load_iris_csv',

    # Continuous model
    'EmbeddingLayer',
    'ContinuousDataset',
    'embed',
    'reduce',
    'isometry_gd_step',
    'train_continuous',

    # Experiments
    'ExperimentConfig',
    'RunSummary',
    'run_experiment',
    'compare',
]
