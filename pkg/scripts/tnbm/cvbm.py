#!/usr/bin/env python3
"""
Continuous-variable Born machine layer.

Each real input v in [0, 1] is mapped to a fixed raw feature vector of
L^2([0, 1])-orthonormal Legendre polynomials

    e_k(v) = sqrt(2k + 1) P_k(2v - 1),    k = 0 .. raw_dim - 1

and reduced per site by a trainable isometry U_i (raw_dim x reduced_dim,
orthonormal columns): v_i = U_i^T e(v). The reduced vectors replace the
one-hot site vectors of the discrete model. Isometries are trained by
gradient descent followed by a polar retraction onto the Stiefel manifold.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg
from tqdm import tqdm

from .environments import site_gradients
from .errors import DimensionError, SingularityError
from .loss import KIND_BIAS, KIND_NONE, KIND_SMOOTH, RegMode, nll_from_amplitudes
from .mps import Mps, amplitudes
from .newton import NewtonConfig
from .sweep import LossTrace, OptimizerKind, RegularizationSchedule, sweep_epoch

logger = logging.getLogger(__name__)

RAW_DIM = 25
REDUCED_DIM = 3
ISOMETRY_TOL = 1e-10
DEFAULT_ISOMETRY_LR = 0.05


def embed_batch(values, raw_dim: int = RAW_DIM) -> np.ndarray:
    """
    Legendre features for an array of inputs.

    Returns:
        Array of shape values.shape + (raw_dim,)
    """
    values = np.asarray(values, dtype=np.float64)
    outside = (values < 0.0) | (values > 1.0)
    if np.any(outside):
        logger.warning(f"⚠️  Clamping {int(outside.sum())} input values to [0, 1]")
        values = np.clip(values, 0.0, 1.0)
    scale = np.sqrt(2.0 * np.arange(raw_dim) + 1.0)
    return legendre.legvander(2.0 * values - 1.0, raw_dim - 1) * scale


def embed(value: float, raw_dim: int = RAW_DIM) -> np.ndarray:
    """Raw feature vector of one input value."""
    return embed_batch(np.array([value]), raw_dim)[0]


def _orthonormality_defect(isometry: np.ndarray) -> float:
    gram = isometry.T @ isometry
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


@dataclass(frozen=True, eq=False)
class EmbeddingLayer:
    """
    Per-site isometries, stacked as an (N, raw_dim, reduced_dim) array.
    """
    isometries: np.ndarray

    def __post_init__(self):
        isometries = np.array(self.isometries, dtype=np.float64)
        if isometries.ndim != 3 or isometries.shape[1] < isometries.shape[2]:
            raise DimensionError(
                f"Isometries must have shape (N, raw_dim, reduced_dim) with raw_dim >= reduced_dim, "
                f"got {isometries.shape}"
            )
        for site, isometry in enumerate(isometries):
            defect = _orthonormality_defect(isometry)
            if defect > ISOMETRY_TOL:
                raise ValueError(f"Isometry at site {site} is not orthonormal (defect {defect:.2e})")
        isometries.flags.writeable = False
        object.__setattr__(self, 'isometries', isometries)

    @property
    def n_sites(self) -> int:
        return self.isometries.shape[0]

    @property
    def raw_dim(self) -> int:
        return self.isometries.shape[1]

    @property
    def reduced_dim(self) -> int:
        return self.isometries.shape[2]

    @classmethod
    def initialize(
        cls,
        n_sites: int,
        seed: int,
        raw_dim: int = RAW_DIM,
        reduced_dim: int = REDUCED_DIM
    ) -> "EmbeddingLayer":
        """Random isometries from the QR factor of a seeded Gaussian matrix."""
        rng = np.random.default_rng(seed)
        isometries = []
        for _ in range(n_sites):
            q, r = linalg.qr(rng.standard_normal((raw_dim, reduced_dim)), mode='economic')
            signs = np.sign(np.diag(r))
            signs[signs == 0] = 1.0
            isometries.append(q * signs)
        return cls(np.array(isometries))

    @classmethod
    def coordinate(
        cls,
        n_sites: int,
        raw_dim: int = RAW_DIM,
        reduced_dim: int = REDUCED_DIM
    ) -> "EmbeddingLayer":
        """Isometries selecting the first reduced_dim raw features."""
        return cls(np.tile(np.eye(raw_dim, reduced_dim), (n_sites, 1, 1)))

    def max_defect(self) -> float:
        return max(_orthonormality_defect(u) for u in self.isometries)


def reduce(features: np.ndarray, layer: EmbeddingLayer, site: int) -> np.ndarray:
    """U_site^T features."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (layer.raw_dim,):
        raise DimensionError(f"Expected {layer.raw_dim} raw features, got shape {features.shape}")
    if not 0 <= site < layer.n_sites:
        raise DimensionError(f"Site {site} outside [0, {layer.n_sites - 1}]")
    return layer.isometries[site].T @ features


@dataclass(frozen=True, eq=False)
class ContinuousDataset:
    """
    Continuous records with frequencies and cached raw features.

    Args:
        values: (N_s, N) inputs in [0, 1]
        weights: (N_s,) frequencies summing to 1
        raw_dim: Feature dimension of the fixed embedding
    """
    values: np.ndarray
    weights: np.ndarray
    raw_dim: int = RAW_DIM

    def __post_init__(self):
        values = np.atleast_2d(np.array(self.values, dtype=np.float64))
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if values.shape[0] != weights.size:
            raise DimensionError(f"{values.shape[0]} records but {weights.size} weights")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"Weights must sum to 1, got {weights.sum():.15f}")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, '_features', embed_batch(values, self.raw_dim))

    @classmethod
    def from_records(cls, records: Sequence, raw_dim: int = RAW_DIM) -> "ContinuousDataset":
        """Uniformly weighted dataset from ContinuousRecord objects."""
        if not records:
            raise ValueError("No records to build a dataset from")
        values = np.array([r.features for r in records], dtype=np.float64)
        return cls(values, np.full(len(records), 1.0 / len(records)), raw_dim)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    @property
    def features(self) -> np.ndarray:
        """(N_s, N, raw_dim) raw features."""
        return self._features

    def site_vectors(self, layer: EmbeddingLayer) -> np.ndarray:
        """(N_s, N, reduced_dim) reduced vectors fed to the MPS."""
        if layer.n_sites != self.n_sites or layer.raw_dim != self.raw_dim:
            raise DimensionError(
                f"Layer ({layer.n_sites} sites, raw_dim {layer.raw_dim}) does not match "
                f"data ({self.n_sites} sites, raw_dim {self.raw_dim})"
            )
        return np.einsum('nir,irk->nik', self._features, layer.isometries)


def _amplitude_factors(psi: np.ndarray, mode: RegMode) -> np.ndarray:
    """f with dL/dpsi_x = -2 n_x f_x."""
    if mode.kind == KIND_SMOOTH:
        return psi / (psi ** 2 + mode.epsilon)
    shifted = psi + mode.epsilon if mode.kind == KIND_BIAS else psi
    zero = np.flatnonzero(shifted == 0.0)
    if zero.size:
        raise SingularityError(f"Zero amplitude for sample {int(zero[0])}", sample_index=int(zero[0]))
    return 1.0 / shifted


def isometry_loss(
    layer: EmbeddingLayer,
    mps: Mps,
    data: ContinuousDataset,
    mode: Optional[RegMode] = None
) -> float:
    """(Regularized) NLL of the data as a function of the isometries."""
    mode = mode or RegMode.none()
    psi = amplitudes(mps, data.site_vectors(layer))
    if mode.kind == KIND_NONE:
        return nll_from_amplitudes(psi, data.weights, mps.norm() ** 2).value
    if mode.kind == KIND_SMOOTH:
        return float(-np.sum(data.weights * np.log(psi ** 2 + mode.epsilon)))
    return float(-np.sum(data.weights * np.log((psi + mode.epsilon) ** 2)))


def isometry_gradient(
    layer: EmbeddingLayer,
    mps: Mps,
    data: ContinuousDataset,
    mode: Optional[RegMode] = None
) -> np.ndarray:
    """
    Euclidean gradient of isometry_loss with respect to every U_i.

    psi = e_i^T U_i g_i, where g_i is the derivative of the amplitude with
    respect to the reduced vector at site i, so d psi / d U_i = e_i g_i^T.

    Returns:
        (N, raw_dim, reduced_dim)
    """
    mode = mode or RegMode.none()
    vectors = data.site_vectors(layer)
    psi = amplitudes(mps, vectors)
    coeffs = -2.0 * data.weights * _amplitude_factors(psi, mode)
    grads = site_gradients(mps, vectors)
    return np.einsum('n,nir,nik->irk', coeffs, data.features, grads)


def retract_isometry(matrix: np.ndarray) -> np.ndarray:
    """Closest matrix with orthonormal columns (polar factor)."""
    unitary, _ = linalg.polar(matrix, side='right')
    return unitary


def isometry_gd_step(
    layer: EmbeddingLayer,
    mps: Mps,
    data: ContinuousDataset,
    eta: float = DEFAULT_ISOMETRY_LR,
    mode: Optional[RegMode] = None
) -> EmbeddingLayer:
    """
    One gradient step on all isometries followed by polar re-orthonormalization.
    """
    gradient = isometry_gradient(layer, mps, data, mode)
    stepped = layer.isometries - eta * gradient
    return EmbeddingLayer(np.array([retract_isometry(u) for u in stepped]))


def train_continuous(
    mps: Mps,
    layer: EmbeddingLayer,
    data: ContinuousDataset,
    opt: OptimizerKind,
    schedule: RegularizationSchedule,
    n_sweeps: int,
    cfg: NewtonConfig,
    *,
    eta: float = DEFAULT_ISOMETRY_LR,
    isometry_steps_per_sweep: int = 1,
    record_wall_time: bool = False,
    progress: bool = False
) -> Tuple[Mps, EmbeddingLayer, LossTrace]:
    """
    Alternate core sweeps with isometry descent.

    Every sweep epoch runs on the reduced vectors of the current layer; the
    isometries are then updated with the sweep's regularization mode.

    Returns:
        (trained Mps, trained layer, loss trace of the core sweeps)
    """
    if mps.site_dim != layer.reduced_dim:
        raise DimensionError(
            f"Mps site_dim {mps.site_dim} != layer reduced_dim {layer.reduced_dim}"
        )
    if n_sweeps < 1:
        raise ValueError(f"n_sweeps must be >= 1, got {n_sweeps}")
    trace = LossTrace()
    for k in tqdm(range(n_sweeps), desc=f"{opt.name} (continuous)", disable=not progress, leave=False):
        mps, segment = sweep_epoch(
            mps, data, opt, schedule, k, cfg,
            iteration_offset=len(trace),
            site_vectors=data.site_vectors(layer),
            record_wall_time=record_wall_time
        )
        trace.extend(segment)
        mode = opt.reg_mode(opt.epsilon_for(schedule, k))
        for _ in range(isometry_steps_per_sweep):
            try:
                layer = isometry_gd_step(layer, mps, data, eta, mode)
            except SingularityError as e:
                logger.warning(f"⚠️  Isometry step skipped after sweep {k}: {e}")
                break
        logger.debug(f"sweep {k}: NLL {segment.final_nll:.6f}, isometry defect {layer.max_defect():.1e}")
    return mps, layer, trace
