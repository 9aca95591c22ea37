#!/usr/bin/env python3
"""
Negative log-likelihood objective for a single MPS core, with regularization.

Three loss kinds share one structure. With overlaps a_x = (T, w_x) and
frequencies n_x (summing to 1):

    none    L = -sum n_x log(a_x^2 / (T,T))
    smooth  L = -sum n_x log(a_x^2 + eps)            (unit T)
    bias    L = -sum n_x log((a_x + eps_b)^2)        (unit T)

Every Riemannian Hessian on the sphere has the form

    H = c_I (I - T T^T) + sum_x c_x [P w_x][P w_x]^T,    P = I - T T^T / (T,T)

which hess_dense() materializes and hvp() applies in O(D N_s) without
forming the matrix. The abs_correct flag (smooth kind only) replaces the
sign-indefinite factor (a^2 - eps) by its absolute value.

Usage:
    from tnbm.loss import LocalProblem, RegMode, grad_projected, hvp

    problem = LocalProblem.build(T, envs, weights)
    mode = RegMode.smooth(0.025, abs_correct=True)
    g = grad_projected(problem, mode).components
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateError, DimensionError, NormalizationError, SingularityError
from .mps import Mps, amplitudes

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
UNIT_NORM_TOL = 1e-8
DEFAULT_BIAS = 0.01

KIND_NONE = 'none'
KIND_SMOOTH = 'smooth'
KIND_BIAS = 'bias'


@dataclass(frozen=True)
class RegMode:
    """Regularization of the local loss."""
    kind: str = KIND_NONE
    epsilon: float = 0.0
    abs_correct: bool = False

    def __post_init__(self):
        if self.kind not in (KIND_NONE, KIND_SMOOTH, KIND_BIAS):
            raise ValueError(f"Unknown regularization kind {self.kind!r}")
        if self.kind == KIND_SMOOTH and self.epsilon < 0:
            raise ValueError(f"Smoothing constant must be >= 0, got {self.epsilon}")

    @classmethod
    def none(cls) -> "RegMode":
        return cls(KIND_NONE, 0.0, False)

    @classmethod
    def smooth(cls, epsilon: float, abs_correct: bool = True) -> "RegMode":
        return cls(KIND_SMOOTH, float(epsilon), abs_correct)

    @classmethod
    def bias(cls, epsilon_b: float = DEFAULT_BIAS) -> "RegMode":
        return cls(KIND_BIAS, float(epsilon_b), False)


@dataclass(frozen=True, eq=False)
class LocalProblem:
    """
    Single-site problem: center tensor T (flattened), environments and weights.
    """
    tensor: np.ndarray
    envs: np.ndarray
    weights: np.ndarray
    overlaps: np.ndarray

    @classmethod
    def build(cls, tensor, envs, weights) -> "LocalProblem":
        """
        Args:
            tensor: Center core (any shape, flattened row-major) of dimension D
            envs: (N_s, D) reduced environments w_x
            weights: (N_s,) frequencies n_x summing to 1
        """
        tensor = np.asarray(tensor, dtype=np.float64).reshape(-1)
        envs = np.atleast_2d(np.asarray(envs, dtype=np.float64))
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if envs.shape[1] != tensor.size:
            raise DimensionError(
                f"Environment dimension {envs.shape[1]} != tensor dimension {tensor.size}"
            )
        if envs.shape[0] != weights.size:
            raise DimensionError(f"{envs.shape[0]} environments but {weights.size} weights")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"Weights must sum to 1, got {weights.sum():.15f}")
        return cls(tensor, envs, weights, envs @ tensor)

    @property
    def dim(self) -> int:
        return self.tensor.size

    @property
    def n_samples(self) -> int:
        return self.weights.size

    def with_tensor(self, tensor: np.ndarray) -> "LocalProblem":
        tensor = np.asarray(tensor, dtype=np.float64).reshape(-1)
        return LocalProblem(tensor, self.envs, self.weights, self.envs @ tensor)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Vector in the tangent space of the sphere at `base`."""
    base: np.ndarray
    components: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def is_tangent(self, rtol: float = 1e-10) -> bool:
        scale = max(self.norm(), np.finfo(float).tiny)
        return abs(float(self.base @ self.components)) <= rtol * scale * np.linalg.norm(self.base)


@dataclass(frozen=True)
class NllResult:
    """Unregularized NLL with the indices of zero-probability samples."""
    value: float
    singular_samples: Tuple[int, ...] = ()

    def __float__(self) -> float:
        return self.value

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def nll_from_amplitudes(amps: np.ndarray, weights: np.ndarray, norm_sq: float = 1.0) -> NllResult:
    """-sum n_x log(amp_x^2 / norm_sq), flagging exact zeros."""
    probs = amps ** 2 / norm_sq
    zero = np.flatnonzero(probs == 0.0)
    if zero.size:
        return NllResult(math.inf, tuple(int(i) for i in zero))
    return NllResult(float(-np.sum(weights * np.log(probs))))


def global_nll(mps: Mps, dataset) -> NllResult:
    """
    Unregularized NLL of a dataset, -sum n_x log p(x).

    Args:
        mps: Model (normalization is divided out)
        dataset: Anything with `weights` and `site_vectors(site_dim)`
    """
    amps = amplitudes(mps, dataset.site_vectors(mps.site_dim))
    result = nll_from_amplitudes(amps, dataset.weights, mps.norm() ** 2)
    if result.singular_samples:
        logger.warning(f"Zero model probability for samples {list(result.singular_samples)}")
    return result


def _check_unit(tensor: np.ndarray, kind: str):
    norm = float(np.linalg.norm(tensor))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise NormalizationError(f"{kind} loss requires a unit-norm tensor, got norm {norm:.3e}")


def _shifted_overlaps(p: LocalProblem, mode: RegMode) -> np.ndarray:
    if mode.kind == KIND_BIAS:
        return p.overlaps + mode.epsilon
    return p.overlaps


def _require_nonzero(values: np.ndarray, mode: RegMode):
    zero = np.flatnonzero(values == 0.0)
    if zero.size:
        label = "shifted overlap" if mode.kind == KIND_BIAS else "overlap"
        raise SingularityError(
            f"Zero {label} for sample {int(zero[0])} (loss kind {mode.kind})",
            sample_index=int(zero[0])
        )


def local_loss(p: LocalProblem, mode: RegMode) -> float:
    """
    Local loss of the center tensor for the given regularization.

    Kind none returns inf (logged with the sample indices) on a zero overlap.
    """
    a = p.overlaps
    n = p.weights
    if mode.kind == KIND_NONE:
        zero = np.flatnonzero(a == 0.0)
        if zero.size:
            logger.warning(f"Infinite local loss: zero overlap for samples {zero.tolist()}")
            return math.inf
        return float(-np.sum(n * np.log(a ** 2 / (p.tensor @ p.tensor))))
    _check_unit(p.tensor, mode.kind)
    if mode.kind == KIND_SMOOTH:
        return float(-np.sum(n * regularized_log(a, mode.epsilon)))
    shifted = a + mode.epsilon
    if np.any(shifted == 0.0):
        return math.inf
    return float(-np.sum(n * np.log(shifted ** 2)))


def _gradient_factors(p: LocalProblem, mode: RegMode) -> np.ndarray:
    """f_x such that grad_free = 2T - 2 sum n_x f_x w_x."""
    a = p.overlaps
    if mode.kind == KIND_SMOOTH:
        denom = a ** 2 + mode.epsilon
        if mode.epsilon == 0.0:
            _require_nonzero(a, mode)
        return a / denom
    shifted = _shifted_overlaps(p, mode)
    _require_nonzero(shifted, mode)
    return 1.0 / shifted


def grad_free(p: LocalProblem, mode: RegMode) -> np.ndarray:
    """Free-space gradient 2T - 2 sum n_x f_x w_x."""
    factors = _gradient_factors(p, mode)
    return 2.0 * p.tensor - 2.0 * (p.weights * factors) @ p.envs


def project_tangent(tensor: np.ndarray, v: np.ndarray) -> TangentVector:
    """Pi_T(v) = v - (T,v)/(T,T) T."""
    tensor = np.asarray(tensor, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    norm_sq = float(tensor @ tensor)
    if norm_sq == 0.0:
        raise DegenerateError("Cannot project onto the tangent space of a zero vector")
    return TangentVector(tensor, v - (tensor @ v) / norm_sq * tensor)


def grad_projected(p: LocalProblem, mode: RegMode, method: str = 'project') -> TangentVector:
    """
    Riemannian gradient on the sphere.

    Args:
        p: Local problem
        mode: Regularization
        method: 'project' (Pi_T of grad_free) or 'closed_form'
                (-2 sum n_x f_x Pi_T(w_x)); both agree for unit T
    """
    if method == 'project':
        return project_tangent(p.tensor, grad_free(p, mode))
    if method == 'closed_form':
        factors = _gradient_factors(p, mode)
        weighted = (p.weights * factors) @ p.envs
        return project_tangent(p.tensor, -2.0 * weighted)
    raise ValueError(f"Unknown gradient method {method!r}")


def _hessian_coefficients(p: LocalProblem, mode: RegMode) -> Tuple[float, np.ndarray]:
    """(c_I, c_x) of H = c_I (I - TT^T) + sum c_x [P w_x]^{(x)2}."""
    a = p.overlaps
    n = p.weights
    if mode.kind == KIND_NONE:
        _require_nonzero(a, mode)
        return 2.0, 2.0 * n / a ** 2
    if mode.kind == KIND_SMOOTH:
        if mode.epsilon == 0.0:
            _require_nonzero(a, mode)
        a2 = a ** 2
        denom = a2 + mode.epsilon
        numer = a2 - mode.epsilon
        if mode.abs_correct:
            numer = np.abs(numer)
        return float(2.0 * np.sum(n * a2 / denom)), 2.0 * n * numer / denom ** 2
    shifted = _shifted_overlaps(p, mode)
    _require_nonzero(shifted, mode)
    return float(2.0 * np.sum(n * a / shifted)), 2.0 * n / shifted ** 2


def _projected_envs(p: LocalProblem) -> np.ndarray:
    t = p.tensor
    return p.envs - np.outer(p.overlaps / (t @ t), t)


def hess_dense(p: LocalProblem, mode: RegMode) -> np.ndarray:
    """
    Riemannian Hessian as a symmetric D x D matrix with H T = 0.
    """
    c_identity, c_samples = _hessian_coefficients(p, mode)
    t = p.tensor
    projector = np.eye(p.dim) - np.outer(t, t) / (t @ t)
    projected = _projected_envs(p)
    hessian = c_identity * projector + (projected.T * c_samples) @ projected
    return 0.5 * (hessian + hessian.T)


def hvp(p: LocalProblem, mode: RegMode, v: np.ndarray) -> np.ndarray:
    """
    Hessian-vector product without materializing H: O(D N_s) time, O(D) extra memory.
    """
    c_identity, c_samples = _hessian_coefficients(p, mode)
    t = p.tensor
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    t_sq = t @ t
    tv = (t @ v) / t_sq
    # (P w_x, v) = (w_x, v) - a_x (T, v) / (T, T)
    coeffs = c_samples * (p.envs @ v - p.overlaps * tv)
    return (
        c_identity * (v - tv * t)
        + coeffs @ p.envs
        - (coeffs @ p.overlaps) / t_sq * t
    )


def lorentzian_kernel(x, epsilon: float):
    """kappa_eps(x) = sqrt(eps) / (pi (x^2 + eps)); convolving log(x^2) with it gives log(x^2 + eps)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sqrt(epsilon) / (np.pi * (x ** 2 + epsilon))


def regularized_log(x, epsilon: float):
    """l_eps(x) = log(x^2 + eps)."""
    x = np.asarray(x, dtype=np.float64)
    return np.log(x ** 2 + epsilon)


def mode_label(mode: Optional[RegMode]) -> str:
    if mode is None or mode.kind == KIND_NONE:
        return 'none'
    suffix = ',abs' if mode.abs_correct else ''
    return f"{mode.kind}(eps={mode.epsilon:g}{suffix})"
