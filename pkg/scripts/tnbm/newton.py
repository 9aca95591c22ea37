#!/usr/bin/env python3
"""
Newton steps on the unit sphere.

Both solvers return a step Delta in the tangent space of T that satisfies
H Delta = -g, where g is the projected gradient and H the Riemannian Hessian
(which annihilates T):

- dense:     (H + T T^T) Delta = -g, solved directly (O(D^3))
- iterative: (H^2 + 4 T T^T) Delta = -H g, solved matrix-free with a Krylov
             method whose operator only calls hvp() (two per iteration)

If the system is numerically singular (dense) or the Krylov method stalls
(iterative), the step falls back to -g / lambda_max.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg, minres

from .errors import DegenerateError
from .loss import (
    LocalProblem,
    RegMode,
    TangentVector,
    grad_projected,
    hess_dense,
    hvp,
    project_tangent,
)

logger = logging.getLogger(__name__)

DENSE_COND_LIMIT = 1e12
FALLBACK_RESIDUAL = 1e-3
LAMBDA_FLOOR = 1e-12
POWER_ITERATIONS = 30
TANGENCY_WEIGHT = 4.0

SOLVERS = ('dense', 'iterative')
KRYLOV_METHODS = ('cg', 'minres')


@dataclass(frozen=True)
class NewtonConfig:
    """
    Solver settings for one Newton step.

    Args:
        solver: 'dense' or 'iterative'
        krylov: 'cg' or 'minres' (iterative solver only)
        inner_tol: Relative residual tolerance of the Krylov solve
        max_inner_iters: Iteration cap of the Krylov solve
        step_cap: Optional upper bound on the step norm
    """
    solver: str = 'dense'
    krylov: str = 'cg'
    inner_tol: float = 1e-8
    max_inner_iters: int = 200
    step_cap: Optional[float] = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.krylov not in KRYLOV_METHODS:
            raise ValueError(f"krylov must be one of {KRYLOV_METHODS}, got {self.krylov!r}")
        if not self.inner_tol > 0:
            raise ValueError(f"inner_tol must be > 0, got {self.inner_tol}")
        if self.max_inner_iters < 1:
            raise ValueError(f"max_inner_iters must be >= 1, got {self.max_inner_iters}")
        if self.step_cap is not None and not self.step_cap > 0:
            raise ValueError(f"step_cap must be > 0, got {self.step_cap}")


@dataclass(frozen=True, eq=False)
class NewtonStepResult:
    step: TangentVector
    residual_norm: float
    inner_iters: int
    fallback_used: bool
    hvp_calls: int = 0


@dataclass(frozen=True, eq=False)
class KrylovResult:
    solution: np.ndarray
    iterations: int
    relative_residual: float
    info: int

    @property
    def converged(self) -> bool:
        return self.info == 0


def krylov_solve(operator: LinearOperator, rhs: np.ndarray, cfg: NewtonConfig) -> KrylovResult:
    """
    Solve a symmetric system with scipy's cg or minres, counting iterations.

    Args:
        operator: Symmetric (semi)definite LinearOperator
        rhs: Right-hand side
        cfg: Supplies krylov method, inner_tol and max_inner_iters

    Returns:
        KrylovResult; relative_residual is ||A x - b|| / ||b|| of the returned iterate
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return KrylovResult(np.zeros_like(rhs), 0, 0.0, 0)

    counter = {'iterations': 0}

    def count(_xk):
        counter['iterations'] += 1

    if cfg.krylov == 'cg':
        solution, info = cg(
            operator, rhs, rtol=cfg.inner_tol, atol=0.0,
            maxiter=cfg.max_inner_iters, callback=count
        )
    else:
        solution, info = minres(
            operator, rhs, rtol=cfg.inner_tol,
            maxiter=cfg.max_inner_iters, callback=count
        )
    residual = float(np.linalg.norm(operator.matvec(solution) - rhs)) / rhs_norm
    return KrylovResult(solution, counter['iterations'], residual, int(info))


def _cap_step(step: np.ndarray, cfg: Optional[NewtonConfig]) -> np.ndarray:
    if cfg is None or cfg.step_cap is None:
        return step
    norm = np.linalg.norm(step)
    if norm > cfg.step_cap:
        return step * (cfg.step_cap / norm)
    return step


def _fallback_step(g: np.ndarray, lambda_max: float) -> np.ndarray:
    return -g / max(lambda_max, LAMBDA_FLOOR)


def solve_newton_system_dense(hessian: np.ndarray, g: np.ndarray, tensor: np.ndarray):
    """
    Solve (H + T T^T) Delta = -g for a tangent gradient g.

    Returns:
        (Delta, fallback_used); on a numerically singular system Delta = -g / lambda_max
    """
    tensor = np.asarray(tensor, dtype=np.float64).reshape(-1)
    augmented = hessian + np.outer(tensor, tensor)
    if np.linalg.cond(augmented) > DENSE_COND_LIMIT:
        lambda_max = float(np.max(np.abs(linalg.eigvalsh(hessian))))
        logger.warning(f"⚠️  Singular Newton system, gradient fallback (lambda_max={lambda_max:.3e})")
        return _fallback_step(g, lambda_max), True
    step = linalg.solve(augmented, -g, assume_a='sym')
    return step, False


def newton_step_dense(
    p: LocalProblem,
    mode: RegMode,
    cfg: Optional[NewtonConfig] = None
) -> NewtonStepResult:
    """
    Newton step by a direct solve of the tangency-augmented system.
    """
    g = grad_projected(p, mode).components
    if not np.any(g):
        return NewtonStepResult(TangentVector(p.tensor, np.zeros_like(g)), 0.0, 0, False)
    hessian = hess_dense(p, mode)
    step, fallback = solve_newton_system_dense(hessian, g, p.tensor)
    step = _cap_step(project_tangent(p.tensor, step).components, cfg)
    residual = float(np.linalg.norm(hessian @ step + g))
    return NewtonStepResult(TangentVector(p.tensor, step), residual, 0, fallback)


def _hessian_operator(p: LocalProblem, mode: RegMode, counter: dict) -> Callable:
    def apply(v):
        counter['hvp'] += 1
        return hvp(p, mode, v)
    return apply


def _power_iteration(apply: Callable, tensor: np.ndarray, n_iter: int = POWER_ITERATIONS) -> float:
    rng = np.random.default_rng(tensor.size)
    v = project_tangent(tensor, rng.standard_normal(tensor.size)).components
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(n_iter):
        w = apply(v)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            break
        v = w / estimate
    return estimate


def newton_step_iterative(p: LocalProblem, mode: RegMode, cfg: NewtonConfig) -> NewtonStepResult:
    """
    Matrix-free Newton step on the squared, tangency-augmented system.

    The operator v -> H(Hv) + 4 T (T, v) is symmetric positive semidefinite
    for any mode; its T component forces (T, Delta) to zero.
    """
    counter = {'hvp': 0}
    apply_hessian = _hessian_operator(p, mode, counter)
    tensor = p.tensor
    g = grad_projected(p, mode).components
    if not np.any(g):
        return NewtonStepResult(TangentVector(tensor, np.zeros_like(g)), 0.0, 0, False)

    def matvec(v):
        v = np.ravel(v)
        return apply_hessian(apply_hessian(v)) + TANGENCY_WEIGHT * (tensor @ v) * tensor

    operator = LinearOperator((p.dim, p.dim), matvec=matvec, rmatvec=matvec, dtype=np.float64)
    rhs = -apply_hessian(g)
    result = krylov_solve(operator, rhs, cfg)
    fallback = result.relative_residual > FALLBACK_RESIDUAL
    if fallback:
        lambda_max = _power_iteration(apply_hessian, tensor)
        logger.warning(
            f"⚠️  Krylov {cfg.krylov} stalled after {result.iterations} iterations "
            f"(residual {result.relative_residual:.2e}), gradient fallback"
        )
        step = _fallback_step(g, lambda_max)
    else:
        step = result.solution
    step = _cap_step(project_tangent(tensor, step).components, cfg)
    residual = float(np.linalg.norm(apply_hessian(step) + g))
    return NewtonStepResult(
        TangentVector(tensor, step), residual, result.iterations, fallback, counter['hvp']
    )


def newton_step(p: LocalProblem, mode: RegMode, cfg: NewtonConfig) -> NewtonStepResult:
    if cfg.solver == 'iterative':
        return newton_step_iterative(p, mode, cfg)
    return newton_step_dense(p, mode, cfg)


def retract(tensor: np.ndarray, step) -> np.ndarray:
    """
    Metric-projection retraction (T + step) / ||T + step||.

    Args:
        tensor: Base point
        step: TangentVector or plain array
    """
    components = step.components if isinstance(step, TangentVector) else step
    moved = np.asarray(tensor, dtype=np.float64) + np.asarray(components, dtype=np.float64)
    norm = float(np.linalg.norm(moved))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateError(f"Retraction of a vanishing or non-finite point (norm {norm})")
    return moved / norm
