"""Riemannian gradient descent with Armijo backtracking.

The inner solver only needs to drive the augmented-Lagrangian gradient below
a per-outer-iteration tolerance, so plain steepest descent with a monotone
line search is enough and keeps every step easy to audit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import manifold as mf
from .expr import ExprDomainError

__all__ = [
    "CONVERGED",
    "ITER_LIMIT",
    "STEP_FLOOR",
    "InnerConfig",
    "InnerResult",
    "minimize",
]

CONVERGED = "Converged"
ITER_LIMIT = "IterLimit"
STEP_FLOOR = "StepFloor"


@dataclass(frozen=True)
class InnerConfig:
    grad_tol: float = 1e-6
    max_iters: int = 10000
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    step_floor: float = 1e-14

    def __post_init__(self):
        if self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.initial_step <= 0.0 or self.step_floor <= 0.0:
            raise ValueError("steps must be positive")
        if self.step_floor > self.initial_step:
            raise ValueError("step_floor exceeds initial_step")


@dataclass(frozen=True)
class InnerResult:
    point: mf.Point
    value: float
    grad_norm: float
    status: str
    iterations: int


def minimize(objective, manifold, start, cfg):
    """Descend objective from start until the Riemannian gradient norm falls
    below cfg.grad_tol.

    `objective` maps a Point to (value, Tangent). Statuses: Converged (the
    tolerance was met, possibly with zero iterations), IterLimit, StepFloor
    (no Armijo step above the floor; also covers trial points rejected for
    domain errors or non-finite values). A domain error at `start` itself
    propagates, since there is no valid iterate to return.
    """
    if start.manifold != manifold:
        raise ValueError("start point does not live on the given manifold")
    point = start
    value, grad = objective(point)
    grad_norm = mf.norm(grad)
    iters = 0
    while grad_norm > cfg.grad_tol:
        if iters >= cfg.max_iters:
            return InnerResult(point, value, grad_norm, ITER_LIMIT, iters)
        step = cfg.initial_step
        accepted = None
        sq = grad_norm * grad_norm
        while step >= cfg.step_floor:
            try:
                trial = mf.exp(mf.Tangent(point, -step * grad.vec))
                tval, tgrad = objective(trial)
            except ExprDomainError:
                step *= cfg.backtrack_factor
                continue
            if math.isfinite(tval) and tval <= value - cfg.armijo_c * step * sq:
                accepted = (trial, tval, tgrad)
                break
            step *= cfg.backtrack_factor
        if accepted is None:
            return InnerResult(point, value, grad_norm, STEP_FLOOR, iters)
        point, value, grad = accepted
        grad_norm = mf.norm(grad)
        iters += 1
    return InnerResult(point, value, grad_norm, CONVERGED, iters)
