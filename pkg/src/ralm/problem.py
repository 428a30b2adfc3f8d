"""Constrained problems on a manifold and their Lagrangian machinery.

A problem is an objective plus equality constraints h = 0 and inequality
constraints g <= 0, all given as expressions over the ambient coordinates.
Riemannian gradients are ambient Euclidean gradients projected onto the
tangent space, which is exact for the embedded manifolds used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import manifold as mf

__all__ = [
    "CroProblem",
    "MultiplierEstimate",
    "make_problem",
    "constraint_values",
    "active_set",
    "riemannian_gradient",
    "lagrangian_gradient",
    "aug_lagrangian",
    "infeasibility",
]

DEFAULT_TOL_ACT = 1e-6


@dataclass(frozen=True)
class CroProblem:
    name: str
    manifold: mf.ManifoldSpec
    objective: ex.ExprAst
    equalities: tuple
    inequalities: tuple

    @property
    def n_eq(self):
        return len(self.equalities)

    @property
    def n_ineq(self):
        return len(self.inequalities)


def make_problem(name, manifold, objective, equalities=(), inequalities=()):
    """Build a CroProblem, checking that every expression reads exactly the
    manifold's ambient coordinates."""
    equalities = tuple(equalities)
    inequalities = tuple(inequalities)
    for ast in (objective, *equalities, *inequalities):
        if ast.free_var_count != manifold.ambient_dim:
            raise ValueError(
                f"expression over {ast.free_var_count} variables does not fit "
                f"ambient dimension {manifold.ambient_dim}"
            )
        if ast.var_names != objective.var_names:
            raise ValueError("all expressions must share one variable list")
    return CroProblem(str(name), manifold, objective, equalities, inequalities)


@dataclass(frozen=True)
class MultiplierEstimate:
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        if self.lam.ndim != 1 or self.mu.ndim != 1:
            raise ValueError("multipliers must be one-dimensional")
        if self.mu.size and float(np.min(self.mu)) < 0.0:
            raise ValueError("inequality multipliers must be nonnegative")


def constraint_values(prob, p):
    """(h(p), g(p)) as float arrays of lengths (n_eq, n_ineq)."""
    x = p.coords
    h = np.array([ex.evaluate(c, x) for c in prob.equalities])
    g = np.array([ex.evaluate(c, x) for c in prob.inequalities])
    return h, g


def active_set(prob, p, tol_act=DEFAULT_TOL_ACT):
    """Sorted 1-based indices j with |g_j(p)| <= tol_act."""
    _, g = constraint_values(prob, p)
    return tuple(j + 1 for j in range(len(g)) if abs(g[j]) <= tol_act)


def riemannian_gradient(ast, p):
    """Tangent-space gradient of a single expression at p."""
    _, amb = ex.eval_grad(ast, p.coords)
    return mf.project_tangent(p, amb)


def lagrangian_gradient(prob, p, mult):
    """Riemannian gradient of the Lagrangian f + lam @ h + mu @ g at p.

    The ambient gradients are accumulated first and projected once; the same
    accumulation order is used for the augmented Lagrangian so the shifted
    multiplier identity holds to machine precision.
    """
    if mult.lam.shape != (prob.n_eq,) or mult.mu.shape != (prob.n_ineq,):
        raise ValueError("multiplier lengths do not match the constraint counts")
    x = p.coords
    _, amb = ex.eval_grad(prob.objective, x)
    for lam_i, c in zip(mult.lam, prob.equalities):
        amb = amb + lam_i * ex.eval_grad(c, x)[1]
    for mu_j, c in zip(mult.mu, prob.inequalities):
        amb = amb + mu_j * ex.eval_grad(c, x)[1]
    return mf.project_tangent(p, amb)


def aug_lagrangian(prob, p, mult_bar, rho):
    """Value and Riemannian gradient of the shifted-penalty augmented
    Lagrangian at p:

        f + (rho/2) * (||h + lam_bar/rho||^2 + ||max(g + mu_bar/rho, 0)||^2)

    Its gradient equals the Lagrangian gradient at the first-order multiplier
    update (lam_bar + rho h, max(mu_bar + rho g, 0)).
    """
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    if mult_bar.lam.shape != (prob.n_eq,) or mult_bar.mu.shape != (prob.n_ineq,):
        raise ValueError("multiplier lengths do not match the constraint counts")
    x = p.coords
    value, amb = ex.eval_grad(prob.objective, x)
    for lam_i, c in zip(mult_bar.lam, prob.equalities):
        hv, hg = ex.eval_grad(c, x)
        shifted = hv + lam_i / rho
        value += 0.5 * rho * shifted * shifted
        amb = amb + (lam_i + rho * hv) * hg
    for mu_j, c in zip(mult_bar.mu, prob.inequalities):
        gv, gg = ex.eval_grad(c, x)
        shifted = max(gv + mu_j / rho, 0.0)
        value += 0.5 * rho * shifted * shifted
        amb = amb + max(mu_j + rho * gv, 0.0) * gg
    return float(value), mf.project_tangent(p, amb)


def aug_lagrangian_value(prob, p, mult_bar, rho):
    """Value-only variant of aug_lagrangian, for line searches."""
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    x = p.coords
    value = ex.evaluate(prob.objective, x)
    for lam_i, c in zip(mult_bar.lam, prob.equalities):
        shifted = ex.evaluate(c, x) + lam_i / rho
        value += 0.5 * rho * shifted * shifted
    for mu_j, c in zip(mult_bar.mu, prob.inequalities):
        shifted = max(ex.evaluate(c, x) + mu_j / rho, 0.0)
        value += 0.5 * rho * shifted * shifted
    return float(value)


def infeasibility(prob, p):
    """Value and Riemannian gradient of the squared-violation measure
    0.5 * (||h||^2 + ||max(g, 0)||^2)."""
    x = p.coords
    value = 0.0
    amb = np.zeros(prob.manifold.ambient_dim)
    for c in prob.equalities:
        hv, hg = ex.eval_grad(c, x)
        value += 0.5 * hv * hv
        amb += hv * hg
    for c in prob.inequalities:
        gv, gg = ex.eval_grad(c, x)
        plus = max(gv, 0.0)
        value += 0.5 * plus * plus
        amb += plus * gg
    return float(value), mf.project_tangent(p, amb)
