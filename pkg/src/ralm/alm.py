"""Safeguarded augmented Lagrangian outer loop with per-iteration tracing.

Each outer iteration minimizes the shifted-penalty augmented Lagrangian to a
scheduled tolerance, performs the first-order multiplier update, adjusts the
penalty when feasibility-and-complementarity progress stalls, and projects
the multiplier estimates back into fixed safeguarding boxes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import inner_solver as inner
from . import manifold as mf
from .problem import (
    MultiplierEstimate,
    aug_lagrangian,
    constraint_values,
    infeasibility,
    lagrangian_gradient,
)

__all__ = [
    "KKT_APPROX",
    "INFEASIBLE_STATIONARY",
    "INNER_FAILURE",
    "ITER_LIMIT",
    "GeometricSchedule",
    "FixedSchedule",
    "AlmConfig",
    "AlmIterate",
    "AlmTrace",
    "TraceFormatError",
    "update_multipliers",
    "penalty_update",
    "safeguard",
    "run",
    "write_trace",
    "read_trace",
]

KKT_APPROX = "KktApprox"
INFEASIBLE_STATIONARY = "InfeasibleStationary"
INNER_FAILURE = "InnerFailure"
ITER_LIMIT = "IterLimit"


@dataclass(frozen=True)
class GeometricSchedule:
    initial: float = 0.1
    factor: float = 0.5

    def __post_init__(self):
        if self.initial <= 0.0 or not 0.0 < self.factor < 1.0:
            raise ValueError("geometric schedule needs initial > 0, factor in (0,1)")

    def eps(self, k):
        return self.initial * self.factor ** (k - 1)


@dataclass(frozen=True)
class FixedSchedule:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals or any(v <= 0.0 for v in vals):
            raise ValueError("fixed schedule needs a nonempty positive list")
        object.__setattr__(self, "values", vals)

    def eps(self, k):
        return self.values[min(k, len(self.values)) - 1]


@dataclass(frozen=True)
class AlmConfig:
    tau: float = 0.5
    gamma: float = 10.0
    lambda_min: float = -1e6
    lambda_max: float = 1e6
    mu_max: float = 1e6
    rho1: float = 1.0
    eps_schedule: object = field(default_factory=GeometricSchedule)
    max_outer: int = 200
    kkt_tol: float = 1e-6
    feas_tol: float = 1e-6
    inner: inner.InnerConfig = field(default_factory=inner.InnerConfig)

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if self.lambda_min > self.lambda_max:
            raise ValueError("lambda_min exceeds lambda_max")
        if self.mu_max <= 0.0 or self.rho1 <= 0.0:
            raise ValueError("mu_max and rho1 must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.kkt_tol <= 0.0 or self.feas_tol <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class AlmIterate:
    k: int
    point: mf.Point
    lam: np.ndarray
    mu: np.ndarray
    lam_bar: np.ndarray
    mu_bar: np.ndarray
    rho: float
    eps: float
    v: np.ndarray
    h_norm: float
    inner_status: str
    inner_iters: int
    aug_grad_norm: float


@dataclass
class AlmTrace:
    problem_name: str
    records: list

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def last(self):
        if not self.records:
            raise ValueError("trace is empty")
        return self.records[-1]


def update_multipliers(mult_bar, rho, h, g):
    """First-order estimates lam_bar + rho h and max(mu_bar + rho g, 0)."""
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    lam = mult_bar.lam + rho * np.asarray(h, dtype=float)
    mu = np.maximum(mult_bar.mu + rho * np.asarray(g, dtype=float), 0.0)
    return MultiplierEstimate(lam, mu)


def penalty_update(prev, curr, rho_k, tau, gamma, k):
    """Keep rho when k = 1 or the feasibility-and-complementarity measure
    max(||h||, ||V||) decreased by at least the factor tau; otherwise scale
    by gamma. `prev` and `curr` are the (||h||, ||V||) pairs at k-1 and k
    (prev may be None when k = 1)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        return rho_k
    if max(curr) <= tau * max(prev):
        return rho_k
    return rho_k * gamma


def safeguard(mult, cfg):
    """Project multiplier estimates into the boxes [lambda_min, lambda_max]
    and [0, mu_max]."""
    lam = np.clip(mult.lam, cfg.lambda_min, cfg.lambda_max)
    # Adding 0.0 normalizes any -0.0 left by the clip, keeping output stable.
    mu = np.clip(mult.mu, 0.0, cfg.mu_max) + 0.0
    return MultiplierEstimate(lam, mu)


def run(prob, cfg, start, seed_mult=None):
    """Execute the safeguarded outer loop from `start`.

    Returns (trace, verdict). Verdicts: KktApprox (approximate KKT point at
    the tolerances), InfeasibleStationary (stationary point of the squared
    violation that is not feasible), InnerFailure (a subproblem solve ended
    without reaching its tolerance), IterLimit.
    """
    s, m = prob.n_eq, prob.n_ineq
    if seed_mult is None:
        seed_mult = MultiplierEstimate(np.zeros(s), np.zeros(m))
    if seed_mult.lam.shape != (s,) or seed_mult.mu.shape != (m,):
        raise ValueError("seed multiplier lengths do not match the problem")
    if start.manifold != prob.manifold:
        raise ValueError("start point does not live on the problem manifold")

    mult_bar = safeguard(seed_mult, cfg)
    rho = cfg.rho1
    point = start
    prev_pair = None
    records = []
    verdict = ITER_LIMIT
    eps_floor = cfg.kkt_tol / 10.0

    for k in range(1, cfg.max_outer + 1):
        eps_k = max(cfg.eps_schedule.eps(k), eps_floor)
        frozen_bar, frozen_rho = mult_bar, rho

        def objective(q):
            return aug_lagrangian(prob, q, frozen_bar, frozen_rho)

        res = inner.minimize(objective, prob.manifold, point, replace(cfg.inner, grad_tol=eps_k))
        point = res.point
        h, g = constraint_values(prob, point)
        mult = update_multipliers(mult_bar, rho, h, g)
        v = (mult.mu - mult_bar.mu) / rho
        h_norm = float(np.linalg.norm(h))
        records.append(
            AlmIterate(
                k, point, mult.lam, mult.mu, mult_bar.lam, mult_bar.mu,
                rho, eps_k, v, h_norm, res.status, res.iterations, res.grad_norm,
            )
        )

        stationarity = mf.norm(lagrangian_gradient(prob, point, mult))
        violation = max(
            float(np.max(np.abs(h), initial=0.0)),
            float(np.max(np.clip(g, 0.0, None), initial=0.0)),
        )
        comp_ok = m == 0 or float(np.max(np.minimum(mult.mu, -g))) <= cfg.kkt_tol
        if stationarity <= cfg.kkt_tol and violation <= cfg.feas_tol and comp_ok:
            verdict = KKT_APPROX
            break
        _, infeas_grad = infeasibility(prob, point)
        if mf.norm(infeas_grad) <= cfg.kkt_tol and violation > cfg.feas_tol:
            verdict = INFEASIBLE_STATIONARY
            break
        if res.status != inner.CONVERGED:
            verdict = INNER_FAILURE
            break

        curr_pair = (h_norm, float(np.linalg.norm(v)))
        rho = penalty_update(prev_pair, curr_pair, rho, cfg.tau, cfg.gamma, k)
        prev_pair = curr_pair
        mult_bar = safeguard(mult, cfg)

    return AlmTrace(prob.name, records), verdict


class TraceFormatError(ValueError):
    """A trace file does not match the expected layout or the problem shape."""


_COLUMNS = (
    "k", "point", "lambda", "mu", "lambda_bar", "mu_bar",
    "rho", "eps", "v", "h_norm", "inner_status", "inner_iters", "aug_grad_norm",
)


def _fmt(x):
    return f"{float(x):.17g}"


def _fmt_vec(vec):
    return ";".join(_fmt(x) for x in np.asarray(vec, dtype=float))


def _parse_vec(text, length, what):
    if text == "":
        parts = []
    else:
        parts = text.split(";")
    if len(parts) != length:
        raise TraceFormatError(f"{what} has {len(parts)} entries, expected {length}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as err:
        raise TraceFormatError(f"bad {what} entry: {err}") from None


def write_trace(trace, path):
    """Write one CSV row per outer iteration; vector fields are
    semicolon-joined with 17 significant digits, so float64 values survive a
    round trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in trace.records:
            writer.writerow([
                r.k, _fmt_vec(r.point.coords), _fmt_vec(r.lam), _fmt_vec(r.mu),
                _fmt_vec(r.lam_bar), _fmt_vec(r.mu_bar), _fmt(r.rho), _fmt(r.eps),
                _fmt_vec(r.v), _fmt(r.h_norm), r.inner_status, r.inner_iters,
                _fmt(r.aug_grad_norm),
            ])


def read_trace(path, prob):
    """Read a trace written by write_trace, validating every row against the
    problem's dimensions. Raises TraceFormatError on any mismatch."""
    statuses = {inner.CONVERGED, inner.ITER_LIMIT, inner.STEP_FLOOR}
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(_COLUMNS):
            raise TraceFormatError("unexpected trace header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(_COLUMNS):
                raise TraceFormatError(f"row {lineno} has {len(row)} fields")
            try:
                k = int(row[0])
                rho, eps = float(row[6]), float(row[7])
                h_norm = float(row[9])
                inner_iters = int(row[11])
                aug_grad_norm = float(row[12])
            except ValueError as err:
                raise TraceFormatError(f"row {lineno}: {err}") from None
            if row[10] not in statuses:
                raise TraceFormatError(f"row {lineno}: unknown inner status {row[10]!r}")
            coords = _parse_vec(row[1], prob.manifold.ambient_dim, "point")
            point = mf.make_point(prob.manifold, coords)
            records.append(
                AlmIterate(
                    k, point,
                    _parse_vec(row[2], prob.n_eq, "lambda"),
                    _parse_vec(row[3], prob.n_ineq, "mu"),
                    _parse_vec(row[4], prob.n_eq, "lambda_bar"),
                    _parse_vec(row[5], prob.n_ineq, "mu_bar"),
                    rho, eps, _parse_vec(row[8], prob.n_ineq, "v"),
                    h_norm, row[10], inner_iters, aug_grad_norm,
                )
            )
    if not records:
        raise TraceFormatError("trace has no iteration rows")
    return AlmTrace(prob.name, records)
