"""Constraint-qualification certificates at a point and sequential-optimality
analysis of solver traces.

Point conditions (LICQ, MFCQ) are decided exactly from the gradients at the
point. Neighborhood conditions (CRCQ, RCRCQ, CPLD, RCPLD, CRSC) and
quasinormality replace their "for all q near p" quantifier with a sampled
ball, so their verdicts are evidence-grade and carry the (eps, samples, seed)
triple that reproduces them.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from .expr import evaluate
from .linalg import (
    VectorFamily,
    numerical_rank,
    positive_linear_dependence,
    select_basis_subset,
    simplex_solve,
)
from .problem import (
    DEFAULT_TOL_ACT,
    MultiplierEstimate,
    active_set,
    constraint_values,
    lagrangian_gradient,
    riemannian_gradient,
)

__all__ = [
    "HOLDS",
    "FAILS",
    "EVIDENCE_HOLDS",
    "EVIDENCE_FAILS",
    "CONDITIONS",
    "NEIGHBORHOOD_CONDITIONS",
    "SubsetEnumerationError",
    "ConditionResult",
    "CqReport",
    "SeqOptReport",
    "kkt_residual",
    "gradient_family",
    "check_licq",
    "check_mfcq",
    "check_neighborhood_cq",
    "j_minus",
    "qn_evidence",
    "certify",
    "analyze_sequence",
]

HOLDS = "Holds"
FAILS = "Fails"
EVIDENCE_HOLDS = "EvidenceHolds"
EVIDENCE_FAILS = "EvidenceFails"

NEIGHBORHOOD_CONDITIONS = ("CRCQ", "RCRCQ", "CPLD", "RCPLD", "CRSC")
CONDITIONS = ("LICQ", "MFCQ") + NEIGHBORHOOD_CONDITIONS + ("QN",)

_ENUM_LIMIT = 20
DEFAULT_TOL_RANK = 1e-8
DEFAULT_EPS = 1e-2
DEFAULT_SAMPLES = 64
DEFAULT_DUAL_CAP = 1e8


class SubsetEnumerationError(ValueError):
    """Too many active constraints for exhaustive subset enumeration."""


@dataclass
class ConditionResult:
    condition: str
    verdict: str
    witness: dict = field(default_factory=dict)
    eps: float | None = None
    samples: int | None = None
    seed: int | None = None

    def to_json_dict(self):
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "witness": self.witness,
            "eps": self.eps,
            "samples": self.samples,
            "seed": self.seed,
        }


@dataclass
class CqReport:
    problem: str
    point: list
    results: list

    def result(self, condition):
        for r in self.results:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def to_json_dict(self):
        return {
            "problem": self.problem,
            "point": self.point,
            "conditions": [r.to_json_dict() for r in self.results],
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_json_dict(), indent=indent)


def _jsonable(vec):
    return [float(x) for x in np.asarray(vec, dtype=float)]


def kkt_residual(prob, p, mult, tol_act=DEFAULT_TOL_ACT):
    """(stationarity, feasibility, complementarity) at (p, mult):
    the Lagrangian gradient norm, max(||h||_inf, max_j [g_j]_+), and
    max_j min(mu_j, |g_j|). tol_act is accepted for signature parity with
    the active-set helpers; the residuals themselves are tolerance-free."""
    del tol_act
    stationarity = mf.norm(lagrangian_gradient(prob, p, mult))
    h, g = constraint_values(prob, p)
    feasibility = max(
        float(np.max(np.abs(h), initial=0.0)),
        float(np.max(np.clip(g, 0.0, None), initial=0.0)),
    )
    if prob.n_ineq:
        complementarity = float(np.max(np.minimum(mult.mu, np.abs(g))))
    else:
        complementarity = 0.0
    return stationarity, feasibility, complementarity


def gradient_family(prob, p, eq_indices, ineq_indices, tol_act=DEFAULT_TOL_ACT):
    """Assemble the family A(p, I, J): Riemannian gradients of the selected
    equality constraints (free sign) and active inequality constraints
    (sign constrained), in ambient coordinates."""
    eq_indices = tuple(sorted(int(i) for i in eq_indices))
    ineq_indices = tuple(sorted(int(j) for j in ineq_indices))
    for i in eq_indices:
        if not 1 <= i <= prob.n_eq:
            raise ValueError(f"equality index {i} out of range")
    active = set(active_set(prob, p, tol_act))
    for j in ineq_indices:
        if j not in active:
            raise ValueError(f"inequality index {j} is not active at p")
    free = [riemannian_gradient(prob.equalities[i - 1], p).vec for i in eq_indices]
    sign = [riemannian_gradient(prob.inequalities[j - 1], p).vec for j in ineq_indices]
    return VectorFamily(
        free, sign, eq_indices, ineq_indices, dim=prob.manifold.ambient_dim
    )


def _full_active_family(prob, p, tol_act):
    eq = tuple(range(1, prob.n_eq + 1))
    act = active_set(prob, p, tol_act)
    return gradient_family(prob, p, eq, act, tol_act), act


def check_licq(prob, p, tol=DEFAULT_TOL_RANK, tol_act=DEFAULT_TOL_ACT):
    """Linear independence of all equality gradients together with the active
    inequality gradients."""
    fam, act = _full_active_family(prob, p, tol_act)
    vecs = fam.free_sign + fam.sign_constrained
    rank = numerical_rank(vecs, tol)
    verdict = HOLDS if rank == len(vecs) else FAILS
    witness = {"rank": rank, "family_size": len(vecs), "active_indices": list(act)}
    return ConditionResult("LICQ", verdict, witness)


def check_mfcq(prob, p, tol=DEFAULT_TOL_RANK, tol_act=DEFAULT_TOL_ACT):
    """Positive-linear independence of the full active family."""
    fam, act = _full_active_family(prob, p, tol_act)
    cert = positive_linear_dependence(fam, tol)
    if cert is None:
        return ConditionResult("MFCQ", HOLDS, {"active_indices": list(act)})
    witness = {
        "alpha": _jsonable(cert.alpha),
        "beta": _jsonable(cert.beta),
        "active_indices": list(act),
    }
    return ConditionResult("MFCQ", FAILS, witness)


def _eval_gradients(prob, point, ineq_indices):
    """All equality gradients and the selected inequality gradients at a point."""
    eq = [riemannian_gradient(c, point).vec for c in prob.equalities]
    ineq = {j: riemannian_gradient(prob.inequalities[j - 1], point).vec for j in ineq_indices}
    return eq, ineq


def _subsets(items):
    items = tuple(items)
    for size in range(len(items) + 1):
        yield from itertools.combinations(items, size)


def _guard_enumeration(prob, act):
    total = prob.n_eq + len(act)
    if total > _ENUM_LIMIT:
        raise SubsetEnumerationError(
            f"{total} active constraints would need 2^{total} subsets; "
            f"the exhaustive check is limited to {_ENUM_LIMIT}"
        )


def _stack(eq_vecs, ineq_map, I, J):
    return [eq_vecs[i - 1] for i in I] + [ineq_map[j] for j in J]


def check_neighborhood_cq(
    prob,
    p,
    which,
    eps=DEFAULT_EPS,
    samples=DEFAULT_SAMPLES,
    seed=0,
    tol=DEFAULT_TOL_RANK,
    tol_act=DEFAULT_TOL_ACT,
):
    """Sampled test of one neighborhood constraint qualification at p.

    `which` selects among CRCQ, RCRCQ, CPLD, RCPLD, CRSC. The "for all q
    near p" quantifier of each definition runs over `samples` points drawn
    from the geodesic ball of radius eps; active sets are fixed at p. The
    verdict is EvidenceHolds when every sampled check passes, otherwise
    EvidenceFails with the violating subset and sample as witness.
    """
    if which not in NEIGHBORHOOD_CONDITIONS:
        raise ValueError(f"unknown neighborhood condition {which!r}")
    if samples < 1:
        raise ValueError("samples must be at least 1")
    act = active_set(prob, p, tol_act)
    _guard_enumeration(prob, act)
    s = prob.n_eq
    full_eq = tuple(range(1, s + 1))
    points = mf.sample_ball(p, eps, samples, seed)
    eq_p, in_p = _eval_gradients(prob, p, act)
    grads_q = [_eval_gradients(prob, q, act) for q in points]
    meta = {"eps": eps, "samples": samples, "seed": seed}

    def rank_constant(I, J):
        """First sample where rank A(q, I, J) differs from the rank at p."""
        r0 = numerical_rank(_stack(eq_p, in_p, I, J), tol)
        for t, (eq_q, in_q) in enumerate(grads_q):
            rq = numerical_rank(_stack(eq_q, in_q, I, J), tol)
            if rq != r0:
                return {
                    "eq_subset": list(I),
                    "ineq_subset": list(J),
                    "rank_at_p": r0,
                    "rank_at_sample": rq,
                    "sample_index": t,
                    "sample": _jsonable(points[t].coords),
                }
        return None

    def dependence_persists(I, J):
        """If A(p, I, J) is positively dependent, the sampled family must stay
        linearly dependent; returns a witness where it regains full rank."""
        fam = VectorFamily(
            _stack(eq_p, in_p, I, ()), _stack(eq_p, in_p, (), J),
            I, J, dim=prob.manifold.ambient_dim,
        )
        cert = positive_linear_dependence(fam, tol)
        if cert is None:
            return None
        size = len(I) + len(J)
        for t, (eq_q, in_q) in enumerate(grads_q):
            if numerical_rank(_stack(eq_q, in_q, I, J), tol) == size:
                return {
                    "eq_subset": list(I),
                    "ineq_subset": list(J),
                    "alpha": _jsonable(cert.alpha),
                    "beta": _jsonable(cert.beta),
                    "sample_index": t,
                    "sample": _jsonable(points[t].coords),
                }
        return None

    checked = 0
    if which == "CRCQ":
        for I in _subsets(full_eq):
            for J in _subsets(act):
                if not I and not J:
                    continue
                checked += 1
                witness = rank_constant(I, J)
                if witness:
                    return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
    elif which == "RCRCQ":
        for J in _subsets(act):
            checked += 1
            witness = rank_constant(full_eq, J)
            if witness:
                return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
    elif which == "CPLD":
        for I in _subsets(full_eq):
            for J in _subsets(act):
                if not I and not J:
                    continue
                checked += 1
                witness = dependence_persists(I, J)
                if witness:
                    return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
    elif which == "RCPLD":
        basis = select_basis_subset(eq_p, tol) if s else ()
        checked += 1
        witness = rank_constant(full_eq, ())
        if witness:
            witness["part"] = "equality_rank"
            return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
        for J in _subsets(act):
            checked += 1
            witness = dependence_persists(basis, J)
            if witness:
                witness["basis"] = list(basis)
                return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
        summary = {
            "subsets_checked": checked,
            "basis": list(basis),
            "active_indices": list(act),
        }
        return ConditionResult(which, EVIDENCE_HOLDS, summary, **meta)
    else:  # CRSC
        jm = j_minus(prob, p, tol, tol_act)
        witness = rank_constant(full_eq, jm)
        if witness:
            witness["j_minus"] = list(jm)
            return ConditionResult(which, EVIDENCE_FAILS, witness, **meta)
        base_rank = numerical_rank(_stack(eq_p, in_p, full_eq, jm), tol)
        summary = {
            "subsets_checked": 1,
            "j_minus": list(jm),
            "rank": base_rank,
            "active_indices": list(act),
        }
        return ConditionResult(which, EVIDENCE_HOLDS, summary, **meta)

    summary = {"subsets_checked": checked, "active_indices": list(act)}
    return ConditionResult(which, EVIDENCE_HOLDS, summary, **meta)


def j_minus(prob, p, tol=DEFAULT_TOL_RANK, tol_act=DEFAULT_TOL_ACT):
    """Active indices j whose negated gradient lies in the polar of the
    linearized cone: -grad g_j(p) = sum_i lambda_i grad h_i(p)
    + sum_{l active} mu_l grad g_l(p) with mu >= 0, decided by phase-one
    simplex per index. Requires p feasible within tol_act."""
    h, g = constraint_values(prob, p)
    violation = max(
        float(np.max(np.abs(h), initial=0.0)),
        float(np.max(np.clip(g, 0.0, None), initial=0.0)),
    )
    if violation > tol_act:
        raise ValueError("point is not feasible within the activity tolerance")
    act = active_set(prob, p, tol_act)
    eq_p, in_p = _eval_gradients(prob, p, act)
    s, n = prob.n_eq, prob.manifold.ambient_dim
    ncols = 2 * s + len(act)
    A = np.zeros((n, ncols))
    for i, v in enumerate(eq_p):
        A[:, i] = v
        A[:, s + i] = -v
    for c, j in enumerate(act):
        A[:, 2 * s + c] = in_p[j]
    members = []
    for j in act:
        target = -in_p[j]
        scale = max(1.0, float(np.linalg.norm(target)))
        res = simplex_solve(None, A, target / scale, tol=tol)
        if res.status == "optimal":
            members.append(j)
    return tuple(members)


def _vertex_candidates(columns, tol):
    """Vertices of {xi >= 0 : M xi = b} for M = [columns; ones-row], b = e_last.
    Returns the deduplicated basic feasible solutions."""
    M = np.vstack([np.stack(columns, axis=1), np.ones((1, len(columns)))])
    b = np.zeros(M.shape[0])
    b[-1] = 1.0
    ncols = M.shape[1]
    rank = numerical_rank(list(M.T), tol)
    seen = set()
    out = []
    for subset in itertools.combinations(range(ncols), rank):
        sub = M[:, subset]
        if numerical_rank(list(sub.T), tol) < rank:
            continue
        xi_s, *_ = np.linalg.lstsq(sub, b, rcond=None)
        if float(np.linalg.norm(sub @ xi_s - b)) > 1e-9:
            continue
        if float(np.min(xi_s, initial=0.0)) < -1e-9:
            continue
        xi = np.zeros(ncols)
        xi[list(subset)] = np.maximum(xi_s, 0.0)
        key = tuple(np.round(xi, 9))
        if key not in seen:
            seen.add(key)
            out.append(xi)
    return out


def qn_evidence(
    prob,
    p,
    eps=DEFAULT_EPS,
    samples=DEFAULT_SAMPLES,
    seed=0,
    tol=DEFAULT_TOL_RANK,
    tol_act=DEFAULT_TOL_ACT,
):
    """Sampled quasinormality test at p.

    Candidate violating multipliers are the vertices of the normalized null
    positive combinations {(lambda, mu): sum lambda_i grad h_i(p) +
    sum_{active} mu_j grad g_j(p) = 0, mu >= 0, l1 norm = 1}; equalities are
    split into positive and negative parts and recombined, discarding
    cancelled vertices. A candidate refutes quasinormality if at every radius
    of the ladder (eps, eps/4, eps/16) some sampled q satisfies the strict
    sign conditions lambda_i h_i(q) > 0 and mu_j g_j(q) > 0 on its support.
    """
    h, g = constraint_values(prob, p)
    violation = max(
        float(np.max(np.abs(h), initial=0.0)),
        float(np.max(np.clip(g, 0.0, None), initial=0.0)),
    )
    if violation > tol_act:
        raise ValueError("point is not feasible within the activity tolerance")
    act = active_set(prob, p, tol_act)
    _guard_enumeration(prob, act)
    s = prob.n_eq
    meta = {"eps": eps, "samples": samples, "seed": seed}
    if s + len(act) == 0:
        return ConditionResult("QN", EVIDENCE_HOLDS, {"candidates_tested": 0}, **meta)

    eq_p, in_p = _eval_gradients(prob, p, act)
    columns = []
    for v in eq_p:
        columns.append(v)
    for v in eq_p:
        columns.append(-v)
    for j in act:
        columns.append(in_p[j])

    support_tol = 1e-9
    candidates = []
    seen = set()
    for xi in _vertex_candidates(columns, tol):
        pos, neg, mu = xi[:s], xi[s:2 * s], xi[2 * s:]
        if s and float(np.max(np.minimum(pos, neg), initial=0.0)) > support_tol:
            continue  # cancelled vertex; its support is not a true sign pattern
        lam = pos - neg
        key = tuple(np.round(np.concatenate([lam, mu]), 9))
        if key in seen:
            continue
        seen.add(key)
        candidates.append((lam, mu))

    radii = (eps, eps / 4.0, eps / 16.0)
    evaluated = []
    for level, radius in enumerate(radii):
        pts = mf.sample_ball(p, radius, samples, seed + level)
        hq = np.array([[evaluate(c, q.coords) for c in prob.equalities] for q in pts])
        gq = np.array([[evaluate(prob.inequalities[j - 1], q.coords) for j in act] for q in pts])
        evaluated.append((pts, hq.reshape(len(pts), s), gq.reshape(len(pts), len(act))))

    for lam, mu in candidates:
        eq_sup = [i for i in range(s) if abs(lam[i]) > support_tol]
        in_sup = [c for c in range(len(act)) if mu[c] > support_tol]
        witness_q = None
        for pts, hq, gq in evaluated:
            mask = np.ones(len(pts), dtype=bool)
            for i in eq_sup:
                mask &= lam[i] * hq[:, i] > 0.0
            for c in in_sup:
                mask &= mu[c] * gq[:, c] > 0.0
            if not mask.any():
                witness_q = None
                break
            witness_q = pts[int(np.argmax(mask))]
        if witness_q is not None:
            witness = {
                "alpha": _jsonable(lam),
                "beta": _jsonable(mu),
                "active_indices": list(act),
                "sample": _jsonable(witness_q.coords),
            }
            return ConditionResult("QN", EVIDENCE_FAILS, witness, **meta)

    summary = {"candidates_tested": len(candidates), "active_indices": list(act)}
    return ConditionResult("QN", EVIDENCE_HOLDS, summary, **meta)


def certify(
    prob,
    p,
    eps=DEFAULT_EPS,
    samples=DEFAULT_SAMPLES,
    seed=0,
    tol=DEFAULT_TOL_RANK,
    tol_act=DEFAULT_TOL_ACT,
):
    """Run every condition at p and collect the results into a CqReport."""
    results = [
        check_licq(prob, p, tol, tol_act),
        check_mfcq(prob, p, tol, tol_act),
    ]
    for which in NEIGHBORHOOD_CONDITIONS:
        results.append(
            check_neighborhood_cq(prob, p, which, eps, samples, seed, tol, tol_act)
        )
    results.append(qn_evidence(prob, p, eps, samples, seed, tol, tol_act))
    return CqReport(prob.name, _jsonable(p.coords), results)


@dataclass
class SeqOptReport:
    problem: str
    trace_length: int
    window_start: int
    akkt_grad_norms: list
    akkt_complementarity_ok: bool
    akkt_satisfied: bool
    pakkt_gamma: list
    pakkt_gamma_divergent: bool
    pakkt_sign_violations: list
    pakkt_satisfied: bool
    scaled_grad_norms: list
    scaled_satisfied: bool
    dual_sup_norm: float
    dual_bounded: bool
    limit_matches_tail: bool

    def to_json_dict(self):
        return {
            "problem": self.problem,
            "trace_length": self.trace_length,
            "window_start": self.window_start,
            "akkt": {
                "grad_norms": self.akkt_grad_norms,
                "complementarity_ok": self.akkt_complementarity_ok,
                "satisfied": self.akkt_satisfied,
            },
            "pakkt": {
                "gamma_k": self.pakkt_gamma,
                "gamma_divergent": self.pakkt_gamma_divergent,
                "sign_condition_violations": [
                    {"k": k, "index": idx, "kind": kind}
                    for k, idx, kind in self.pakkt_sign_violations
                ],
                "satisfied": self.pakkt_satisfied,
            },
            "scaled_pakkt": {
                "grad_norms": self.scaled_grad_norms,
                "sign_condition_violations": [
                    {"k": k, "index": idx, "kind": kind}
                    for k, idx, kind in self.pakkt_sign_violations
                ],
                "satisfied": self.scaled_satisfied,
            },
            "dual_bounded": self.dual_bounded,
            "dual_sup_norm": self.dual_sup_norm,
            "limit_matches_tail": self.limit_matches_tail,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_json_dict(), indent=indent)


def analyze_sequence(
    prob,
    trace,
    limit,
    tol=1e-6,
    tol_act=DEFAULT_TOL_ACT,
    dual_cap=DEFAULT_DUAL_CAP,
):
    """Evaluate sequential optimality conditions along a solver trace against
    a limit point.

    Limit conditions are approximated on the trailing third of the trace:
    AKKT needs the final Lagrangian-gradient norm below tol and multipliers
    of limit-inactive inequalities below tol across the window. PAKKT adds
    sign conditions whenever the dual scale gamma_k shows divergence
    (final gamma >= 1/tol): any window index whose multiplier-to-gamma ratio
    stays above tol must have lambda_i h_i > 0 (resp. mu_j g_j > 0).
    Scaled-PAKKT is the same with the stationarity residual divided by
    gamma_k. Dual boundedness compares sup_k ||(lambda, mu)||_inf to dual_cap.
    """
    records = list(trace.records)
    if not records:
        raise ValueError("trace is empty")
    if limit.manifold != prob.manifold:
        raise ValueError("limit point does not live on the problem manifold")

    tail_gap = mf.dist(limit, records[-1].point)
    limit_matches_tail = tail_gap <= max(100.0 * tol, 1e-3)
    if not limit_matches_tail:
        warnings.warn(
            f"limit point is {tail_gap:.3g} away from the trace tail; "
            "sequence verdicts may not describe this limit",
            stacklevel=2,
        )

    window = max(1, math.ceil(len(records) / 3))
    window_start = records[-window].k

    grad_norms, gammas = [], []
    hs, gs = [], []
    for r in records:
        mult = MultiplierEstimate(r.lam, np.maximum(r.mu, 0.0))
        grad_norms.append(float(mf.norm(lagrangian_gradient(prob, r.point, mult))))
        gamma = max(
            1.0,
            float(np.max(np.abs(r.lam), initial=0.0)),
            float(np.max(np.abs(r.mu), initial=0.0)),
        )
        gammas.append(gamma)
        h, g = constraint_values(prob, r.point)
        hs.append(h)
        gs.append(g)

    _, g_lim = constraint_values(prob, limit)
    inactive = [j for j in range(prob.n_ineq) if g_lim[j] < -tol_act]
    comp_ok = all(
        float(r.mu[j]) <= tol for r in records[-window:] for j in inactive
    )
    akkt_ok = grad_norms[-1] <= tol and comp_ok

    gamma_divergent = gammas[-1] >= 1.0 / tol
    violations = []
    if gamma_divergent:
        for idx_r in range(len(records) - window, len(records)):
            r, gamma = records[idx_r], gammas[idx_r]
            for i in range(prob.n_eq):
                if abs(r.lam[i]) / gamma > tol and r.lam[i] * hs[idx_r][i] <= 0.0:
                    violations.append((r.k, i + 1, "eq"))
            for j in range(prob.n_ineq):
                if r.mu[j] / gamma > tol and r.mu[j] * gs[idx_r][j] <= 0.0:
                    violations.append((r.k, j + 1, "ineq"))
    pakkt_ok = akkt_ok and not violations

    scaled_norms = [gn / gamma for gn, gamma in zip(grad_norms, gammas)]
    scaled_ok = scaled_norms[-1] <= tol and comp_ok and not violations

    dual_sup = max(
        max(
            float(np.max(np.abs(r.lam), initial=0.0)),
            float(np.max(np.abs(r.mu), initial=0.0)),
        )
        for r in records
    )
    return SeqOptReport(
        problem=trace.problem_name,
        trace_length=len(records),
        window_start=window_start,
        akkt_grad_norms=grad_norms,
        akkt_complementarity_ok=comp_ok,
        akkt_satisfied=akkt_ok,
        pakkt_gamma=gammas,
        pakkt_gamma_divergent=gamma_divergent,
        pakkt_sign_violations=violations,
        pakkt_satisfied=pakkt_ok,
        scaled_grad_norms=scaled_norms,
        scaled_satisfied=scaled_ok,
        dual_sup_norm=dual_sup,
        dual_bounded=dual_sup < dual_cap,
        limit_matches_tail=limit_matches_tail,
    )
