"""Dense small-scale linear algebra for constraint-gradient families.

Everything in this module operates on a handful of vectors in a low-dimensional
ambient space, so the implementations favor explicit, checkable constructions
over scalability: ranks come from full SVDs, and positive-linear-dependence
certificates from a dense two-phase simplex kept in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "VectorFamily",
    "DependenceCertificate",
    "SimplexCyclingError",
    "SimplexResult",
    "simplex_solve",
    "numerical_rank",
    "positive_linear_dependence",
    "caratheodory_reduce",
    "select_basis_subset",
]


class SimplexCyclingError(RuntimeError):
    """Pivot-count guard tripped; signals badly degenerate input."""


@dataclass
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None


def simplex_solve(c, A, b, tol=1e-9, max_pivots=None):
    """Minimize c @ x subject to A x = b, x >= 0 (dense standard form).

    Two-phase tableau simplex with Bland's rule throughout, which precludes
    cycling; the pivot guard only catches pathological inputs. Pass c=None
    for a pure feasibility problem (phase one only).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float)).copy()
    b = np.asarray(b, dtype=float).copy()
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("right-hand side length does not match the row count")
    if m == 0:
        x = np.zeros(n)
        return SimplexResult("optimal", x, 0.0)
    if max_pivots is None:
        max_pivots = 200 * (n + m + 1)

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase one: minimize the sum of artificial variables. The artificial
    # identity block is the starting basis, so pricing it out leaves reduced
    # costs -sum(A) on the original columns.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    pivots = _bland_loop(T, basis, n + m, tol, max_pivots)
    if -T[m, -1] > tol:
        return SimplexResult("infeasible", None, None)

    # Drive leftover zero-level artificials out of the basis; rows that admit
    # no original pivot column are redundant constraints and are dropped.
    drop = []
    for i in range(m):
        if basis[i] < n:
            continue
        row = np.abs(T[i, :n])
        j = int(np.argmax(row))
        if row[j] > tol:
            _pivot(T, basis, i, j)
        else:
            drop.append(i)
    if drop:
        keep = [i for i in range(m) if i not in drop]
        T = T[keep + [m], :]
        basis = [basis[i] for i in keep]
        m = len(basis)

    # Discard artificial columns and rebuild the objective row for c.
    T = np.hstack([T[:, :n], T[:, -1:]])
    if c is None:
        cvec = np.zeros(n)
    else:
        cvec = np.asarray(c, dtype=float)
        if cvec.shape != (n,):
            raise ValueError("objective length does not match the column count")
    T[m, :n] = cvec
    T[m, -1] = 0.0
    for i in range(m):
        T[m, :] -= cvec[basis[i]] * T[i, :]

    status = "optimal"
    try:
        _bland_loop(T, basis, n, tol, max_pivots - pivots)
    except _Unbounded:
        status = "unbounded"
        return SimplexResult(status, None, None)

    x = np.zeros(n)
    for i in range(m):
        x[basis[i]] = max(T[i, -1], 0.0)
    return SimplexResult(status, x, float(-T[m, -1]))


class _Unbounded(Exception):
    pass


def _bland_loop(T, basis, ncols, tol, max_pivots):
    """Run Bland-rule pivots until the objective row is nonnegative."""
    m = len(basis)
    pivots = 0
    while True:
        enter = -1
        for j in range(ncols):
            if T[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return pivots
        leave, best = -1, None
        for i in range(m):
            if T[i, enter] > tol:
                ratio = T[i, -1] / T[i, enter]
                key = (ratio, basis[i])
                if best is None or key < best:
                    best, leave = key, i
        if leave < 0:
            raise _Unbounded()
        if pivots >= max_pivots:
            raise SimplexCyclingError("simplex pivot guard exceeded")
        _pivot(T, basis, leave, enter)
        pivots += 1


def _pivot(T, basis, row, col):
    T[row, :] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r, :] -= T[r, col] * T[row, :]
    basis[row] = col


def _as_vector_list(vectors):
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    for v in vecs:
        if v.ndim != 1:
            raise ValueError("family members must be one-dimensional vectors")
    if len({v.shape[0] for v in vecs}) > 1:
        raise ValueError("family members have mismatched dimensions")
    return vecs


@dataclass
class VectorFamily:
    """A gradient family (V, W): free-sign vectors coming from equality
    constraints and sign-constrained vectors from inequality constraints.

    Each vector carries the 1-based index of the constraint it came from.
    Duplicates are preserved; the family is a multiset.
    """

    free_sign: list
    sign_constrained: list
    free_indices: tuple = ()
    sign_indices: tuple = ()
    dim: int = 0

    def __post_init__(self):
        self.free_sign = _as_vector_list(self.free_sign)
        self.sign_constrained = _as_vector_list(self.sign_constrained)
        members = self.free_sign + self.sign_constrained
        if members:
            dims = {v.shape[0] for v in members}
            if len(dims) > 1:
                raise ValueError("family members have mismatched dimensions")
            found = dims.pop()
            if self.dim and self.dim != found:
                raise ValueError("declared dimension does not match the vectors")
            self.dim = found
        if self.dim < 1 and members:
            raise ValueError("family dimension must be at least 1")
        if self.free_indices:
            self.free_indices = tuple(int(i) for i in self.free_indices)
            if len(self.free_indices) != len(self.free_sign):
                raise ValueError("free_indices length mismatch")
        else:
            self.free_indices = tuple(range(1, len(self.free_sign) + 1))
        if self.sign_indices:
            self.sign_indices = tuple(int(j) for j in self.sign_indices)
            if len(self.sign_indices) != len(self.sign_constrained):
                raise ValueError("sign_indices length mismatch")
        else:
            self.sign_indices = tuple(range(1, len(self.sign_constrained) + 1))

    @property
    def size(self):
        return len(self.free_sign) + len(self.sign_constrained)


@dataclass
class DependenceCertificate:
    """Nonzero coefficients (alpha, beta) with beta >= 0 witnessing
    sum(alpha_i V_i) + sum(beta_j W_j) = 0 up to the decision tolerance."""

    alpha: np.ndarray
    beta: np.ndarray
    norm_witness: float


def numerical_rank(vectors, tol_rank=1e-8):
    """Number of singular values above tol_rank * sigma_max (0 for sigma_max = 0)."""
    if tol_rank <= 0:
        raise ValueError("tol_rank must be positive")
    vecs = _as_vector_list(vectors)
    if not vecs:
        return 0
    sv = np.linalg.svd(np.stack(vecs), compute_uv=False)
    if sv.size == 0 or sv[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sv > tol_rank * sv[0]))


def _null_combination(M, tol, prefer_tail=0):
    """A unit null combination of the rows of M: coefficients c with
    c @ M ~ 0. With prefer_tail > 0, pick the null direction whose last
    prefer_tail entries have the largest magnitude."""
    sv = np.linalg.svd(M.T, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    _, _, vt = np.linalg.svd(M.T)
    rows = M.shape[0]
    cands = [vt[i] for i in range(rows) if i >= sv.size or sv[i] <= tol * max(smax, 1e-300)]
    if not cands:
        return None
    if prefer_tail:
        cands.sort(key=lambda cd: -np.max(np.abs(cd[-prefer_tail:]), initial=0.0))
    return cands[0]


def positive_linear_dependence(family, tol=1e-8):
    """Certificate of positive-linear dependence, or None when the family is
    positive-linearly independent.

    Dependence splits into two exact cases. Either the free-sign part alone
    is linearly dependent (certificate with beta = 0, found by SVD), or some
    null combination uses beta != 0, which after scaling to sum(beta) = 1
    becomes an LP feasibility problem in the split variables
    (alpha+, alpha-, beta) decided by the in-module simplex.
    """
    V, W = family.free_sign, family.sign_constrained
    s, m = len(V), len(W)
    if s + m == 0:
        return None
    if s and numerical_rank(V, tol) < s:
        alpha = _null_combination(np.stack(V), tol)
        alpha = alpha / np.max(np.abs(alpha))
        return DependenceCertificate(alpha, np.zeros(m), 1.0)
    if m == 0:
        return None

    n = family.dim
    ncols = 2 * s + m
    A = np.zeros((n + 1, ncols))
    for i, v in enumerate(V):
        A[:n, i] = v
        A[:n, s + i] = -v
    for j, w in enumerate(W):
        A[:n, 2 * s + j] = w
    A[n, 2 * s:] = 1.0
    b = np.zeros(n + 1)
    b[n] = 1.0

    try:
        res = simplex_solve(None, A, b, tol=tol)
    except SimplexCyclingError:
        # Retry with a perturbed normalization; feasibility is scale-invariant.
        A[n, 2 * s:] = 1.0 + 1e-3 * np.arange(1, m + 1)
        res = simplex_solve(None, A, b, tol=tol)
    if res.status != "optimal":
        return None
    alpha = res.x[:s] - res.x[s:2 * s]
    beta = np.maximum(res.x[2 * s:], 0.0)
    witness = float(max(np.max(np.abs(alpha), initial=0.0), np.max(beta, initial=0.0)))
    return DependenceCertificate(alpha, beta, witness)


def caratheodory_reduce(u, v, alpha, beta, x, tol=1e-8):
    """Thin the decomposition x = sum(alpha_i u_i) + sum(beta_j v_j) down to a
    linearly independent support.

    Returns (J, alpha_bar, beta_bar) where J is the 1-based surviving subset
    of v (sorted) and beta_bar its coefficients aligned with J. Surviving
    coefficients keep the sign of the originals (beta_bar * beta > 0), the
    reconstruction of x is preserved up to tol, and {u} + {v_j : j in J} is
    linearly independent. Precondition: u is linearly independent and all
    beta_j are nonzero.
    """
    u = _as_vector_list(u)
    v = _as_vector_list(v)
    alpha_bar = np.asarray(alpha, dtype=float).copy()
    beta_full = np.asarray(beta, dtype=float).copy()
    x = np.asarray(x, dtype=float)
    if len(alpha_bar) != len(u) or len(beta_full) != len(v):
        raise ValueError("coefficient lengths do not match the vector lists")
    if np.any(beta_full == 0.0):
        raise ValueError("beta entries must be nonzero")
    recon = x - sum((alpha_bar[i] * u[i] for i in range(len(u))), np.zeros_like(x))
    recon -= sum((beta_full[j] * v[j] for j in range(len(v))), np.zeros_like(x))
    if np.linalg.norm(recon) > tol * max(1.0, float(np.linalg.norm(x))):
        raise ValueError("x is not reconstructed by the inputs")

    sign0 = np.sign(beta_full)
    drop_tol = 1e-12 * max(1.0, float(np.max(np.abs(beta_full))))
    J = list(range(len(v)))
    while True:
        fam = u + [v[j] for j in J]
        if not fam or numerical_rank(fam, tol) == len(fam):
            break
        cd = _null_combination(np.stack(fam), tol, prefer_tail=len(J))
        if cd is None or np.max(np.abs(cd[len(u):]), initial=0.0) <= 1e-12:
            raise ValueError("free family u is linearly dependent")
        c, d = cd[:len(u)], cd[len(u):]
        # Shift coefficients along the null combination until the first one
        # hits zero; the minimal shift keeps all surviving signs intact.
        cands = []
        for r, j in enumerate(J):
            if abs(d[r]) > 1e-12:
                cands.append((abs(beta_full[j] / d[r]), -j, r))
        cands.sort()
        _, _, r_star = cands[0]
        t = beta_full[J[r_star]] / d[r_star]
        alpha_bar -= t * c
        for r, j in enumerate(J):
            beta_full[j] -= t * d[r]
        beta_full[J[r_star]] = 0.0
        J = [j for j in J if abs(beta_full[j]) > drop_tol]

    for j in J:
        if beta_full[j] * sign0[j] <= 0.0:
            raise AssertionError("sign condition lost during reduction")
    subset = tuple(j + 1 for j in J)
    return subset, alpha_bar, np.array([beta_full[j] for j in J])


def select_basis_subset(vectors, tol_rank=1e-8):
    """Greedy basis selection in index order: keep a vector exactly when it
    raises the numerical rank of the kept set. Returns 1-based indices; the
    selected subset spans the same numerical column space as the full family.
    """
    vecs = _as_vector_list(vectors)
    chosen, K, rank = [], [], 0
    for idx, vec in enumerate(vecs, start=1):
        r = numerical_rank(chosen + [vec], tol_rank)
        if r > rank:
            chosen.append(vec)
            K.append(idx)
            rank = r
    return tuple(K)
