"""Embedded-manifold geometry: Euclidean space, the unit sphere, and finite
products, with points and tangent vectors held in ambient coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ManifoldSpec",
    "Point",
    "Tangent",
    "AntipodalError",
    "euclidean",
    "sphere",
    "product",
    "parse_manifold",
    "make_point",
    "make_tangent",
    "zero_tangent",
    "inner",
    "norm",
    "exp",
    "log",
    "dist",
    "project_tangent",
    "sample_ball",
]

_SPHERE_NORM_TOL = 1e-12
_BASE_MATCH_TOL = 1e-10
_ANTIPODAL_TOL = 1e-8
_SMALL_ANGLE = 1e-8


class AntipodalError(ValueError):
    """log is undefined at (near-)antipodal sphere points."""


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str  # "euclidean" | "sphere" | "product"
    ambient_dim: int
    intrinsic_dim: int
    factors: tuple = ()

    @property
    def injectivity_radius_bound(self):
        if self.kind == "euclidean":
            return math.inf
        if self.kind == "sphere":
            return math.pi
        return min(f.injectivity_radius_bound for f in self.factors)

    def __str__(self):
        if self.kind == "product":
            return "product:[" + ",".join(str(f) for f in self.factors) + "]"
        return f"{self.kind}:{self.ambient_dim}"


def euclidean(n):
    if n < 1:
        raise ValueError("euclidean space needs dimension >= 1")
    return ManifoldSpec("euclidean", n, n)


def sphere(ambient_dim):
    if ambient_dim < 2:
        raise ValueError("sphere needs ambient dimension >= 2")
    return ManifoldSpec("sphere", ambient_dim, ambient_dim - 1)


def product(factors):
    factors = tuple(factors)
    if not factors:
        raise ValueError("product needs at least one factor")
    return ManifoldSpec(
        "product",
        sum(f.ambient_dim for f in factors),
        sum(f.intrinsic_dim for f in factors),
        factors,
    )


def parse_manifold(text):
    """Parse 'euclidean:<n>', 'sphere:<ambient_dim>', or 'product:[...]'."""
    t = text.strip()
    for kind, builder in (("euclidean", euclidean), ("sphere", sphere)):
        prefix = kind + ":"
        if t.startswith(prefix):
            body = t[len(prefix):].strip()
            if not body.isdigit():
                raise ValueError(f"bad {kind} dimension in manifold spec: {text!r}")
            return builder(int(body))
    if t.startswith("product:"):
        body = t[len("product:"):].strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise ValueError(f"product spec needs a bracketed factor list: {text!r}")
        inner_text = body[1:-1].strip()
        if not inner_text:
            raise ValueError("product needs at least one factor")
        parts, depth, cur = [], 0, []
        for ch in inner_text:
            if ch == "[":
                depth += 1
            elif ch == "]":
                depth -= 1
            if ch == "," and depth == 0:
                parts.append("".join(cur))
                cur = []
            else:
                cur.append(ch)
        parts.append("".join(cur))
        return product(parse_manifold(part) for part in parts)
    raise ValueError(f"unrecognized manifold spec: {text!r}")


def _primitive_blocks(spec):
    """Yield (start, stop, factor) ambient slices for each primitive factor,
    flattening nested products."""
    if spec.kind == "product":
        start = 0
        for f in spec.factors:
            for s, e, g in _primitive_blocks(f):
                yield start + s, start + e, g
            start += f.ambient_dim
    else:
        yield 0, spec.ambient_dim, spec


@dataclass(frozen=True)
class Point:
    manifold: ManifoldSpec
    coords: np.ndarray


@dataclass(frozen=True)
class Tangent:
    base: Point
    vec: np.ndarray


def _freeze(arr):
    arr.flags.writeable = False
    return arr


def make_point(spec, coords):
    """Validate ambient coordinates and renormalize sphere blocks onto the
    manifold; rejects near-zero sphere blocks rather than guessing a point."""
    x = np.array(coords, dtype=float)
    if x.shape != (spec.ambient_dim,):
        raise ValueError(
            f"expected {spec.ambient_dim} coordinates, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("coordinates must be finite")
    for start, stop, f in _primitive_blocks(spec):
        if f.kind == "sphere":
            nrm = float(np.linalg.norm(x[start:stop]))
            if nrm < _SPHERE_NORM_TOL:
                raise ValueError("cannot normalize a near-zero sphere block")
            x[start:stop] /= nrm
    return Point(spec, _freeze(x))


def make_tangent(p, vec):
    """Wrap an ambient vector as a tangent at p, projecting onto the tangent
    space so the result always satisfies the tangency invariant."""
    v = np.array(vec, dtype=float)
    if v.shape != (p.manifold.ambient_dim,):
        raise ValueError("tangent dimension does not match the manifold")
    return Tangent(p, _freeze(_project_vec(p.manifold, p.coords, v)))


def zero_tangent(p):
    return Tangent(p, _freeze(np.zeros(p.manifold.ambient_dim)))


def _project_vec(spec, x, w):
    out = w.astype(float, copy=True)
    for start, stop, f in _primitive_blocks(spec):
        if f.kind == "sphere":
            blk = x[start:stop]
            out[start:stop] -= (blk @ out[start:stop]) * blk
    return out


def project_tangent(p, ambient_vec):
    """Orthogonal projection of an ambient vector onto the tangent space at p."""
    w = np.asarray(ambient_vec, dtype=float)
    if w.shape != (p.manifold.ambient_dim,):
        raise ValueError("ambient vector dimension does not match the manifold")
    return Tangent(p, _freeze(_project_vec(p.manifold, p.coords, w)))


def _check_same_base(u, v):
    if u.base.manifold != v.base.manifold:
        raise ValueError("tangents live on different manifolds")
    if float(np.max(np.abs(u.base.coords - v.base.coords), initial=0.0)) > _BASE_MATCH_TOL:
        raise ValueError("tangents have different base points")


def inner(u, v):
    """Riemannian inner product (the ambient dot product on these manifolds)."""
    _check_same_base(u, v)
    return float(u.vec @ v.vec)


def norm(v):
    return float(np.linalg.norm(v.vec))


def _exp_block(f, p, w):
    if f.kind == "euclidean":
        return p + w
    t = float(np.linalg.norm(w))
    if t < _SMALL_ANGLE:
        out = p + w
    else:
        out = math.cos(t) * p + (math.sin(t) / t) * w
    return out / np.linalg.norm(out)


def exp(v):
    """Exponential map: follow the geodesic from v.base with velocity v for
    unit time. Exact on each factor; sphere blocks are renormalized to keep
    the unit-norm invariant against rounding drift."""
    p = v.base
    out = np.empty(p.manifold.ambient_dim)
    for start, stop, f in _primitive_blocks(p.manifold):
        out[start:stop] = _exp_block(f, p.coords[start:stop], v.vec[start:stop])
    return Point(p.manifold, _freeze(out))


def _log_block(f, p, q):
    if f.kind == "euclidean":
        return q - p
    c = float(np.clip(p @ q, -1.0, 1.0))
    if c <= -1.0 + _ANTIPODAL_TOL:
        raise AntipodalError("log is undefined for (near-)antipodal points")
    theta = math.acos(c)
    w = q - c * p
    nw = float(np.linalg.norm(w))
    if nw <= 1e-16:
        return np.zeros_like(p)
    return (theta / nw) * w


def log(p, q):
    """Inverse of exp: the tangent at p whose geodesic reaches q at unit time.
    Raises AntipodalError on sphere blocks with no unique minimizing geodesic."""
    if p.manifold != q.manifold:
        raise ValueError("points live on different manifolds")
    out = np.empty(p.manifold.ambient_dim)
    for start, stop, f in _primitive_blocks(p.manifold):
        out[start:stop] = _log_block(f, p.coords[start:stop], q.coords[start:stop])
    return Tangent(p, _freeze(out))


def dist(p, q):
    """Geodesic distance; the product metric is the l2 norm of factor distances."""
    if p.manifold != q.manifold:
        raise ValueError("points live on different manifolds")
    total = 0.0
    for start, stop, f in _primitive_blocks(p.manifold):
        a, b = p.coords[start:stop], q.coords[start:stop]
        if f.kind == "euclidean":
            d = float(np.linalg.norm(a - b))
        else:
            d = math.acos(float(np.clip(a @ b, -1.0, 1.0)))
        total += d * d
    return math.sqrt(total)


def sample_ball(p, eps, count, seed):
    """Draw `count` points at geodesic distance in (0, eps) from p, via
    uniform radii along directions sampled from the projected Gaussian.
    Deterministic in `seed`; requires eps below the injectivity radius."""
    spec = p.manifold
    if not 0.0 < eps < spec.injectivity_radius_bound:
        raise ValueError("eps must lie in (0, injectivity radius bound)")
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        raw = rng.standard_normal(spec.ambient_dim)
        u = _project_vec(spec, p.coords, raw)
        nu = float(np.linalg.norm(u))
        r = float(rng.uniform(0.0, eps))
        if nu < 1e-12 or r == 0.0:
            continue
        out.append(exp(Tangent(p, _freeze((r / nu) * u))))
    return out
