"""Model Hadamard spaces and their metric primitives.

Four locally compact CAT(0) spaces are supported:

* ``euclidean(dim)`` -- flat R^dim.
* ``hyperbolic(dim)`` -- H^dim in the hyperboloid model, points are
  (dim+1)-vectors with Minkowski square -1 and positive first coordinate.
* ``spd(order)`` -- symmetric positive definite matrices with the
  affine-invariant metric.
* ``spider(legs)`` -- ``legs`` half-lines glued at a hub; a point is the pair
  ``(leg, radius)`` with legs numbered from 1 and the hub stored as ``(0, 0)``.

Every space has a *model* object working on raw numpy arrays with arbitrary
leading batch dimensions; :class:`Point` and :class:`TangentVector` wrap single
validated coordinates for the public API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

KINDS = ("euclidean", "hyperbolic", "spd", "spider")
MANIFOLD_KINDS = ("euclidean", "hyperbolic", "spd")

_SIZE_NAMES = {"euclidean": "dim", "hyperbolic": "dim", "spd": "order", "spider": "legs"}


class GeometryError(ValueError):
    """Invalid point, tangent vector or mismatched spaces."""


class UnsupportedOperation(GeometryError):
    """The operation needs a smooth structure the space does not have."""


@dataclass(frozen=True)
class SpaceDescriptor:
    kind: str
    size: int
    tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeometryError(f"unknown space kind {self.kind!r}")
        minimum = 3 if self.kind == "spider" else 1
        if int(self.size) != self.size or self.size < minimum:
            raise GeometryError(f"{self.kind} needs {_SIZE_NAMES[self.kind]} >= {minimum}, got {self.size}")
        if not self.tol > 0:
            raise GeometryError("tolerance must be positive")

    @property
    def model(self) -> "_Model":
        return _model_for(self.kind, self.size)

    @property
    def is_manifold(self) -> bool:
        return self.kind in MANIFOLD_KINDS

    @property
    def coord_shape(self) -> tuple[int, ...]:
        return self.model.shape

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, _SIZE_NAMES[self.kind]: int(self.size), "tol": self.tol}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SpaceDescriptor":
        kind = d["kind"]
        if kind not in KINDS:
            raise GeometryError(f"unknown space kind {kind!r}")
        key = _SIZE_NAMES[kind]
        if key not in d:
            raise GeometryError(f"space of kind {kind!r} needs a {key!r} entry")
        return cls(kind, int(d[key]), float(d.get("tol", 1e-9)))

    def __str__(self):
        return f"{self.kind}({self.size})"


def euclidean(dim: int, tol: float = 1e-9) -> SpaceDescriptor:
    return SpaceDescriptor("euclidean", dim, tol)


def hyperbolic(dim: int, tol: float = 1e-9) -> SpaceDescriptor:
    return SpaceDescriptor("hyperbolic", dim, tol)


def spd(order: int, tol: float = 1e-9) -> SpaceDescriptor:
    return SpaceDescriptor("spd", order, tol)


def spider(legs: int, tol: float = 1e-9) -> SpaceDescriptor:
    return SpaceDescriptor("spider", legs, tol)


# ---------------------------------------------------------------------------
# array-level models
# ---------------------------------------------------------------------------

class _Model:
    shape: tuple[int, ...] = ()

    def dist(self, a, b):
        raise NotImplementedError

    def geodesic(self, a, b, t):
        raise NotImplementedError

    def exp(self, x, v):
        raise UnsupportedOperation(f"{type(self).__name__} has no exponential map")

    def log(self, x, y):
        raise UnsupportedOperation(f"{type(self).__name__} has no logarithm map")

    def inner(self, x, u, v):
        raise UnsupportedOperation(f"{type(self).__name__} has no tangent spaces")

    def check(self, coords, tol):
        """Return normalized coordinates or raise GeometryError."""
        return coords

    def check_tangent(self, x, v, tol):
        raise UnsupportedOperation(f"{type(self).__name__} has no tangent spaces")

    def normalize(self, coords):
        return coords

    def origin(self):
        raise NotImplementedError

    def random(self, rng, count, radius):
        raise NotImplementedError

    def random_tangent(self, rng, x, count, radius):
        raise UnsupportedOperation(f"{type(self).__name__} has no tangent spaces")


class _Euclidean(_Model):
    def __init__(self, dim):
        self.dim = dim
        self.shape = (dim,)

    def dist(self, a, b):
        return np.linalg.norm(np.asarray(b) - np.asarray(a), axis=-1)

    def geodesic(self, a, b, t):
        t = np.asarray(t)[..., None]
        return a + t * (b - a)

    def exp(self, x, v):
        return x + v

    def log(self, x, y):
        return y - x

    def inner(self, x, u, v):
        return np.sum(u * v, axis=-1)

    def check(self, coords, tol):
        if coords.shape != self.shape or not np.all(np.isfinite(coords)):
            raise GeometryError(f"euclidean point needs {self.dim} finite coordinates")
        return coords

    def check_tangent(self, x, v, tol):
        if v.shape != self.shape or not np.all(np.isfinite(v)):
            raise GeometryError("invalid euclidean tangent vector")
        return v

    def origin(self):
        return np.zeros(self.dim)

    def random(self, rng, count, radius):
        return radius * rng.standard_normal((count, self.dim))

    def random_tangent(self, rng, x, count, radius):
        return radius * rng.standard_normal((count, self.dim))


def minkowski(u, v):
    """Lorentzian pairing -u0 v0 + sum_i ui vi over the last axis."""
    u = np.asarray(u)
    v = np.asarray(v)
    return np.sum(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]


class _Hyperbolic(_Model):
    def __init__(self, dim):
        self.dim = dim
        self.shape = (dim + 1,)

    def dist(self, a, b):
        # 2 asinh(|b-a|_M / 2) keeps full relative accuracy for nearby points,
        # unlike acosh(-<a,b>).
        diff = np.asarray(b) - np.asarray(a)
        sq = np.maximum(minkowski(diff, diff), 0.0)
        return 2.0 * np.arcsinh(0.5 * np.sqrt(sq))

    def log(self, x, y):
        diff = y - x
        sq = np.maximum(minkowski(diff, diff), 0.0)
        d = 2.0 * np.arcsinh(0.5 * np.sqrt(sq))
        # y + <x,y> x  with  <x,y> + 1 = -|y-x|^2/2
        u = diff - 0.5 * sq[..., None] * x
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(d > 1e-12, d / np.sinh(np.where(d > 1e-12, d, 1.0)), 1.0)
        return coef[..., None] * u

    def exp(self, x, v):
        n = np.sqrt(np.maximum(self.inner(x, v, v), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            sinhc = np.where(n > 1e-12, np.sinh(n) / np.where(n > 1e-12, n, 1.0), 1.0)
        y = np.cosh(n)[..., None] * x + sinhc[..., None] * v
        return self.normalize(y)

    def geodesic(self, a, b, t):
        # (sinh((1-t)d) a + sinh(td) b) / sinh d is far better conditioned
        # than exp_a(t log_a b) once the points sit away from the vertex
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = np.asarray(t, dtype=float)[..., None]
        d = self.dist(a, b)[..., None]
        small = d < 1e-8
        safe = np.where(small, 1.0, d)
        wa = np.where(small, 1.0 - t, np.sinh((1.0 - t) * safe) / np.sinh(safe))
        wb = np.where(small, t, np.sinh(t * safe) / np.sinh(safe))
        return self.normalize(wa * a + wb * b)

    def inner(self, x, u, v):
        # Binet-Cauchy form of <u,v>_M for u, v tangent at x: uses only spatial
        # parts and avoids cancelling the large time components
        x = np.asarray(x)
        xs, us, vs = x[..., 1:], np.asarray(u)[..., 1:], np.asarray(v)[..., 1:]
        mu = xs[..., :, None] * us[..., None, :] - xs[..., None, :] * us[..., :, None]
        mv = xs[..., :, None] * vs[..., None, :] - xs[..., None, :] * vs[..., :, None]
        wedge = 0.5 * np.sum(mu * mv, axis=(-1, -2))
        return (np.sum(us * vs, axis=-1) + wedge) / x[..., 0] ** 2

    def normalize(self, coords):
        coords = np.array(coords, dtype=float, copy=True)
        spatial = coords[..., 1:]
        coords[..., 0] = np.sqrt(1.0 + np.sum(spatial * spatial, axis=-1))
        return coords

    def check(self, coords, tol):
        if coords.shape != self.shape or not np.all(np.isfinite(coords)):
            raise GeometryError(f"hyperbolic point needs {self.shape[0]} finite coordinates")
        if coords[0] <= 0:
            raise GeometryError("hyperbolic point must lie on the upper sheet")
        scale = 1.0 + float(coords @ coords)
        if abs(minkowski(coords, coords) + 1.0) > tol * scale:
            raise GeometryError("point is off the hyperboloid <x,x>_M = -1")
        return self.normalize(coords)

    def check_tangent(self, x, v, tol):
        if v.shape != self.shape or not np.all(np.isfinite(v)):
            raise GeometryError("invalid hyperbolic tangent vector")
        scale = (1.0 + np.linalg.norm(x)) * (1.0 + np.linalg.norm(v))
        if abs(minkowski(x, v)) > tol * scale:
            raise GeometryError("tangent vector is not Minkowski-orthogonal to its base")
        return v

    def origin(self):
        o = np.zeros(self.dim + 1)
        o[0] = 1.0
        return o

    def random(self, rng, count, radius):
        o = np.broadcast_to(self.origin(), (count, self.dim + 1))
        return self.exp(o, self.random_tangent(rng, o, count, radius))

    def random_tangent(self, rng, x, count, radius):
        x = np.broadcast_to(x, (count, self.dim + 1))
        z = np.zeros((count, self.dim + 1))
        z[:, 1:] = radius * rng.standard_normal((count, self.dim))
        # project the ambient vector onto T_x (z + <x,z> x), then restore the
        # drawn length, which the projection inflates far from the vertex
        v = z + minkowski(x, z)[:, None] * x
        want = np.linalg.norm(z, axis=-1)
        have = np.sqrt(np.maximum(self.inner(x, v, v), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(have > 0, want / np.where(have > 0, have, 1.0), 0.0)
        return scale[:, None] * v


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _eig_apply(m, fn):
    w, q = np.linalg.eigh(m)
    return (q * fn(w)[..., None, :]) @ np.swapaxes(q, -1, -2)


class _SPD(_Model):
    def __init__(self, order):
        self.order = order
        self.shape = (order, order)

    def _whiten(self, a, b):
        """Return (L, L^-1 B L^-T) with L the Cholesky factor of A."""
        chol = np.linalg.cholesky(a)
        x = np.linalg.solve(chol, b)
        m = np.linalg.solve(chol, np.swapaxes(x, -1, -2))
        return chol, _sym(m)

    def dist(self, a, b):
        _, m = self._whiten(np.asarray(a), np.asarray(b))
        w = np.linalg.eigvalsh(m)
        return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))

    def geodesic(self, a, b, t):
        chol, m = self._whiten(a, b)
        t = np.asarray(t, dtype=float)[..., None]
        w, q = np.linalg.eigh(m)
        mt = (q * np.exp(t * np.log(w))[..., None, :]) @ np.swapaxes(q, -1, -2)
        return _sym(chol @ mt @ np.swapaxes(chol, -1, -2))

    def log(self, x, y):
        chol, m = self._whiten(x, y)
        return _sym(chol @ _eig_apply(m, np.log) @ np.swapaxes(chol, -1, -2))

    def exp(self, x, v):
        chol, m = self._whiten(x, v)
        return _sym(chol @ _eig_apply(m, np.exp) @ np.swapaxes(chol, -1, -2))

    def inner(self, x, u, v):
        _, wu = self._whiten(x, u)
        _, wv = self._whiten(x, v)
        return np.sum(wu * wv, axis=(-2, -1))

    def normalize(self, coords):
        return _sym(np.asarray(coords, dtype=float))

    def check(self, coords, tol):
        if coords.shape != self.shape or not np.all(np.isfinite(coords)):
            raise GeometryError(f"spd point needs a finite {self.order}x{self.order} matrix")
        scale = max(1.0, float(np.max(np.abs(coords))))
        if np.max(np.abs(coords - coords.T)) > tol * scale:
            raise GeometryError("spd point is not symmetric")
        coords = _sym(coords)
        if np.linalg.eigvalsh(coords)[0] <= tol:
            raise GeometryError("spd point is not positive definite")
        return coords

    def check_tangent(self, x, v, tol):
        if v.shape != self.shape or not np.all(np.isfinite(v)):
            raise GeometryError("invalid spd tangent vector")
        scale = max(1.0, float(np.max(np.abs(v))))
        if np.max(np.abs(v - v.T)) > tol * scale:
            raise GeometryError("spd tangent vector is not symmetric")
        return _sym(v)

    def origin(self):
        return np.eye(self.order)

    def random(self, rng, count, radius):
        eye = np.broadcast_to(self.origin(), (count, self.order, self.order))
        return self.exp(eye, self.random_tangent(rng, eye, count, radius))

    def random_tangent(self, rng, x, count, radius):
        z = radius * _sym(rng.standard_normal((count, self.order, self.order)))
        x = np.broadcast_to(x, z.shape)
        # push a symmetric matrix at the identity to T_x by congruence
        chol = np.linalg.cholesky(x)
        return _sym(chol @ z @ np.swapaxes(chol, -1, -2))


class _Spider(_Model):
    shape = (2,)

    def __init__(self, legs):
        self.legs = legs

    def dist(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        ra, rb = a[..., 1], b[..., 1]
        same = a[..., 0] == b[..., 0]
        return np.where(same, np.abs(ra - rb), ra + rb)

    def geodesic(self, a, b, t):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = np.asarray(t, dtype=float)
        la, ra = a[..., 0], a[..., 1]
        lb, rb = b[..., 0], b[..., 1]
        same = la == lb
        s = t * (ra + rb)  # arc length from a, measured through the hub
        cross_leg = np.where(s <= ra, la, lb)
        cross_r = np.where(s <= ra, ra - s, s - ra)
        leg = np.where(same, la, cross_leg)
        r = np.where(same, (1.0 - t) * ra + t * rb, cross_r)
        out = np.stack(np.broadcast_arrays(leg, r), axis=-1)
        return self.normalize(out)

    def normalize(self, coords):
        coords = np.array(coords, dtype=float, copy=True)
        hub = coords[..., 1] <= 0.0
        coords[..., 0] = np.where(hub, 0.0, coords[..., 0])
        coords[..., 1] = np.where(hub, 0.0, coords[..., 1])
        return coords

    def check(self, coords, tol):
        if coords.shape != (2,) or not np.all(np.isfinite(coords)):
            raise GeometryError("spider point is a (leg, radius) pair")
        leg, r = coords
        if r < 0:
            raise GeometryError("spider radius must be >= 0")
        if r > 0 and (leg != int(leg) or not 1 <= leg <= self.legs):
            raise GeometryError(f"spider leg must be an integer in 1..{self.legs}")
        return self.normalize(coords)

    def origin(self):
        return np.zeros(2)

    def random(self, rng, count, radius):
        legs = rng.integers(1, self.legs + 1, size=count).astype(float)
        r = rng.exponential(radius, size=count)
        return self.normalize(np.stack([legs, r], axis=-1))


@lru_cache(maxsize=None)
def _model_for(kind: str, size: int) -> _Model:
    return {"euclidean": _Euclidean, "hyperbolic": _Hyperbolic, "spd": _SPD, "spider": _Spider}[kind](size)


# ---------------------------------------------------------------------------
# validated single-point API
# ---------------------------------------------------------------------------

def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Point:
    space: SpaceDescriptor
    coords: np.ndarray = field(repr=True)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        coords = self.space.model.check(coords, self.space.tol)
        object.__setattr__(self, "coords", _frozen(coords))

    @classmethod
    def trusted(cls, space: SpaceDescriptor, coords) -> "Point":
        """Wrap coordinates produced by a model operation, skipping validation."""
        p = object.__new__(cls)
        object.__setattr__(p, "space", space)
        object.__setattr__(p, "coords", _frozen(coords))
        return p

    @property
    def leg(self) -> int:
        self._need_spider()
        return int(self.coords[0])

    @property
    def radius(self) -> float:
        self._need_spider()
        return float(self.coords[1])

    def _need_spider(self):
        if self.space.kind != "spider":
            raise GeometryError("leg/radius are only defined on the spider")

    def to_list(self) -> list:
        return self.coords.tolist()

    def __eq__(self, other):
        return (
            isinstance(other, Point)
            and other.space == self.space
            and np.array_equal(other.coords, self.coords)
        )

    def __hash__(self):
        return hash((self.space, self.coords.tobytes()))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    components: np.ndarray

    def __post_init__(self):
        space = self.base.space
        if not space.is_manifold:
            raise UnsupportedOperation(f"no tangent vectors on {space}")
        v = space.model.check_tangent(self.base.coords, np.asarray(self.components, dtype=float), space.tol)
        object.__setattr__(self, "components", _frozen(v))

    @property
    def space(self) -> SpaceDescriptor:
        return self.base.space

    def norm(self) -> float:
        return norm(self)

    def scaled(self, c: float) -> "TangentVector":
        return TangentVector(self.base, c * self.components)


def make_point(space: SpaceDescriptor, coords) -> Point:
    return Point(space, coords)


def spider_point(space: SpaceDescriptor, leg: int, radius: float) -> Point:
    return Point(space, [leg, radius])


def hub(space: SpaceDescriptor) -> Point:
    if space.kind != "spider":
        raise GeometryError("only the spider has a hub")
    return Point(space, [0.0, 0.0])


def origin(space: SpaceDescriptor) -> Point:
    """Canonical base point: zero vector, hyperboloid vertex, identity matrix or hub."""
    return Point.trusted(space, space.model.origin())


def _common_space(*points: Point) -> SpaceDescriptor:
    space = points[0].space
    for p in points[1:]:
        if p.space != space:
            raise GeometryError(f"space mismatch: {space} vs {p.space}")
    return space


def _check_t(t: float):
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"geodesic parameter must lie in [0, 1], got {t}")


def distance(x: Point, y: Point) -> float:
    space = _common_space(x, y)
    return float(space.model.dist(x.coords, y.coords))


def geodesic_point(x: Point, y: Point, t: float) -> Point:
    """The point (1-t)x + ty on the geodesic from x to y."""
    space = _common_space(x, y)
    _check_t(t)
    return Point.trusted(space, space.model.geodesic(x.coords, y.coords, t))


def exp_map(v: TangentVector) -> Point:
    space = v.space
    return Point.trusted(space, space.model.exp(v.base.coords, v.components))


def log_map(x: Point, y: Point) -> TangentVector:
    space = _common_space(x, y)
    if not space.is_manifold:
        raise UnsupportedOperation(f"log_map is undefined on {space}")
    v = space.model.log(x.coords, y.coords)
    tv = object.__new__(TangentVector)
    object.__setattr__(tv, "base", x)
    object.__setattr__(tv, "components", _frozen(v))
    return tv


def inner(u: TangentVector, v: TangentVector) -> float:
    if u.base != v.base:
        raise GeometryError("tangent vectors live at different base points")
    return float(u.space.model.inner(u.base.coords, u.components, v.components))


def norm(v: TangentVector) -> float:
    return float(np.sqrt(max(inner(v, v), 0.0)))


# batch forms take coordinate arrays with matching leading dimensions

def quasilin_batch(space: SpaceDescriptor, a, b, c, d):
    dist = space.model.dist
    return 0.5 * (dist(a, d) ** 2 + dist(b, c) ** 2 - dist(a, c) ** 2 - dist(b, d) ** 2)


def cat0_residual_batch(space: SpaceDescriptor, x0, x1, y, t):
    m = space.model
    t = np.asarray(t, dtype=float)
    xt = m.geodesic(x0, x1, t)
    return (
        (1.0 - t) * m.dist(y, x0) ** 2
        + t * m.dist(y, x1) ** 2
        - t * (1.0 - t) * m.dist(x0, x1) ** 2
        - m.dist(y, xt) ** 2
    )


def cauchy_schwarz_slack_batch(space: SpaceDescriptor, a, b, c, d):
    m = space.model
    return m.dist(a, b) * m.dist(c, d) - quasilin_batch(space, a, b, c, d)


def quasilin(a: Point, b: Point, c: Point, d: Point) -> float:
    """Berg-Nikolaev pairing of the "vectors" ab and cd."""
    space = _common_space(a, b, c, d)
    return float(quasilin_batch(space, a.coords, b.coords, c.coords, d.coords))


def cat0_residual(x0: Point, x1: Point, y: Point, t: float) -> float:
    """Slack in the CAT(0) inequality; non-negative up to rounding."""
    space = _common_space(x0, x1, y)
    _check_t(t)
    return float(cat0_residual_batch(space, x0.coords, x1.coords, y.coords, t))


def cauchy_schwarz_slack(a: Point, b: Point, c: Point, d: Point) -> float:
    space = _common_space(a, b, c, d)
    return float(cauchy_schwarz_slack_batch(space, a.coords, b.coords, c.coords, d.coords))


def random_coords(space: SpaceDescriptor, rng: np.random.Generator, count: int, radius: float = 1.0) -> np.ndarray:
    """Array of ``count`` valid coordinates, valid by construction."""
    return space.model.random(rng, count, radius)


def random_points(space: SpaceDescriptor, rng: np.random.Generator, count: int, radius: float = 1.0) -> list[Point]:
    return [Point.trusted(space, c) for c in random_coords(space, rng, count, radius)]


def random_tangent(x: Point, rng: np.random.Generator, radius: float = 1.0) -> TangentVector:
    v = x.space.model.random_tangent(rng, x.coords, 1, radius)[0]
    return TangentVector(x, v)


def as_points(space: SpaceDescriptor, coords) -> list[Point]:
    return [Point.trusted(space, c) for c in np.asarray(coords)]


def stack(points) -> np.ndarray:
    return np.stack([p.coords for p in points])
