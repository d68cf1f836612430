"""Nonexpansive self-maps with known fixed points, and their orbits."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .geometry import (
    GeometryError,
    Point,
    SpaceDescriptor,
    distance,
    geodesic_point,
)


class MapError(ValueError):
    """A map was applied to a point of a space it does not act on."""


def golden_section(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Minimize a unimodal scalar function on [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # the endpoints are candidates too (projection may sit at a segment end)
    best = min((a, b, 0.5 * (a + b)), key=f)
    return best


class MapDescriptor:
    """Base class of the catalogue. Subclasses are frozen dataclasses."""

    tag: str = ""
    #: maps outside the catalogue (no fixed point) are only used as counterexamples
    catalogued: bool = True

    @property
    def space(self) -> SpaceDescriptor:
        raise NotImplementedError

    def __call__(self, x: Point) -> Point:
        return apply(self, x)

    def _apply(self, x: Point) -> Point:
        raise NotImplementedError

    def fixed_point(self) -> Point | None:
        """A known element of F(T), or None when F(T) is empty."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ProjectBall(MapDescriptor):
    """Metric projection onto the closed ball B(center, radius)."""

    center: Point
    radius: float
    tag = "project_ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise MapError("ball radius must be positive")

    @property
    def space(self):
        return self.center.space

    def _apply(self, x):
        d = distance(self.center, x)
        if d <= self.radius:
            return x
        return geodesic_point(self.center, x, self.radius / d)

    def fixed_point(self):
        return self.center

    def to_dict(self):
        return {"type": self.tag, "center": self.center.to_list(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class ProjectSegment(MapDescriptor):
    """Metric projection onto the geodesic segment [a, b]."""

    a: Point
    b: Point
    tol: float = 1e-12
    tag = "project_segment"

    def __post_init__(self):
        if self.a.space != self.b.space:
            raise MapError("segment endpoints live in different spaces")

    @property
    def space(self):
        return self.a.space

    def _apply(self, x):
        # t -> d^2(x, gamma(t)) is convex on a CAT(0) geodesic
        t = golden_section(lambda s: distance(x, geodesic_point(self.a, self.b, s)) ** 2, 0.0, 1.0, self.tol)
        return geodesic_point(self.a, self.b, t)

    def fixed_point(self):
        return self.a

    def to_dict(self):
        return {"type": self.tag, "a": self.a.to_list(), "b": self.b.to_list()}


def boost(center: np.ndarray) -> np.ndarray:
    """Lorentz boost taking the hyperboloid vertex to ``center``."""
    c0, cs = center[0], center[1:]
    n = len(center)
    m = np.empty((n, n))
    m[0, 0] = c0
    m[0, 1:] = cs
    m[1:, 0] = cs
    m[1:, 1:] = np.eye(n - 1) + np.outer(cs, cs) / (1.0 + c0)
    return m


def _plane_rotation(n: int, angle: float) -> np.ndarray:
    r = np.eye(n)
    c, s = math.cos(angle), math.sin(angle)
    r[0, 0], r[0, 1], r[1, 0], r[1, 1] = c, -s, s, c
    return r


@dataclass(frozen=True, eq=False)
class RotateHyperbolic(MapDescriptor):
    """Rotation of H^dim by ``angle`` about ``center`` in the first spatial plane."""

    center: Point
    angle: float
    tag = "rotate_hyperbolic"

    def __post_init__(self):
        if self.center.space.kind != "hyperbolic" or self.center.space.size < 2:
            raise MapError("rotate_hyperbolic needs a point of H^dim with dim >= 2")
        b = boost(np.asarray(self.center.coords))
        binv = boost(np.concatenate([[self.center.coords[0]], -self.center.coords[1:]]))
        rot = np.eye(len(b))
        rot[1:, 1:] = _plane_rotation(len(b) - 1, self.angle)
        object.__setattr__(self, "_matrix", b @ rot @ binv)

    @property
    def space(self):
        return self.center.space

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def _apply(self, x):
        return Point.trusted(self.space, self.space.model.normalize(self._matrix @ x.coords))

    def fixed_point(self):
        return self.center

    def to_dict(self):
        return {"type": self.tag, "center": self.center.to_list(), "angle": self.angle}


@dataclass(frozen=True, eq=False)
class RotateEuclidean(MapDescriptor):
    """Rotation of R^dim by ``angle`` about ``center`` in the first coordinate plane."""

    center: Point
    angle: float
    tag = "rotate_euclidean"

    def __post_init__(self):
        if self.center.space.kind != "euclidean" or self.center.space.size < 2:
            raise MapError("rotate_euclidean needs a point of R^dim with dim >= 2")
        object.__setattr__(self, "_matrix", _plane_rotation(self.center.space.size, self.angle))

    @property
    def space(self):
        return self.center.space

    def _apply(self, x):
        c = self.center.coords
        return Point.trusted(self.space, c + self._matrix @ (x.coords - c))

    def fixed_point(self):
        return self.center

    def to_dict(self):
        return {"type": self.tag, "center": self.center.to_list(), "angle": self.angle}


@dataclass(frozen=True, eq=False)
class CongruenceSPD(MapDescriptor):
    """X -> Q X Q^T for orthogonal Q, an isometry fixing every multiple of I."""

    space_: SpaceDescriptor
    q: np.ndarray
    tag = "congruence_spd"

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        n = self.space_.size
        if self.space_.kind != "spd" or q.shape != (n, n):
            raise MapError("congruence_spd needs an orthogonal matrix matching the spd order")
        if np.max(np.abs(q @ q.T - np.eye(n))) > 1e-10:
            raise MapError("congruence matrix is not orthogonal")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def space(self):
        return self.space_

    def _apply(self, x):
        return Point.trusted(self.space, self.space.model.normalize(self.q @ x.coords @ self.q.T))

    def fixed_point(self):
        return Point.trusted(self.space, np.eye(self.space.size))

    def to_dict(self):
        return {"type": self.tag, "space": self.space_.to_dict(), "q": self.q.tolist()}


@dataclass(frozen=True, eq=False)
class Damped(MapDescriptor):
    """Geodesic averaging x -> (1-lam) x + lam T x; same fixed points as T."""

    inner: MapDescriptor
    lam: float
    tag = "damped"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise MapError("damping parameter must lie in [0, 1]")

    @property
    def space(self):
        return self.inner.space

    @property
    def catalogued(self):
        return self.inner.catalogued

    def _apply(self, x):
        return geodesic_point(x, apply(self.inner, x), self.lam)

    def fixed_point(self):
        return self.inner.fixed_point()

    def to_dict(self):
        return {"type": self.tag, "inner": self.inner.to_dict(), "lam": self.lam}


@dataclass(frozen=True, eq=False)
class Compose(MapDescriptor):
    """Apply ``maps[0]`` first, then ``maps[1]``, ..."""

    maps: tuple[MapDescriptor, ...]
    tag = "compose"

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise MapError("compose needs at least one map")
        if any(m.space != maps[0].space for m in maps):
            raise MapError("composed maps act on different spaces")
        object.__setattr__(self, "maps", maps)

    @property
    def space(self):
        return self.maps[0].space

    @property
    def catalogued(self):
        return all(m.catalogued for m in self.maps)

    def _apply(self, x):
        for m in self.maps:
            x = apply(m, x)
        return x

    def fixed_point(self):
        # F(T1 o ... o Tm) contains the common fixed points; try each candidate
        for m in self.maps:
            f = m.fixed_point()
            if f is not None and fixed_point_residual(self, f) <= self.space.tol:
                return f
        return None

    def to_dict(self):
        return {"type": self.tag, "maps": [m.to_dict() for m in self.maps]}


@dataclass(frozen=True, eq=False)
class Translate(MapDescriptor):
    """Euclidean translation x -> x + offset.

    An isometry without fixed points whose orbits run off along a geodesic
    ray. Not part of the catalogue; kept as the counterexample fixture. The
    hyperboloid model cannot hold such an orbit for long (coordinates grow
    like e^r), hence the flat space.
    """

    space_: SpaceDescriptor
    offset: np.ndarray
    tag = "translate"
    catalogued = False

    def __post_init__(self):
        off = np.array(self.offset, dtype=float)
        if self.space_.kind != "euclidean" or off.shape != self.space_.coord_shape:
            raise MapError("translate acts on euclidean space with a matching offset")
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)

    @property
    def space(self):
        return self.space_

    def _apply(self, x):
        return Point.trusted(self.space, x.coords + self.offset)

    def fixed_point(self):
        return None

    def to_dict(self):
        return {"type": self.tag, "space": self.space_.to_dict(), "offset": self.offset.tolist()}


def apply(m: MapDescriptor, x: Point) -> Point:
    if x.space != m.space:
        raise MapError(f"{m.tag} acts on {m.space}, got a point of {x.space}")
    return m._apply(x)


def nonexpansiveness_slack(m: MapDescriptor, x: Point, y: Point) -> float:
    if x.space != y.space:
        raise GeometryError("space mismatch")
    return distance(x, y) - distance(apply(m, x), apply(m, y))


def fixed_point_residual(m: MapDescriptor, x: Point) -> float:
    return distance(apply(m, x), x)


@dataclass(frozen=True, eq=False)
class Orbit:
    """The points x, Tx, ..., T^n x."""

    map: MapDescriptor | None
    start: Point
    points: tuple[Point, ...]
    seed: int | None = None
    created: float = field(default_factory=time.time)

    @property
    def space(self) -> SpaceDescriptor:
        return self.start.space

    @property
    def n(self) -> int:
        return len(self.points) - 1

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def coords(self) -> np.ndarray:
        c = self.__dict__.get("_coords")
        if c is None:
            c = np.stack([p.coords for p in self.points])
            c.setflags(write=False)
            object.__setattr__(self, "_coords", c)
        return c

    @classmethod
    def from_points(cls, points: Sequence[Point], seed=None) -> "Orbit":
        points = tuple(points)
        return cls(None, points[0], points, seed)


def orbit(m: MapDescriptor, x0: Point, n: int, seed: int | None = None) -> Orbit:
    if n < 1:
        raise MapError("orbit length n must be >= 1")
    pts = [x0]
    x = x0
    for _ in range(n):
        x = apply(m, x)
        pts.append(x)
    return Orbit(m, x0, tuple(pts), seed)


def map_from_dict(d: dict[str, Any], space: SpaceDescriptor) -> MapDescriptor:
    kind = d.get("type")
    pt = lambda key: Point(space, d[key])  # noqa: E731
    if kind == "project_ball":
        return ProjectBall(pt("center"), float(d["radius"]))
    if kind == "project_segment":
        return ProjectSegment(pt("a"), pt("b"))
    if kind == "rotate_hyperbolic":
        return RotateHyperbolic(pt("center"), float(d["angle"]))
    if kind == "rotate_euclidean":
        return RotateEuclidean(pt("center"), float(d["angle"]))
    if kind == "congruence_spd":
        return CongruenceSPD(space, np.asarray(d["q"], dtype=float))
    if kind == "damped":
        return Damped(map_from_dict(d["inner"], space), float(d["lam"]))
    if kind == "compose":
        return Compose(tuple(map_from_dict(m, space) for m in d["maps"]))
    if kind == "translate":
        return Translate(space, np.asarray(d["offset"], dtype=float))
    raise MapError(f"unknown map type {kind!r}")


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_catalogued_map(space: SpaceDescriptor, rng: np.random.Generator, depth: int = 1) -> MapDescriptor:
    """Random catalogue member acting on ``space`` (used by property sweeps)."""
    from .geometry import random_points

    def one():
        choices = ["project_ball", "project_segment", "damped"]
        if space.kind == "hyperbolic" and space.size >= 2:
            choices.append("rotate_hyperbolic")
        if space.kind == "euclidean" and space.size >= 2:
            choices.append("rotate_euclidean")
        if space.kind == "spd":
            choices.append("congruence_spd")
        kind = choices[rng.integers(len(choices))]
        a, b = random_points(space, rng, 2)
        if kind == "project_ball":
            return ProjectBall(a, float(rng.uniform(0.1, 1.5)))
        if kind == "project_segment":
            return ProjectSegment(a, b)
        if kind == "rotate_hyperbolic":
            return RotateHyperbolic(a, float(rng.uniform(-math.pi, math.pi)))
        if kind == "rotate_euclidean":
            return RotateEuclidean(a, float(rng.uniform(-math.pi, math.pi)))
        if kind == "congruence_spd":
            return CongruenceSPD(space, random_orthogonal(rng, space.size))
        return Damped(ProjectBall(a, float(rng.uniform(0.1, 1.5))), float(rng.uniform()))

    if depth <= 1:
        return one()
    return Compose(tuple(one() for _ in range(depth)))
