"""Monotone gradient fields, their resolvents and the flow -x'(t) = A x(t).

Sign convention: a field is monotone when

    <A x, log_x y> + <A y, log_y x> <= 0,

so the gradient of a convex potential qualifies and the flow runs downhill.
Both catalogued fields are gradients of weighted squared-distance potentials,
``A x = -scale * sum_i w_i log_x(p_i)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .frechet import MeanResult, SolverConfig, SolverError, WeightedPoints, karcher_mean
from .geometry import (
    GeometryError,
    Point,
    SpaceDescriptor,
    TangentVector,
    UnsupportedOperation,
    distance,
    inner,
    log_map,
)

RESOLVENT_CONFIG = SolverConfig(tol=1e-10, max_iter=500)


class StepRejected(RuntimeError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"step {index}: {reason}")
        self.index = index


class WindowError(ValueError):
    """An averaging window does not fit the trajectory."""


class FieldDescriptor:
    scale: float

    @property
    def anchors(self) -> WeightedPoints:
        raise NotImplementedError

    @property
    def space(self) -> SpaceDescriptor:
        return self.anchors.space

    def singularity(self) -> Point:
        raise NotImplementedError

    def potential(self, x: Point) -> float:
        d = self.space.model.dist(self.anchors.coords, x.coords)
        return 0.5 * self.scale * float(np.dot(self.anchors.weights, d * d))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GradientBarycenter(FieldDescriptor):
    """x -> -scale sum_i w_i log_x(p_i); vanishes at the Karcher mean of the anchors."""

    anchors_: WeightedPoints
    scale: float = 1.0

    def __post_init__(self):
        _check_field(self.anchors_.space, self.scale)

    @property
    def anchors(self):
        return self.anchors_

    def singularity(self):
        cached = self.__dict__.get("_singularity")
        if cached is None:
            res = karcher_mean(self.anchors_, RESOLVENT_CONFIG)
            if not res.converged:
                raise SolverError("anchor mean did not converge")
            cached = res.mean
            object.__setattr__(self, "_singularity", cached)
        return cached

    def to_dict(self):
        return {"type": "gradient_barycenter", "scale": self.scale, "anchors": self.anchors_.to_dict()}


@dataclass(frozen=True, eq=False)
class GradientDistancePotential(FieldDescriptor):
    """x -> -scale log_x(target): the gradient of scale/2 d^2(., target)."""

    target: Point
    scale: float = 1.0

    def __post_init__(self):
        _check_field(self.target.space, self.scale)
        object.__setattr__(self, "_anchors", WeightedPoints.of([self.target]))

    @property
    def anchors(self):
        return self._anchors

    def singularity(self):
        return self.target

    def to_dict(self):
        return {"type": "gradient_distance_potential", "scale": self.scale, "target": self.target.to_list()}


def _check_field(space: SpaceDescriptor, scale: float):
    if not space.is_manifold:
        raise UnsupportedOperation(f"vector fields need a manifold space, not {space}")
    if not scale > 0:
        raise GeometryError("field scale must be positive")


def field_from_dict(d: dict, space: SpaceDescriptor) -> FieldDescriptor:
    kind = d.get("type")
    scale = float(d.get("scale", 1.0))
    if kind == "gradient_distance_potential":
        return GradientDistancePotential(Point(space, d["target"]), scale)
    if kind == "gradient_barycenter":
        return GradientBarycenter(WeightedPoints.from_dict(d["anchors"], space), scale)
    raise GeometryError(f"unknown field type {kind!r}")


def _field_coords(A: FieldDescriptor, x: np.ndarray) -> np.ndarray:
    w = A.anchors
    logs = w.space.model.log(x, w.coords)
    return -A.scale * np.tensordot(w.weights, logs, axes=1)


def eval_field(A: FieldDescriptor, x: Point) -> TangentVector:
    if x.space != A.space:
        raise GeometryError("space mismatch")
    return TangentVector(x, _field_coords(A, x.coords))


def field_norm(A: FieldDescriptor, x: Point) -> float:
    v = _field_coords(A, x.coords)
    return float(math.sqrt(max(A.space.model.inner(x.coords, v, v), 0.0)))


def monotonicity_slack(A: FieldDescriptor, x: Point, y: Point) -> float:
    """-(<Ax, log_x y> + <Ay, log_y x>), non-negative for monotone A."""
    if distance(x, y) == 0.0:
        raise GeometryError("monotonicity slack needs distinct points")
    return -(inner(eval_field(A, x), log_map(x, y)) + inner(eval_field(A, y), log_map(y, x)))


def resolvent_result(A: FieldDescriptor, lam: float, x: Point, cfg: SolverConfig | None = None) -> MeanResult:
    # argmin_y  scale/2 sum w_i d^2(y, p_i) + 1/(2 lam) d^2(x, y)
    # is the Karcher mean of {x} + anchors with weights 1 : lam*scale*w_i.
    if not lam > 0:
        raise ValueError("resolvent parameter must be positive")
    if x.space != A.space:
        raise GeometryError("space mismatch")
    w = A.anchors
    c = lam * A.scale
    weights = np.concatenate([[1.0], c * w.weights]) / (1.0 + c)
    coords = np.concatenate([x.coords[None], w.coords])
    res = karcher_mean(WeightedPoints(A.space, coords, weights), cfg or RESOLVENT_CONFIG, init=x)
    if not res.converged:
        raise SolverError(f"resolvent solve stopped at gradient norm {res.gradient_norm:.3e}")
    return res


def resolvent(A: FieldDescriptor, lam: float, x: Point, cfg: SolverConfig | None = None) -> Point:
    """J_lam x: the implicit Euler step of length lam from x."""
    return resolvent_result(A, lam, x, cfg).mean


@dataclass(eq=False)
class Trajectory:
    field: FieldDescriptor
    start: Point
    h: float
    times: np.ndarray
    coords: np.ndarray
    scheme: str = "implicit"

    @property
    def space(self):
        return self.start.space

    def __len__(self):
        return len(self.times)

    def point(self, j: int) -> Point:
        return Point.trusted(self.space, self.coords[j])

    @property
    def points(self) -> list[Point]:
        return [self.point(j) for j in range(len(self))]

    def rows(self):
        ncoord = int(np.prod(self.space.coord_shape))
        yield ("t", *[f"c{i}" for i in range(ncoord)], "field_norm")
        for j in range(len(self)):
            yield (self.times[j], *self.coords[j].ravel().tolist(), field_norm(self.field, self.point(j)))


def _step_count(T: float, h: float) -> int:
    return int(math.floor(T / h + 1e-9))


def integrate(A: FieldDescriptor, x0: Point, T: float, h: float, scheme: str = "implicit") -> Trajectory:
    """Samples x_j of -x' = A x at t_j = j h, j = 0 .. floor(T/h)."""
    if not T > 0 or not 0 < h <= T:
        raise ValueError("need T > 0 and 0 < h <= T")
    if scheme not in ("implicit", "explicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if x0.space != A.space:
        raise GeometryError("space mismatch")
    model = A.space.model
    steps = _step_count(T, h)
    coords = np.empty((steps + 1,) + A.space.coord_shape)
    coords[0] = x0.coords
    x = x0
    for j in range(steps):
        if scheme == "implicit":
            x = resolvent(A, h, x)
        else:
            nxt = model.exp(x.coords, -h * _field_coords(A, x.coords))
            try:
                x = Point(A.space, nxt)
            except GeometryError as exc:
                raise StepRejected(j + 1, str(exc)) from None
        coords[j + 1] = x.coords
    times = h * np.arange(steps + 1)
    return Trajectory(A, x0, h, times, coords, scheme)


def semigroup_defect(A: FieldDescriptor, x0: Point, t: float, s: float, h: float) -> float:
    """d(x(t+s), S(s) x(t)) where the second flow is integrated with step h/2.

    Both sides approximate the same point; the defect is O(h) for the implicit
    scheme.
    """
    whole = integrate(A, x0, t + s, h)
    mid = integrate(A, x0, t, h)
    rest = integrate(A, mid.point(-1), s, h / 2)
    return distance(whole.point(-1), rest.point(-1))


def trapezoid_weights(count: int) -> np.ndarray:
    """Normalized trapezoid weights for ``count`` equally spaced samples."""
    if count < 2:
        raise WindowError("a window needs at least two samples")
    w = np.ones(count)
    w[0] = w[-1] = 0.5
    return w / w.sum()


@dataclass
class FlowErgodicReport:
    means: dict[tuple[float, float], MeanResult]
    reference: Point
    sup_deviation: dict[float, float]
    singularity_distance: dict[float, float]
    singularity_residual: float
    h: float
    semigroup_min_slack: float | None = None
    windows: list[tuple[float, float]] = field(default_factory=list)
    singularity: Point | None = None

    def rows(self):
        first = next(iter(self.means.values()))
        ncoord = first.mean.coords.size
        yield ("T", "s", *[f"c{i}" for i in range(ncoord)], "deviation", "singularity_distance", "residual")
        for (T, s), res in self.means.items():
            yield (
                T,
                s,
                *res.mean.coords.ravel().tolist(),
                distance(res.mean, self.reference),
                distance(res.mean, self.singularity) if self.singularity is not None else float("nan"),
                self.singularity_residual,
            )


def _grid_index(traj: Trajectory, t: float) -> int:
    j = int(round(t / traj.h))
    if abs(j * traj.h - t) > 1e-9 * max(1.0, abs(t)):
        raise WindowError(f"time {t} is not on the sample grid of step {traj.h}")
    return j


def window_mean(traj: Trajectory, T: float, s: float, cfg: SolverConfig | None = None) -> MeanResult:
    """sigma_T^s: Karcher mean of the samples on [s, s+T] with trapezoid weights."""
    i0 = _grid_index(traj, s)
    i1 = _grid_index(traj, s + T)
    if i0 < 0 or i1 >= len(traj) or i1 <= i0:
        raise WindowError(f"window [{s}, {s + T}] exceeds the horizon {traj.times[-1]}")
    w = WeightedPoints(traj.space, traj.coords[i0 : i1 + 1], trapezoid_weights(i1 - i0 + 1))
    return karcher_mean(w, cfg)


def flow_ergodic_report(
    traj: Trajectory,
    windows: Sequence[tuple[float, float]],
    semigroup_step: float | None = None,
    semigroup_pairs: int = 32,
    cfg: SolverConfig | None = None,
    workers: int = 1,
) -> FlowErgodicReport:
    """Continuous-time means sigma_T^s over the (T, s) grid.

    The reference is sigma at the largest T with s = 0. With ``semigroup_step``
    the nonexpansiveness of one implicit step is sampled on pairs of trajectory
    points and the minimum slack d(u, v) - d(J u, J v) recorded.
    """
    windows = [(float(T), float(s)) for T, s in windows]
    if not windows:
        raise WindowError("no windows given")
    T_max = max(T for T, _ in windows)
    if (T_max, 0.0) not in windows:
        windows.append((T_max, 0.0))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda ts: window_mean(traj, ts[0], ts[1], cfg), windows))
    else:
        results = [window_mean(traj, T, s, cfg) for T, s in windows]
    means = dict(zip(windows, results))
    ref = means[(T_max, 0.0)].mean
    sing = traj.field.singularity()
    sup_dev: dict[float, float] = {}
    sing_dist: dict[float, float] = {}
    for (T, s), res in means.items():
        sup_dev[T] = max(sup_dev.get(T, 0.0), distance(res.mean, ref))
        sing_dist[T] = max(sing_dist.get(T, 0.0), distance(res.mean, sing))

    slack = None
    if semigroup_step is not None:
        n = len(traj)
        idx = np.linspace(0, n - 1, num=min(semigroup_pairs + 1, n)).astype(int)
        vals = []
        for i, j in zip(idx[:-1], idx[1:]):
            u, v = traj.point(i), traj.point(j)
            ju = resolvent(traj.field, semigroup_step, u)
            jv = resolvent(traj.field, semigroup_step, v)
            vals.append(distance(u, v) - distance(ju, jv))
        slack = float(min(vals)) if vals else None

    return FlowErgodicReport(
        means=means,
        reference=ref,
        sup_deviation=dict(sorted(sup_dev.items())),
        singularity_distance=dict(sorted(sing_dist.items())),
        singularity_residual=field_norm(traj.field, ref),
        h=traj.h,
        semigroup_min_slack=slack,
        windows=windows,
        singularity=sing,
    )
