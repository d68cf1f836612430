"""Weighted Karcher means and numeric checks on their minimizing property."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import GeometryError, Point, SpaceDescriptor, TangentVector, distance


class SolverError(RuntimeError):
    """The mean iteration did not reach its tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 500

    def to_dict(self):
        return {"tol": self.tol, "max_iter": self.max_iter}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("tol", 1e-10)), int(d.get("max_iter", 500)))


@dataclass(frozen=True, eq=False)
class WeightedPoints:
    """Points of one space with non-negative weights summing to one.

    Coordinates are kept as a stacked array so long windows of an orbit do not
    have to be re-wrapped point by point.
    """

    space: SpaceDescriptor
    coords: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if coords.ndim != 1 + len(self.space.coord_shape) or len(coords) == 0:
            raise GeometryError("weighted points need a non-empty stack of coordinates")
        if weights.shape != (len(coords),):
            raise GeometryError("weights and points differ in length")
        if np.any(weights < 0):
            raise GeometryError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise GeometryError(f"weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def of(cls, points: Sequence[Point], weights: Sequence[float] | None = None) -> "WeightedPoints":
        points = list(points)
        if not points:
            raise GeometryError("no points given")
        space = points[0].space
        if any(p.space != space for p in points):
            raise GeometryError("points live in different spaces")
        if weights is None:
            weights = np.full(len(points), 1.0 / len(points))
        return cls(space, np.stack([p.coords for p in points]), np.asarray(weights, dtype=float))

    @classmethod
    def uniform(cls, space: SpaceDescriptor, coords) -> "WeightedPoints":
        coords = np.asarray(coords)
        return cls(space, coords, np.full(len(coords), 1.0 / len(coords)))

    def __len__(self):
        return len(self.weights)

    @property
    def points(self) -> list[Point]:
        return [Point.trusted(self.space, c) for c in self.coords]

    def to_dict(self):
        return {"points": self.coords.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d, space: SpaceDescriptor) -> "WeightedPoints":
        pts = [Point(space, c) for c in d["points"]]
        return cls.of(pts, d.get("weights"))


@dataclass(frozen=True, eq=False)
class MeanResult:
    mean: Point
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool


def _objective_coords(w: WeightedPoints, y: np.ndarray) -> float:
    d = w.space.model.dist(w.coords, y)
    return float(np.dot(w.weights, d * d))


def objective(w: WeightedPoints, y: Point) -> float:
    """Weighted sum of squared distances from ``y`` to the points."""
    if y.space != w.space:
        raise GeometryError("space mismatch")
    return _objective_coords(w, y.coords)


def _karcher_step(w: WeightedPoints, x: np.ndarray) -> np.ndarray:
    logs = w.space.model.log(x, w.coords)
    return np.tensordot(w.weights, logs, axes=1)


def objective_gradient(w: WeightedPoints, y: Point) -> TangentVector:
    """Riemannian gradient -2 sum_i w_i log_y(a_i) (manifold spaces)."""
    if not w.space.is_manifold:
        raise GeometryError("objective_gradient needs a manifold space")
    return TangentVector(y, -2.0 * _karcher_step(w, y.coords))


def _initial(w: WeightedPoints) -> np.ndarray:
    # argmax returns the lowest index among ties
    return w.coords[int(np.argmax(w.weights))]


def _spider_leg_sums(w: WeightedPoints):
    legs = w.coords[:, 0].astype(int)
    wr = w.weights * w.coords[:, 1]
    on_leg = np.bincount(legs, weights=wr, minlength=w.space.size + 1)
    return on_leg, float(wr.sum())


def _spider_gradient_norm(w: WeightedPoints, y: np.ndarray) -> float:
    # half the one-sided slope, matching |sum w_i log_y a_i| on manifolds
    on_leg, total = _spider_leg_sums(w)
    leg, r = int(y[0]), float(y[1])
    if r == 0.0:
        return float(max(0.0, np.max(2.0 * on_leg[1:] - total)))
    return abs(r - (2.0 * on_leg[leg] - total))


def _spider_mean(w: WeightedPoints) -> np.ndarray:
    # On leg j at radius r the objective is
    #   sum_{on j} w_i (r - r_i)^2 + sum_{off j} w_i (r + r_i)^2,
    # a convex parabola with vertex 2 S_j - S  (S_j: weighted radii on j).
    on_leg, total = _spider_leg_sums(w)
    best = np.zeros(2)
    best_val = _objective_coords(w, best)
    for leg in range(1, w.space.size + 1):
        r = 2.0 * on_leg[leg] - total
        if r <= 0.0:
            continue
        cand = np.array([float(leg), r])
        val = _objective_coords(w, cand)
        if val < best_val:
            best, best_val = cand, val
    return best


def _safeguarded_step(w: WeightedPoints, x: np.ndarray, step: np.ndarray, gnorm: float, alpha: float):
    """Return (next point, step length) under an Armijo test with c = 1/4.

    The directional derivative of the objective along ``step`` is -2|step|^2.
    Once that predicted decrease is below the objective's rounding level the
    test carries no information and the current length is kept.
    """
    model = w.space.model
    f0 = _objective_coords(w, x)
    floor = 1e-13 * (1.0 + f0)
    for _ in range(60):
        y = model.exp(x, alpha * step)
        predicted = 2.0 * alpha * gnorm * gnorm
        if predicted < floor or _objective_coords(w, y) <= f0 - 0.25 * predicted:
            return y, alpha
        alpha *= 0.5
    return model.exp(x, alpha * step), alpha


def karcher_mean(w: WeightedPoints, cfg: SolverConfig | None = None, init: Point | None = None) -> MeanResult:
    """Unique minimizer of ``objective(w, .)``.

    On the manifold spaces this is the fixed-point iteration
    ``x <- exp_x(sum_i w_i log_x(a_i))`` started at the heaviest point (or
    ``init``); it stops once the update norm drops to ``cfg.tol``. Curvature
    can push the objective's Hessian past 2, where the unit step overshoots,
    so a step that fails a sufficient-decrease test is halved and the
    shorter length kept for the remaining iterations. The spider
    is solved in closed form leg by leg.
    """
    cfg = cfg or SolverConfig()
    space = w.space
    model = space.model
    if np.all(w.coords == w.coords[0]):
        return MeanResult(Point.trusted(space, w.coords[0]), 0.0, 0.0, 0, True)

    if space.kind == "spider":
        y = _spider_mean(w)
        g = _spider_gradient_norm(w, y)
        return MeanResult(Point.trusted(space, y), _objective_coords(w, y), g, 1, True)

    x = np.array(init.coords if init is not None else _initial(w), dtype=float)
    converged = False
    it = 0
    gnorm = np.inf
    alpha = 1.0  # step length; only ever shrinks, so well-conditioned data keeps the unit step
    while True:
        step = _karcher_step(w, x)
        gnorm = float(np.sqrt(max(model.inner(x, step, step), 0.0)))
        if gnorm <= cfg.tol:
            converged = True
            break
        if it >= cfg.max_iter:
            break
        x, alpha = _safeguarded_step(w, x, step, gnorm, alpha)
        it += 1
    return MeanResult(Point.trusted(space, x), _objective_coords(w, x), gnorm, it, converged)


def weighted_arithmetic_mean(w: WeightedPoints) -> np.ndarray:
    return np.tensordot(w.weights, w.coords, axes=1)


def separation_check(w: WeightedPoints, mean: Point, y: Point, delta: float) -> float:
    """Slack of  F(mean) < F(y) - (d(mean, y) - delta) d(mean, y)  for y outside B(mean, delta)."""
    d = distance(mean, y)
    if not delta > 0 or d <= delta:
        raise GeometryError(f"y must lie outside the ball of radius {delta} (distance {d})")
    return objective(w, y) - (d - delta) * d - objective(w, mean)


@dataclass
class UniformDiagnostics:
    """How uniformly the family F_n^k approaches F, measured on a finite grid.

    ``probe_gap[i, j]`` is sup_k |F_n^k(p_j) - F(p_j)| for n = n_values[i];
    ``minimizer_gap[i]`` is sup_k (F(s) - F_n^k(s)) at s = argmin F_n^k.
    """

    n_values: list[int]
    k_values: list[int]
    probe_gap: np.ndarray
    minimizer_gap: np.ndarray
    means: dict = field(default_factory=dict, repr=False)


def uniform_minimizer_diagnostics(
    family: Callable[[int, int], WeightedPoints],
    limit: Callable[[Point], float],
    probes: Sequence[Point],
    n_values: Sequence[int],
    k_values: Sequence[int],
    cfg: SolverConfig | None = None,
) -> UniformDiagnostics:
    n_values = list(n_values)
    k_values = list(k_values)
    if not n_values or not k_values or not probes:
        raise ValueError("empty index grid or probe set")
    limit_at_probes = np.array([limit(p) for p in probes])
    probe_gap = np.zeros((len(n_values), len(probes)))
    minimizer_gap = np.full(len(n_values), -np.inf)
    means = {}
    for i, n in enumerate(n_values):
        for k in k_values:
            w = family(n, k)
            vals = np.array([objective(w, p) for p in probes])
            probe_gap[i] = np.maximum(probe_gap[i], np.abs(vals - limit_at_probes))
            res = karcher_mean(w, cfg)
            means[(n, k)] = res
            minimizer_gap[i] = max(minimizer_gap[i], limit(res.mean) - res.objective)
    return UniformDiagnostics(n_values, k_values, probe_gap, minimizer_gap, means)
