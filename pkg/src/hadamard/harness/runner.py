"""Execute an :class:`ExperimentConfig`, write its data files and a manifest.

Every run produces CSV files for the numbers it measured plus
``manifest.json``. A check's pass/fail is computed from the value and
threshold stored next to it, never from anything that is not recorded.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from ..ergodic import almost_convergence_report, ergodic_table
from ..flows import (
    GradientDistancePotential,
    StepRejected,
    WindowError,
    flow_ergodic_report,
    integrate,
    resolvent,
)
from ..frechet import SolverError, WeightedPoints, karcher_mean, separation_check, weighted_arithmetic_mean
from ..geometry import (
    GeometryError,
    Point,
    cat0_residual_batch,
    cauchy_schwarz_slack_batch,
    distance,
    quasilin_batch,
    random_coords,
    random_points,
)
from ..maps import RotateEuclidean, orbit
from ..recurrence import HorizonError, detect_period, eps_net, find_almost_period, omega_isometry_slack, scalar_trace
from .config import AlmostPeriod, ConfigError, ExperimentConfig, FlowErgodic, OrbitErgodic, SpaceVerify
from .io import write_csv, write_json

_RELATIONS: dict[str, Callable[[float, float], bool]] = {
    "<=": lambda v, t: v <= t,
    "<": lambda v, t: v < t,
    ">=": lambda v, t: v >= t,
    ">": lambda v, t: v > t,
    "==": lambda v, t: v == t,
}


@dataclass
class Check:
    name: str
    value: float
    relation: str
    threshold: float
    note: str = ""

    @property
    def passed(self) -> bool:
        v = float(self.value)
        return not math.isnan(v) and _RELATIONS[self.relation](v, float(self.threshold))

    def to_dict(self):
        d = {
            "name": self.name,
            "value": self.value,
            "relation": self.relation,
            "threshold": self.threshold,
            "passed": self.passed,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class RunManifest:
    name: str
    scenario: str
    config_digest: str
    version: str
    seed: int
    serial: bool
    wall_time: float = 0.0
    checks: list[Check] = field(default_factory=list)
    extrema: dict[str, float] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "name": self.name,
            "scenario": self.scenario,
            "config_digest": self.config_digest,
            "version": self.version,
            "seed": self.seed,
            "serial": self.serial,
            "wall_time": self.wall_time,
            "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "checks": [c.to_dict() for c in self.checks],
            "extrema": self.extrema,
            "files": self.files,
            "error": self.error,
            "passed": self.passed,
        }


class _Run:
    """Mutable state shared by a scenario while it executes."""

    def __init__(self, config: ExperimentConfig, out: Path, serial: bool, mode: str):
        self.config = config
        self.out = out
        self.serial = serial
        self.mode = mode
        self.rng = np.random.default_rng(config.seed)
        self.checks: list[Check] = []
        self.extrema: dict[str, float] = {}
        self.files: list[str] = []
        self.workers = 1 if serial else min(8, os.cpu_count() or 1)

    def check(self, name, value, relation, threshold, note=""):
        self.checks.append(Check(name, float(value), relation, float(threshold), note))

    def csv(self, filename, rows):
        write_csv(self.out / filename, rows)
        self.files.append(filename)


def _coord_header(space, prefix="c"):
    return [f"{prefix}{i}" for i in range(int(np.prod(space.coord_shape)))]


def _orbit_rows(orb):
    yield ("index", *_coord_header(orb.space))
    for i, c in enumerate(orb.coords):
        yield (i, *c.ravel().tolist())


# ---------------------------------------------------------------------------
# space-verify
# ---------------------------------------------------------------------------

def _sweep_geodesic(space, sc, rng):
    m = space.model
    x = random_coords(space, rng, sc.sample_count, sc.radius)
    y = random_coords(space, rng, sc.sample_count, sc.radius)
    t = rng.uniform(0.0, 1.0, sc.sample_count)
    g = m.geodesic(x, y, t)
    d = m.dist(x, y)
    err = np.maximum(np.abs(m.dist(x, g) - t * d), np.abs(m.dist(g, y) - (1 - t) * d))
    return {"geodesic_error": err / np.maximum(1.0, d)}


def _sweep_exp_log(space, sc, rng):
    if not space.is_manifold:
        return {}
    m = space.model
    x = random_coords(space, rng, sc.sample_count, sc.radius)
    y = random_coords(space, rng, sc.sample_count, sc.radius)
    v = m.log(x, y)
    d = m.dist(x, y)
    norm = np.sqrt(np.maximum(m.inner(x, v, v), 0.0))
    return {
        "exp_log_roundtrip": m.dist(m.exp(x, v), y),
        "log_norm_error": np.abs(norm - d) / np.maximum(1.0, d),
    }


def _four(space, sc, rng):
    return [random_coords(space, rng, sc.sample_count, sc.radius) for _ in range(4)]


def _sweep_quasilin(space, sc, rng):
    a, b, c, d = _four(space, sc, rng)
    q = quasilin_batch(space, a, b, c, d)
    return {
        "quasilin_antisymmetry": np.abs(q + quasilin_batch(space, b, a, c, d)),
        "quasilin_symmetry": np.abs(q - quasilin_batch(space, c, d, a, b)),
        "quasilin_square_error": np.abs(quasilin_batch(space, a, b, a, b) - space.model.dist(a, b) ** 2),
    }


def _sweep_cat0(space, sc, rng):
    x0, x1, y = [random_coords(space, rng, sc.sample_count, sc.radius) for _ in range(3)]
    t = rng.uniform(0.0, 1.0, sc.sample_count)
    return {"cat0_residual": cat0_residual_batch(space, x0, x1, y, t)}


def _sweep_cauchy_schwarz(space, sc, rng):
    return {"cauchy_schwarz_slack": cauchy_schwarz_slack_batch(space, *_four(space, sc, rng))}


def _random_weights(rng, k):
    return rng.dirichlet(np.ones(k))


def _sweep_separation(space, sc, rng):
    slack = np.empty(sc.mean_count)
    unconverged = 0
    for i in range(sc.mean_count):
        pts = random_points(space, rng, sc.mean_size, sc.radius)
        w = WeightedPoints.of(pts, _random_weights(rng, sc.mean_size))
        res = karcher_mean(w)
        unconverged += not res.converged
        y = random_points(space, rng, 1, 2 * sc.radius)[0]
        d = distance(res.mean, y)
        while d < 1e-6:
            y = random_points(space, rng, 1, 2 * sc.radius)[0]
            d = distance(res.mean, y)
        delta = rng.uniform(0.05, 0.95) * d
        slack[i] = separation_check(w, res.mean, y, delta)
    return {"separation_slack": slack, "separation_unconverged": np.array([unconverged], dtype=float)}


def _sweep_karcher_oracle(space, sc, rng):
    err = np.empty(sc.mean_count)
    if space.kind == "euclidean":
        for i in range(sc.mean_count):
            pts = random_points(space, rng, sc.mean_size, sc.radius)
            w = WeightedPoints.of(pts, _random_weights(rng, sc.mean_size))
            err[i] = np.linalg.norm(karcher_mean(w).mean.coords - weighted_arithmetic_mean(w))
        return {"karcher_oracle_error": err}
    if space.kind == "spd":
        from ..maps import random_orthogonal

        n = space.size
        for i in range(sc.mean_count):
            q = random_orthogonal(rng, n)
            logs = rng.normal(0.0, sc.radius, (sc.mean_size, n))
            coords = np.einsum("ij,kj,lj->kil", q, np.exp(logs), q)
            weights = _random_weights(rng, sc.mean_size)
            w = WeightedPoints(space, coords, weights)
            expected = q @ np.diag(np.exp(weights @ logs)) @ q.T
            err[i] = space.model.dist(karcher_mean(w).mean.coords, expected)
        return {"karcher_oracle_error": err}
    raise ConfigError([f"no closed-form mean oracle for {space.kind} spaces"])


_SWEEPS = {
    "geodesic": _sweep_geodesic,
    "exp_log": _sweep_exp_log,
    "quasilin": _sweep_quasilin,
    "cat0": _sweep_cat0,
    "cauchy_schwarz": _sweep_cauchy_schwarz,
    "separation": _sweep_separation,
    "karcher_oracle": _sweep_karcher_oracle,
}

# (relation, threshold) for each measured quantity; the extreme value that
# matters is the max for "<=" bounds and the min for ">=" bounds
_SWEEP_LIMITS = {
    "geodesic_error": ("<=", 1e-9),
    "exp_log_roundtrip": ("<=", 1e-8),
    "log_norm_error": ("<=", 1e-8),
    "quasilin_antisymmetry": ("<=", 1e-10),
    "quasilin_symmetry": ("<=", 1e-10),
    "quasilin_square_error": ("<=", 1e-10),
    "cat0_residual": (">=", -1e-9),
    "cauchy_schwarz_slack": (">=", -1e-9),
    "separation_slack": (">", -1e-9),
    "separation_unconverged": ("<=", 0),
    "karcher_oracle_error": ("<=", None),
}


def _space_verify(run: _Run, sc: SpaceVerify):
    space = run.config.space
    rows = [("quantity", "count", "min", "max", "mean")]
    samples = [("quantity", "index", "value")]
    for name in sc.checks:
        # each sweep draws from its own child stream so adding or removing a
        # check leaves the others' samples unchanged
        rng = np.random.default_rng([run.config.seed, list(_SWEEPS).index(name)])
        for qty, values in _SWEEPS[name](space, sc, rng).items():
            values = np.asarray(values, dtype=float)
            rows.append((qty, len(values), values.min(), values.max(), values.mean()))
            samples.extend((qty, i, v) for i, v in enumerate(values))
            relation, limit = _SWEEP_LIMITS[qty]
            if qty == "karcher_oracle_error":
                limit = 1e-8 if space.kind == "euclidean" else 1e-6
            extreme = values.max() if relation.startswith("<") else values.min()
            run.check(f"{qty}", extreme, relation, limit)
            run.extrema[f"{qty}_min"] = float(values.min())
            run.extrema[f"{qty}_max"] = float(values.max())
            if qty == "cat0_residual" and space.kind == "euclidean":
                run.check("cat0_residual_abs_euclidean", np.abs(values).max(), "<=", 1e-10)
    run.csv("space_checks.csv", rows)
    run.csv("samples.csv", samples)


# ---------------------------------------------------------------------------
# orbit-ergodic
# ---------------------------------------------------------------------------

def _fejer_check(run: _Run, orb):
    f = orb.map.fixed_point()
    if f is None:
        return
    d = orb.space.model.dist(orb.coords, f.coords)
    rise = float(np.max(np.diff(d))) if len(d) > 1 else 0.0
    run.check("fejer_max_increase", rise, "<=", orb.space.tol * max(1.0, d[0]))


def _orbit_ergodic(run: _Run, sc: OrbitErgodic):
    length = sc.horizon + sc.k_max
    if sc.omega_tails:
        length = max(length, max(sc.omega_tails) + sc.omega_window)
    orb = orbit(sc.map, sc.start, length, seed=run.config.seed)
    run.csv("orbit.csv", _orbit_rows(orb))
    _fejer_check(run, orb)
    if run.mode == "orbit":
        return

    if sc.omega_tails:
        slacks = []
        for start in sc.omega_tails:
            tail = [orb.points[i] for i in range(start, start + sc.omega_window)]
            slacks.append(omega_isometry_slack(sc.map, tail))
        run.csv("omega.csv", [("tail_start", "window", "slack")] + [
            (s, sc.omega_window, v) for s, v in zip(sc.omega_tails, slacks)
        ])
        run.extrema["omega_slack_first"] = slacks[0]
        run.extrema["omega_slack_last"] = slacks[-1]
        run.check("omega_slack_first_positive", slacks[0], ">", 0.0)
        run.check("omega_slack_decay", slacks[-1], "<=", slacks[0] / sc.omega_decay)

    table = ergodic_table(
        orb,
        sc.n_grid,
        range(sc.k_max + 1),
        sc.solver,
        warm_start=not run.serial,
        workers=run.workers,
    )
    rep = almost_convergence_report(table, sc.map, burn_in=sc.burn_in)
    run.csv("ergodic_table.csv", table.rows())
    run.csv("almost_convergence.csv", rep.rows())
    run.check("nonconverged_cells", len(table.nonconverged), "<=", 0)
    after = [rep.sup_deviation[n] for n in table.n_values if n >= sc.burn_in]
    rise = max((b - a for a, b in zip(after, after[1:])), default=0.0)
    run.check("sup_deviation_max_increase_after_burn_in", rise, "<=", 0.0)
    run.extrema["sup_deviation_min"] = min(rep.sup_deviation.values())
    run.extrema["sup_deviation_max"] = max(rep.sup_deviation.values())
    run.extrema["tail_slope"] = rep.tail_slope
    run.extrema["fixed_point_residual"] = rep.fixed_point_residual
    if sc.residual_max is not None:
        run.check("fixed_point_residual", rep.fixed_point_residual, "<=", sc.residual_max)

    if sc.cesaro_bound:
        if not isinstance(sc.map, RotateEuclidean):
            raise ConfigError(["cesaro_bound needs a rotate_euclidean map"])
        p0 = sc.map.center
        theta = sc.map.angle
        d0 = distance(sc.start, p0)
        rows = [("n", "distance", "bound")]
        worst = -math.inf
        for n in table.n_values:
            dn = distance(table.mean(n, 0), p0)
            bound = 2.0 / n * d0 / abs(math.sin(theta / 2)) + 1e-9
            rows.append((n, dn, bound))
            worst = max(worst, dn - bound)
        run.csv("cesaro_bound.csv", rows)
        run.check("cesaro_bound_excess", worst, "<=", 0.0)


# ---------------------------------------------------------------------------
# almost-period
# ---------------------------------------------------------------------------

def _net_checkpoints(H):
    return sorted({max(1, (H + 1) * i // 8) for i in range(1, 9)})


def _almost_period(run: _Run, sc: AlmostPeriod):
    orb = orbit(sc.map, sc.start, sc.horizon, seed=run.config.seed)
    run.csv("orbit.csv", _orbit_rows(orb))
    rep = find_almost_period(orb, sc.epsilon, L_max=sc.L_max)
    run.csv("windows.csv", rep.rows())
    run.extrema["L"] = rep.L
    run.extrema["N"] = rep.N
    found = float(rep.success)
    run.check("almost_period_found", found, "==", float(sc.expect_almost_periodic))

    net = eps_net(orb, sc.epsilon)
    marks = _net_checkpoints(sc.horizon)
    counts = [net.count_upto(m) for m in marks]
    run.csv("eps_net.csv", [("points", "centers")] + list(zip(marks, counts)))
    half = net.count_upto((sc.horizon + 1) // 2)
    full = net.count_upto(sc.horizon + 1)
    run.extrema["net_centers"] = full
    if sc.expect_almost_periodic:
        run.check("net_growth_last_half", full - half, "<=", 0)
    else:
        # linear growth doubles the count from half to full horizon
        run.check("net_growth_ratio", full / max(half, 1), ">=", 1.8)

    if sc.expected_period is not None:
        p = detect_period(orb, sc.period_tol)
        run.check("orbit_period", -1 if p is None else p, "==", sc.expected_period)
        rows = [("probe", "period")]
        bad = 0
        probes = random_points(run.config.space, run.rng, sc.probe_count, sc.probe_radius)
        for j, probe in enumerate(probes):
            q = detect_period(scalar_trace(orb, probe), sc.period_tol)
            rows.append((j, -1 if q is None else q))
            bad += q is None or sc.expected_period % q != 0
        run.csv("scalar_periods.csv", rows)
        run.check("scalar_periods_not_dividing", bad, "<=", 0)


# ---------------------------------------------------------------------------
# flow-ergodic
# ---------------------------------------------------------------------------

def _window_grid(sc: FlowErgodic):
    out = []
    for T in sc.window_T:
        count = int(math.floor((sc.T - T) / sc.window_s_step + 1e-9))
        out.extend((T, round(i * sc.window_s_step, 12)) for i in range(count + 1))
    return out


def _flow_ergodic(run: _Run, sc: FlowErgodic):
    A = sc.field
    traj = integrate(A, sc.start, sc.T, sc.h, sc.scheme)
    run.csv("trajectory.csv", traj.rows())
    p = A.singularity()
    d0 = distance(sc.start, p)
    model = run.config.space.model
    d = model.dist(traj.coords, p.coords)

    if sc.decay_tol is not None:
        if not isinstance(A, GradientDistancePotential):
            raise ConfigError(["decay_tol applies to gradient_distance_potential fields"])
        expected = np.exp(-traj.times) * d0
        err = np.abs(d - expected)
        run.csv("decay.csv", [("t", "distance", "expected", "error")] + list(zip(traj.times, d, expected, err)))
        run.extrema["decay_max_error"] = float(err.max())
        run.check("decay_relative_error", err.max() / d0, "<=", sc.decay_tol)

    if sc.resolvent_pairs:
        space = run.config.space
        xs = random_points(space, run.rng, sc.resolvent_pairs, 1.0)
        ys = random_points(space, run.rng, sc.resolvent_pairs, 1.0)
        lams = np.exp(run.rng.uniform(math.log(1e-2), math.log(1e1), sc.resolvent_pairs))
        rows = [("pair", "lambda", "slack")]
        slack = np.empty(sc.resolvent_pairs)
        for i, (x, y, lam) in enumerate(zip(xs, ys, lams)):
            slack[i] = distance(x, y) - distance(resolvent(A, lam, x), resolvent(A, lam, y))
            rows.append((i, lam, slack[i]))
        run.csv("resolvent_pairs.csv", rows)
        run.extrema["resolvent_min_slack"] = float(slack.min())
        run.check("resolvent_nonexpansive_slack", slack.min(), ">=", -1e-9)

    rep = flow_ergodic_report(
        traj, _window_grid(sc), semigroup_step=sc.h, semigroup_pairs=sc.semigroup_pairs, workers=run.workers
    )
    run.csv("flow_report.csv", rep.rows())
    run.csv("flow_summary.csv", [("T", "sup_deviation", "sup_singularity_distance", "bound")] + [
        (T, rep.sup_deviation[T], rep.singularity_distance[T], d0 / T + sc.h * d0) for T in rep.sup_deviation
    ])
    if rep.semigroup_min_slack is not None:
        run.extrema["semigroup_min_slack"] = rep.semigroup_min_slack
        run.check("semigroup_nonexpansive_slack", rep.semigroup_min_slack, ">=", -1e-9)
    if isinstance(A, GradientDistancePotential):
        for T in sc.window_T:
            # quadrature tolerance: one step's worth of the initial distance
            run.check(f"ergodic_bound_T{T:g}", rep.singularity_distance[T], "<=", d0 / T + sc.h * d0)
    run.extrema["singularity_residual"] = rep.singularity_residual
    if sc.residual_max is not None:
        run.check("singularity_residual", rep.singularity_residual, "<=", sc.residual_max)


_SCENARIOS = {
    "space-verify": _space_verify,
    "orbit-ergodic": _orbit_ergodic,
    "almost-period": _almost_period,
    "flow-ergodic": _flow_ergodic,
}

_RECOVERABLE = (SolverError, StepRejected, WindowError, HorizonError, GeometryError)


def run(config: ExperimentConfig, out_dir: str | Path | None = None, serial: bool = False, mode: str | None = None) -> RunManifest:
    """Run one experiment; returns the manifest (also written as manifest.json).

    ``serial`` selects the verification mode: one thread and no warm starts.
    Numerical failures inside a scenario become a failed ``completed`` check
    rather than an exception; configuration problems still raise
    :class:`ConfigError`.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    kind = config.scenario.kind
    r = _Run(config, out, serial, mode or kind)
    manifest = RunManifest(config.name, kind, config.digest(), __version__, config.seed, serial)
    start = time.perf_counter()
    try:
        _SCENARIOS[kind](r, config.scenario)
        r.check("completed", 1, "==", 1)
    except _RECOVERABLE as exc:
        manifest.error = f"{type(exc).__name__}: {exc}"
        r.check("completed", 0, "==", 1, note=manifest.error)
    manifest.wall_time = time.perf_counter() - start
    limit = getattr(config.scenario, "time_limit", None)
    if limit is not None:
        r.check("wall_time_seconds", manifest.wall_time, "<", limit)
    manifest.checks = r.checks
    manifest.extrema = r.extrema
    manifest.files = r.files
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest
