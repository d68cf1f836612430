"""Experiment configuration: dataclasses plus a TOML encoding.

A config file looks like::

    seed = 7
    output = "runs/h2"

    [space]
    kind = "hyperbolic"
    dim = 2

    [scenario]
    kind = "orbit-ergodic"
    start = [1.5430806348152437, 1.1752011936438014, 0.0]
    horizon = 4000
    n_grid = [25, 50, 100, 200, 400, 800, 1600, 3200, 4000]
    k_max = 50

    [scenario.map]
    type = "rotate_hyperbolic"
    center = [1.0, 0.0, 0.0]
    angle = 1.0

Points are written as their raw coordinates (nested lists for matrices,
``[leg, radius]`` on the spider). Maps and fields are tagged tables keyed by
``type``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..frechet import SolverConfig
from ..flows import FieldDescriptor, field_from_dict
from ..geometry import GeometryError, Point, SpaceDescriptor
from ..maps import MapDescriptor, MapError, map_from_dict


class ConfigError(ValueError):
    """Structured diagnostics for an invalid experiment config."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


SPACE_CHECKS = ("geodesic", "exp_log", "quasilin", "cat0", "cauchy_schwarz", "separation", "karcher_oracle")


@dataclass
class SpaceVerify:
    sample_count: int = 10_000
    radius: float = 1.0
    checks: tuple[str, ...] = ("geodesic", "exp_log", "quasilin", "cat0", "cauchy_schwarz")
    mean_count: int = 1000
    mean_size: int = 5
    time_limit: float | None = None
    kind = "space-verify"

    def to_dict(self):
        d = {
            "kind": self.kind,
            "sample_count": self.sample_count,
            "radius": self.radius,
            "checks": list(self.checks),
            "mean_count": self.mean_count,
            "mean_size": self.mean_size,
        }
        if self.time_limit is not None:
            d["time_limit"] = self.time_limit
        return d


@dataclass
class OrbitErgodic:
    map: MapDescriptor
    start: Point
    horizon: int
    n_grid: tuple[int, ...]
    k_max: int
    burn_in: int = 100
    residual_max: float | None = None
    omega_tails: tuple[int, ...] = ()
    omega_window: int = 20
    omega_decay: float = 10.0
    cesaro_bound: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    kind = "orbit-ergodic"

    def to_dict(self):
        d = {
            "kind": self.kind,
            "map": self.map.to_dict(),
            "start": self.start.to_list(),
            "horizon": self.horizon,
            "n_grid": list(self.n_grid),
            "k_max": self.k_max,
            "burn_in": self.burn_in,
            "omega_tails": list(self.omega_tails),
            "omega_window": self.omega_window,
            "omega_decay": self.omega_decay,
            "cesaro_bound": self.cesaro_bound,
            "solver": self.solver.to_dict(),
        }
        if self.residual_max is not None:
            d["residual_max"] = self.residual_max
        return d


@dataclass
class AlmostPeriod:
    map: MapDescriptor
    start: Point
    epsilon: float
    horizon: int
    L_max: int | None = None
    expect_almost_periodic: bool = True
    probe_count: int = 0
    expected_period: int | None = None
    period_tol: float = 1e-9
    probe_radius: float = 1.0
    kind = "almost-period"

    def to_dict(self):
        d = {
            "kind": self.kind,
            "map": self.map.to_dict(),
            "start": self.start.to_list(),
            "epsilon": self.epsilon,
            "horizon": self.horizon,
            "expect_almost_periodic": self.expect_almost_periodic,
            "probe_count": self.probe_count,
            "period_tol": self.period_tol,
            "probe_radius": self.probe_radius,
        }
        if self.L_max is not None:
            d["L_max"] = self.L_max
        if self.expected_period is not None:
            d["expected_period"] = self.expected_period
        return d


@dataclass
class FlowErgodic:
    field: FieldDescriptor
    start: Point
    T: float
    h: float
    window_T: tuple[float, ...]
    window_s_step: float
    scheme: str = "implicit"
    decay_tol: float | None = None
    resolvent_pairs: int = 0
    residual_max: float | None = None
    semigroup_pairs: int = 32
    kind = "flow-ergodic"

    def to_dict(self):
        d = {
            "kind": self.kind,
            "field": self.field.to_dict(),
            "start": self.start.to_list(),
            "T": self.T,
            "h": self.h,
            "window_T": list(self.window_T),
            "window_s_step": self.window_s_step,
            "scheme": self.scheme,
            "resolvent_pairs": self.resolvent_pairs,
            "semigroup_pairs": self.semigroup_pairs,
        }
        if self.decay_tol is not None:
            d["decay_tol"] = self.decay_tol
        if self.residual_max is not None:
            d["residual_max"] = self.residual_max
        return d


Scenario = Union[SpaceVerify, OrbitErgodic, AlmostPeriod, FlowErgodic]


@dataclass
class ExperimentConfig:
    space: SpaceDescriptor
    scenario: Scenario
    seed: int = 0
    output: str = "runs"
    name: str = "experiment"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "output": self.output,
            "space": self.space.to_dict(),
            "scenario": self.scenario.to_dict(),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.space, self.scenario, int(seed), self.output, self.name)


def _scenario_from_dict(d: dict, space: SpaceDescriptor) -> Scenario:
    kind = d.get("kind")
    if kind == "space-verify":
        checks = tuple(d.get("checks", SpaceVerify.checks))
        bad = [c for c in checks if c not in SPACE_CHECKS]
        if bad:
            raise ConfigError([f"unknown space check {c!r}" for c in bad])
        return SpaceVerify(
            int(d.get("sample_count", 10_000)),
            float(d.get("radius", 1.0)),
            checks,
            int(d.get("mean_count", 1000)),
            int(d.get("mean_size", 5)),
            d.get("time_limit"),
        )
    if kind == "orbit-ergodic":
        return OrbitErgodic(
            map_from_dict(d["map"], space),
            Point(space, d["start"]),
            int(d["horizon"]),
            tuple(int(n) for n in d["n_grid"]),
            int(d["k_max"]),
            int(d.get("burn_in", 100)),
            d.get("residual_max"),
            tuple(int(t) for t in d.get("omega_tails", ())),
            int(d.get("omega_window", 20)),
            float(d.get("omega_decay", 10.0)),
            bool(d.get("cesaro_bound", False)),
            SolverConfig.from_dict(d.get("solver", {})),
        )
    if kind == "almost-period":
        return AlmostPeriod(
            map_from_dict(d["map"], space),
            Point(space, d["start"]),
            float(d["epsilon"]),
            int(d["horizon"]),
            d.get("L_max"),
            bool(d.get("expect_almost_periodic", True)),
            int(d.get("probe_count", 0)),
            d.get("expected_period"),
            float(d.get("period_tol", 1e-9)),
            float(d.get("probe_radius", 1.0)),
        )
    if kind == "flow-ergodic":
        return FlowErgodic(
            field_from_dict(d["field"], space),
            Point(space, d["start"]),
            float(d["T"]),
            float(d["h"]),
            tuple(float(t) for t in d["window_T"]),
            float(d["window_s_step"]),
            d.get("scheme", "implicit"),
            d.get("decay_tol"),
            int(d.get("resolvent_pairs", 0)),
            d.get("residual_max"),
            int(d.get("semigroup_pairs", 32)),
        )
    raise ConfigError([f"unknown scenario kind {kind!r}"])


def config_from_dict(d: dict[str, Any]) -> ExperimentConfig:
    problems = []
    for key in ("space", "scenario"):
        if key not in d:
            problems.append(f"missing [{key}] table")
    if problems:
        raise ConfigError(problems)
    try:
        space = SpaceDescriptor.from_dict(d["space"])
        scenario = _scenario_from_dict(d["scenario"], space)
    except ConfigError:
        raise
    except (GeometryError, MapError) as exc:
        raise ConfigError([str(exc)]) from None
    except KeyError as exc:
        raise ConfigError([f"missing key {exc.args[0]!r}"]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)]) from None
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError([f"seed must be an integer in [0, 2^64), got {seed!r}"])
    return ExperimentConfig(space, scenario, seed, str(d.get("output", "runs")), str(d.get("name", "experiment")))


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from None
    return config_from_dict(data)


def dump_config(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())
