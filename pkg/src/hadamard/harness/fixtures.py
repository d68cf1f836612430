"""Named built-in experiments. Each acceptance check maps to one fixture."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..ergodic import geometric_grid
from ..flows import GradientDistancePotential
from ..geometry import Point, SpaceDescriptor, euclidean, hyperbolic, spd, spider
from ..maps import Damped, RotateEuclidean, RotateHyperbolic, Translate
from .config import AlmostPeriod, ExperimentConfig, FlowErgodic, OrbitErgodic, SpaceVerify
from .runner import RunManifest, run

DEFAULT_SEED = 20240611

SWEEP_SPACES = (euclidean(3), hyperbolic(3), spd(3), spider(4))


def _space_tag(space: SpaceDescriptor) -> str:
    return f"{space.kind}{space.size}"


def _h2_point_at(distance: float) -> Point:
    return Point(hyperbolic(2), [math.cosh(distance), math.sinh(distance), 0.0])


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    build: Callable[[int], list[ExperimentConfig]]

    def configs(self, seed: int = DEFAULT_SEED) -> list[ExperimentConfig]:
        return self.build(seed)


def _sweep(checks, sample_count=10_000, time_limit=None, spaces=SWEEP_SPACES, mean_count=1000):
    def build(seed):
        return [
            ExperimentConfig(
                space,
                SpaceVerify(sample_count, 1.0, tuple(checks), mean_count=mean_count, time_limit=time_limit),
                seed,
                name=_space_tag(space),
            )
            for space in spaces
        ]

    return build


def _period_rotation(seed):
    h2 = hyperbolic(2)
    m = RotateHyperbolic(Point(h2, [1.0, 0.0, 0.0]), 2 * math.pi / 5)
    sc = AlmostPeriod(m, _h2_point_at(1.0), epsilon=0.1, horizon=200, probe_count=32, expected_period=5)
    return [ExperimentConfig(h2, sc, seed, name="h2-rotation-period5")]


def _almost_period(seed):
    h2 = hyperbolic(2)
    rot = RotateHyperbolic(Point(h2, [1.0, 0.0, 0.0]), 1.0)
    r2 = euclidean(2)
    ray = Translate(r2, np.array([0.12, 0.09]))
    return [
        ExperimentConfig(h2, AlmostPeriod(rot, _h2_point_at(1.0), 0.1, 10_000), seed, name="h2-rotation"),
        ExperimentConfig(
            r2,
            AlmostPeriod(ray, Point(r2, [0.0, 0.0]), 0.1, 10_000, expect_almost_periodic=False),
            seed,
            name="euclidean-ray",
        ),
    ]


def _rotation_ergodic(seed):
    h2 = hyperbolic(2)
    r2 = euclidean(2)
    grid = tuple(geometric_grid(4000))
    rot = RotateHyperbolic(Point(h2, [1.0, 0.0, 0.0]), 1.0)
    flat = RotateEuclidean(Point(r2, [0.0, 0.0]), 1.0)
    return [
        ExperimentConfig(
            h2, OrbitErgodic(rot, _h2_point_at(1.0), 4000, grid, 50, residual_max=1e-2), seed, name="h2-rotation"
        ),
        ExperimentConfig(
            r2,
            OrbitErgodic(flat, Point(r2, [1.0, 0.0]), 4000, grid, 50, cesaro_bound=True),
            seed,
            name="euclidean-rotation",
        ),
    ]


def _damped_rotation(seed):
    h2 = hyperbolic(2)
    m = Damped(RotateHyperbolic(Point(h2, [1.0, 0.0, 0.0]), 1.0), 0.5)
    sc = OrbitErgodic(
        m,
        _h2_point_at(1.0),
        horizon=200,
        n_grid=(25, 50, 100, 200),
        k_max=20,
        omega_tails=(100, 1000),
        omega_window=20,
        omega_decay=10.0,
    )
    return [ExperimentConfig(h2, sc, seed, name="h2-damped-rotation")]


def _spd_flow(seed):
    s2 = spd(2)
    target = Point(s2, [[1.5, 0.3], [0.3, 0.8]])
    start = Point(s2, [[3.0, -0.4], [-0.4, 0.6]])
    sc = FlowErgodic(
        GradientDistancePotential(target, 1.0),
        start,
        T=5.0,
        h=0.01,
        window_T=(1.0, 2.0, 5.0),
        window_s_step=0.25,
        decay_tol=0.01,
        resolvent_pairs=1000,
        residual_max=1e-6,
    )
    return [ExperimentConfig(s2, sc, seed, name="spd2-distance-potential")]


FIXTURES: dict[str, Fixture] = {
    f.name: f
    for f in [
        Fixture(
            "cat0-sweep",
            "CAT(0) residual on 10^4 random tuples in each model space, with the flat equality case",
            _sweep(["cat0"], time_limit=30.0),
        ),
        Fixture(
            "cauchy-schwarz-sweep",
            "Cauchy-Schwarz slack of the quasilinear pairing on 10^4 random quadruples per space",
            _sweep(["cauchy_schwarz"]),
        ),
        Fixture(
            "karcher-oracle",
            "Karcher means against the arithmetic mean (flat) and the log-Euclidean mean (commuting SPD)",
            _sweep(["karcher_oracle"], spaces=(euclidean(3), spd(3))),
        ),
        Fixture(
            "separation-sweep",
            "Separation inequality around the Karcher mean on 10^3 random instances per space",
            _sweep(["separation"]),
        ),
        Fixture(
            "period-5-rotation",
            "Rotation of H^2 by 2pi/5: orbit period 5 and every scalar trace period divides 5",
            _period_rotation,
        ),
        Fixture(
            "h2-almost-period",
            "Rotation of H^2 by 1 rad is almost periodic with a bounded eps-net; a translation ray is not",
            _almost_period,
        ),
        Fixture(
            "h2-rotation-ergodic",
            "Ergodic means of an irrational rotation of H^2 almost converge to its center; flat Cesaro bound",
            _rotation_ergodic,
        ),
        Fixture(
            "damped-rotation-omega",
            "Isometry defect on late tails of a damped rotation shrinks as the orbit settles",
            _damped_rotation,
        ),
        Fixture(
            "spd-gradient-flow",
            "Implicit flow of the squared-distance potential on SPD(2): decay law, resolvent contraction, flow means",
            _spd_flow,
        ),
        Fixture(
            "spider-cat0-sweep",
            "CAT(0), Cauchy-Schwarz and geodesic checks on a four-legged spider",
            _sweep(["geodesic", "quasilin", "cat0", "cauchy_schwarz"], spaces=(spider(4),)),
        ),
        Fixture(
            "space-verify-all",
            "Every pointwise invariant (geodesics, exp/log, pairing identities) in each model space",
            _sweep(["geodesic", "exp_log", "quasilin", "cat0", "cauchy_schwarz"]),
        ),
    ]
}


def list_fixtures() -> list[tuple[str, str]]:
    return [(f.name, f.description) for f in FIXTURES.values()]


def get_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}") from None


def run_fixture(name: str, out_dir: str | Path, serial: bool = False, seed: int | None = None, kind: str | None = None, mode: str | None = None) -> list[RunManifest]:
    """Run every config of a fixture into ``out_dir/<config name>``.

    ``kind`` restricts the run to configs of one scenario kind.
    """
    fixture = get_fixture(name)
    manifests = []
    for cfg in fixture.configs(DEFAULT_SEED if seed is None else seed):
        if kind is not None and cfg.scenario.kind != kind:
            continue
        manifests.append(run(cfg, Path(out_dir) / cfg.name, serial=serial, mode=mode))
    return manifests
