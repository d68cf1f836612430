import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hadamard.frechet import WeightedPoints
from hadamard.geometry import (
    GeometryError,
    Point,
    UnsupportedOperation,
    distance,
    euclidean,
    geodesic_point,
    hyperbolic,
    random_points,
    spd,
    spider,
)
from hadamard.flows import (
    GradientBarycenter,
    GradientDistancePotential,
    StepRejected,
    WindowError,
    eval_field,
    field_from_dict,
    field_norm,
    flow_ergodic_report,
    integrate,
    monotonicity_slack,
    resolvent,
    semigroup_defect,
    trapezoid_weights,
    window_mean,
)
from hadamard.maps import golden_section

MANIFOLDS = [euclidean(3), hyperbolic(2), spd(2)]


def random_field(space, rng, anchors=3):
    pts = random_points(space, rng, anchors, 1.0)
    return GradientBarycenter(WeightedPoints.of(pts, rng.dirichlet(np.ones(anchors))), float(rng.uniform(0.5, 2.0)))


def test_eval_field_examples():
    e = euclidean(2)
    p = Point(e, [1.0, -1.0])
    A = GradientDistancePotential(p, scale=2.0)
    x = Point(e, [3.0, 0.0])
    np.testing.assert_allclose(eval_field(A, x).components, 2.0 * (x.coords - p.coords))
    assert field_norm(A, p) == 0.0
    assert A.potential(x) == pytest.approx(0.5 * 2.0 * 5.0)
    with pytest.raises(GeometryError):
        eval_field(A, Point(euclidean(3), [0, 0, 0]))


def test_fields_need_manifolds_and_positive_scale():
    sp = spider(3)
    with pytest.raises(UnsupportedOperation):
        GradientDistancePotential(Point(sp, [1, 1.0]))
    with pytest.raises(GeometryError):
        GradientDistancePotential(Point(euclidean(1), [0.0]), scale=0.0)
    with pytest.raises(GeometryError):
        field_from_dict({"type": "curl"}, euclidean(1))


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
def test_field_roundtrip(space):
    A = random_field(space, np.random.default_rng(0))
    B = field_from_dict(A.to_dict(), space)
    x = random_points(space, np.random.default_rng(1), 1)[0]
    np.testing.assert_allclose(eval_field(A, x).components, eval_field(B, x).components, atol=1e-12)


def test_euclidean_monotonicity_slack_is_scaled_squared_distance():
    e = euclidean(3)
    A = GradientDistancePotential(Point(e, [0.2, 0.0, -1.0]), scale=1.5)
    x, y = Point(e, [1, 2, 3]), Point(e, [-1, 0, 0.5])
    assert monotonicity_slack(A, x, y) == pytest.approx(1.5 * distance(x, y) ** 2)
    with pytest.raises(GeometryError):
        monotonicity_slack(A, x, x)


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_fields_are_monotone(space, seed):
    rng = np.random.default_rng(seed)
    A = random_field(space, rng)
    x, y = random_points(space, rng, 2, 1.5)
    if distance(x, y) > 1e-9:
        assert monotonicity_slack(A, x, y) >= -1e-9


# --- resolvents ---------------------------------------------------------------------


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
def test_singularity_is_fixed_by_resolvent(space):
    A = random_field(space, np.random.default_rng(2))
    z = A.singularity()
    assert field_norm(A, z) <= 1e-9
    for lam in (0.01, 1.0, 10.0):
        assert distance(resolvent(A, lam, z), z) <= 1e-9


def test_euclidean_resolvent_closed_form():
    e = euclidean(2)
    p = np.array([1.0, 2.0])
    A = GradientDistancePotential(Point(e, p))
    x = np.array([-3.0, 0.5])
    for lam in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(resolvent(A, lam, Point(e, x)).coords, (x + lam * p) / (1 + lam), atol=1e-10)
    with pytest.raises(ValueError):
        resolvent(A, 0.0, Point(e, x))


@pytest.mark.parametrize("lam", [0.05, 0.5, 3.0])
def test_hyperbolic_resolvent_matches_line_search(lam):
    h = hyperbolic(2)
    rng = np.random.default_rng(6)
    p, x = random_points(h, rng, 2, 1.5)
    A = GradientDistancePotential(p)
    d = distance(x, p)
    # the minimiser lies on the geodesic from x to p
    cost = lambda t: 0.5 * (1 - t) ** 2 * d * d + 0.5 / lam * (t * d) ** 2  # noqa: E731
    t = golden_section(cost, 0.0, 1.0, tol=1e-12)
    assert t == pytest.approx(lam / (1 + lam), abs=1e-6)
    assert distance(resolvent(A, lam, x), geodesic_point(x, p, lam / (1 + lam))) <= 1e-9


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), log_lam=st.floats(-2, 1))
def test_resolvent_is_nonexpansive(space, seed, log_lam):
    rng = np.random.default_rng(seed)
    A = random_field(space, rng)
    x, y = random_points(space, rng, 2, 1.5)
    lam = 10.0**log_lam
    assert distance(resolvent(A, lam, x), resolvent(A, lam, y)) <= distance(x, y) + 1e-9


# --- trajectories ----------------------------------------------------------------------


def test_trajectory_from_singularity_is_constant():
    s = spd(2)
    A = GradientDistancePotential(Point(s, [[2.0, 0.1], [0.1, 1.0]]))
    traj = integrate(A, A.singularity(), 1.0, 0.1)
    assert len(traj) == 11
    assert max(distance(p, A.singularity()) for p in traj.points) <= 1e-9


def test_euclidean_implicit_recursion():
    e = euclidean(2)
    p = np.array([0.5, -0.5])
    A = GradientDistancePotential(Point(e, p))
    x0 = np.array([3.0, 1.0])
    h = 0.05
    traj = integrate(A, Point(e, x0), 2.0, h)
    j = np.arange(len(traj))[:, None]
    np.testing.assert_allclose(traj.coords, p + (1 + h) ** (-j) * (x0 - p), atol=1e-10)


def test_step_count_and_validation():
    A = GradientDistancePotential(Point(euclidean(1), [0.0]))
    x = Point(euclidean(1), [1.0])
    assert len(integrate(A, x, 1.0, 0.3)) == 4
    assert len(integrate(A, x, 1.0, 0.1)) == 11
    with pytest.raises(ValueError):
        integrate(A, x, 1.0, 2.0)
    with pytest.raises(ValueError):
        integrate(A, x, 1.0, 0.1, scheme="rk4")


def test_explicit_step_rejected_on_overflow():
    s = spd(2)
    A = GradientDistancePotential(Point(s, np.eye(2)))
    with np.errstate(all="ignore"), pytest.raises(StepRejected) as info:
        integrate(A, Point(s, np.diag([5.0, 0.2])), 2000.0, 1000.0, scheme="explicit")
    assert info.value.index == 1


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
def test_distance_decay_law(space):
    rng = np.random.default_rng(4)
    p, x0 = random_points(space, rng, 2, 1.5)
    A = GradientDistancePotential(p)
    h = 0.01
    traj = integrate(A, x0, 3.0, h)
    d0 = distance(x0, p)
    got = np.array([distance(q, p) for q in traj.points])
    np.testing.assert_allclose(got, d0 * (1 + h) ** -np.arange(len(traj)), rtol=1e-8)
    exact = d0 * np.exp(-traj.times)
    assert np.max(np.abs(got - exact) / exact) <= 0.02


def test_semigroup_defect_shrinks_with_step():
    h2 = hyperbolic(2)
    rng = np.random.default_rng(5)
    A = random_field(h2, rng)
    x0 = random_points(h2, rng, 1, 2.0)[0]
    d0 = distance(x0, A.singularity())
    coarse = semigroup_defect(A, x0, 0.5, 0.5, 0.1)
    fine = semigroup_defect(A, x0, 0.5, 0.5, 0.02)
    assert fine < coarse
    assert fine <= 0.02 * d0


def test_trapezoid_weights():
    np.testing.assert_allclose(trapezoid_weights(2), [0.5, 0.5])
    np.testing.assert_allclose(trapezoid_weights(5), [1 / 8, 1 / 4, 1 / 4, 1 / 4, 1 / 8])
    with pytest.raises(WindowError):
        trapezoid_weights(1)


# --- continuous-time means -------------------------------------------------------------


def test_window_mean_of_constant_trajectory():
    h2 = hyperbolic(2)
    z = Point(h2, [1.0, 0.0, 0.0])
    traj = integrate(GradientDistancePotential(z), z, 2.0, 0.1)
    rep = flow_ergodic_report(traj, [(1.0, 0.0), (1.0, 0.5), (2.0, 0.0)])
    assert max(rep.sup_deviation.values()) <= 1e-12
    assert rep.singularity_residual <= 1e-12


def test_flat_window_mean_matches_integral():
    e = euclidean(2)
    p = np.array([1.0, 1.0])
    x0 = np.array([4.0, -3.0])
    h = 0.01
    traj = integrate(GradientDistancePotential(Point(e, p)), Point(e, x0), 5.0, h)
    d0 = float(np.linalg.norm(x0 - p))
    for T in (1.0, 2.0, 5.0):
        sigma = window_mean(traj, T, 0.0).mean.coords
        closed = p + (x0 - p) * (1 - math.exp(-T)) / T
        assert np.linalg.norm(sigma - closed) <= h * d0


def test_window_errors():
    A = GradientDistancePotential(Point(euclidean(1), [0.0]))
    traj = integrate(A, Point(euclidean(1), [1.0]), 1.0, 0.1)
    with pytest.raises(WindowError):
        window_mean(traj, 1.0, 0.5)
    with pytest.raises(WindowError):
        window_mean(traj, 0.33, 0.0)
    with pytest.raises(WindowError):
        flow_ergodic_report(traj, [])


def test_report_rows_and_threads():
    h2 = hyperbolic(2)
    rng = np.random.default_rng(7)
    A = random_field(h2, rng)
    traj = integrate(A, random_points(h2, rng, 1, 1.5)[0], 2.0, 0.05)
    windows = [(T, s) for T in (0.5, 1.0) for s in (0.0, 0.5, 1.0)]
    rep = flow_ergodic_report(traj, windows, semigroup_step=0.1, semigroup_pairs=8)
    threaded = flow_ergodic_report(traj, windows, workers=3)
    for key, res in rep.means.items():
        np.testing.assert_array_equal(res.mean.coords, threaded.means[key].mean.coords)
    assert rep.semigroup_min_slack >= -1e-9
    rows = list(rep.rows())
    assert rows[0] == ("T", "s", "c0", "c1", "c2", "deviation", "singularity_distance", "residual")
    assert len(rows) == len(windows) + 1
    traj_rows = list(traj.rows())
    assert traj_rows[0] == ("t", "c0", "c1", "c2", "field_norm") and len(traj_rows) == len(traj) + 1


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
def test_means_approach_singularity_on_long_windows(space):
    rng = np.random.default_rng(9)
    A = random_field(space, rng)
    traj = integrate(A, random_points(space, rng, 1, 1.5)[0], 8.0, 0.02)
    rep = flow_ergodic_report(traj, [(1.0, 0.0), (2.0, 0.0), (8.0, 0.0)])
    dist = rep.singularity_distance
    assert dist[8.0] < dist[2.0] < dist[1.0]
    d0 = distance(traj.start, A.singularity())
    # the distance to the singularity decays at least like exp(-scale t)
    assert dist[8.0] <= d0 / (A.scale * 8.0) + 0.02 * d0
