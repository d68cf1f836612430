import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hadamard.geometry import (
    GeometryError,
    Point,
    SpaceDescriptor,
    TangentVector,
    UnsupportedOperation,
    cat0_residual,
    cat0_residual_batch,
    cauchy_schwarz_slack,
    cauchy_schwarz_slack_batch,
    distance,
    euclidean,
    exp_map,
    geodesic_point,
    hub,
    hyperbolic,
    inner,
    log_map,
    minkowski,
    norm,
    origin,
    quasilin,
    quasilin_batch,
    random_coords,
    random_points,
    random_tangent,
    spd,
    spider,
    spider_point,
)

ALL_SPACES = [euclidean(3), hyperbolic(2), hyperbolic(3), spd(2), spd(3), spider(3), spider(5)]
MANIFOLDS = [s for s in ALL_SPACES if s.is_manifold]

seeds = st.integers(0, 2**32 - 1)


def rpts(space, seed, n, radius=1.0):
    return random_points(space, np.random.default_rng(seed), n, radius)


# --- descriptors and validation ---------------------------------------------


def test_descriptor_roundtrip():
    for s in ALL_SPACES:
        assert SpaceDescriptor.from_dict(s.to_dict()) == s


@pytest.mark.parametrize(
    "bad",
    [{"kind": "euclidean", "dim": 0}, {"kind": "spd", "order": 0}, {"kind": "spider", "legs": 2}, {"kind": "torus", "dim": 2}],
)
def test_descriptor_rejects_invalid(bad):
    with pytest.raises(GeometryError):
        SpaceDescriptor.from_dict(bad)


def test_point_validation():
    with pytest.raises(GeometryError):
        Point(hyperbolic(2), [1.0, 1.0, 0.0])  # off the hyperboloid
    with pytest.raises(GeometryError):
        Point(hyperbolic(2), [-1.0, 0.0, 0.0])  # lower sheet
    with pytest.raises(GeometryError):
        Point(spd(2), [[1.0, 0.5], [0.0, 1.0]])  # not symmetric
    with pytest.raises(GeometryError):
        Point(spd(2), [[1.0, 0.0], [0.0, -1.0]])  # not positive
    with pytest.raises(GeometryError):
        Point(spider(3), [4, 1.0])  # no such leg
    with pytest.raises(GeometryError):
        Point(spider(3), [1, -1.0])
    with pytest.raises(GeometryError):
        Point(euclidean(2), [1.0, 2.0, 3.0])


def test_spider_hub_is_canonical():
    s = spider(3)
    assert spider_point(s, 2, 0.0) == hub(s)
    assert spider_point(s, 2, 0.0).leg == 0
    assert hash(spider_point(s, 3, 0.0)) == hash(hub(s))


def test_points_are_immutable():
    p = Point(euclidean(2), [1.0, 2.0])
    with pytest.raises(ValueError):
        p.coords[0] = 5.0


def test_space_mismatch():
    with pytest.raises(GeometryError):
        distance(origin(euclidean(2)), origin(euclidean(3)))


# --- distance examples --------------------------------------------------------


def test_distance_examples():
    assert distance(Point(euclidean(2), [0, 0]), Point(euclidean(2), [3, 4])) == pytest.approx(5.0, abs=1e-15)
    h = hyperbolic(2)
    assert distance(Point(h, [1, 0, 0]), Point(h, [math.cosh(1), math.sinh(1), 0])) == pytest.approx(1.0, abs=1e-14)
    s = spider(3)
    assert distance(spider_point(s, 1, 2.0), spider_point(s, 3, 0.5)) == pytest.approx(2.5)
    assert distance(spider_point(s, 1, 2.0), spider_point(s, 1, 0.5)) == pytest.approx(1.5)


def test_spd_distance_matches_eigenvalue_formula():
    rng = np.random.default_rng(0)
    s = spd(3)
    a, b = random_points(s, rng, 2)
    # generalized eigenvalues of (b, a) via a^{-1} b
    lam = np.linalg.eigvals(np.linalg.solve(a.coords, b.coords)).real
    assert distance(a, b) == pytest.approx(np.sqrt(np.sum(np.log(lam) ** 2)), rel=1e-10)


@pytest.mark.parametrize("space", ALL_SPACES, ids=str)
@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_metric_axioms(space, seed):
    x, y, z = rpts(space, seed, 3)
    assert distance(x, x) == pytest.approx(0.0, abs=1e-7)
    assert distance(x, y) == pytest.approx(distance(y, x), abs=1e-12)
    assert distance(x, z) <= distance(x, y) + distance(y, z) + 1e-9


# --- geodesics ----------------------------------------------------------------


def test_geodesic_examples():
    e = euclidean(2)
    np.testing.assert_allclose(geodesic_point(Point(e, [0, 0]), Point(e, [2, 2]), 0.5).coords, [1, 1])
    s = spd(2)
    mid = geodesic_point(Point(s, np.eye(2)), Point(s, 4 * np.eye(2)), 0.5)
    np.testing.assert_allclose(mid.coords, 2 * np.eye(2), atol=1e-12)
    sp = spider(3)
    assert geodesic_point(spider_point(sp, 1, 2), spider_point(sp, 2, 2), 0.5) == hub(sp)


def test_spd_commuting_geodesic_matches_log_euclidean():
    s = spd(2)
    x = np.diag([1.0, 3.0])
    y = np.diag([5.0, 0.5])
    t = 0.3
    expected = np.diag(np.exp((1 - t) * np.log(np.diag(x)) + t * np.log(np.diag(y))))
    np.testing.assert_allclose(geodesic_point(Point(s, x), Point(s, y), t).coords, expected, atol=1e-12)


def test_geodesic_parameter_out_of_range():
    e = euclidean(1)
    with pytest.raises(GeometryError):
        geodesic_point(Point(e, [0]), Point(e, [1]), 1.5)
    with pytest.raises(GeometryError):
        cat0_residual(Point(e, [0]), Point(e, [1]), Point(e, [2]), -0.1)


@pytest.mark.parametrize("space", ALL_SPACES, ids=str)
@settings(max_examples=40, deadline=None)
@given(seed=seeds, t=st.floats(0.0, 1.0))
def test_geodesic_consistency(space, seed, t):
    x, y = rpts(space, seed, 2)
    g = geodesic_point(x, y, t)
    Point(space, g.coords)  # stays valid
    d = distance(x, y)
    assert distance(x, g) == pytest.approx(t * d, abs=1e-9 * max(1, d))
    assert distance(g, y) == pytest.approx((1 - t) * d, abs=1e-9 * max(1, d))


# --- exp / log ----------------------------------------------------------------


def test_exp_log_examples():
    e = euclidean(2)
    np.testing.assert_allclose(log_map(Point(e, [0, 0]), Point(e, [1, 2])).components, [1, 2])
    s = spd(2)
    np.testing.assert_allclose(
        log_map(Point(s, np.eye(2)), Point(s, np.diag([math.e, 1.0]))).components, np.diag([1.0, 0.0]), atol=1e-14
    )
    h = hyperbolic(2)
    p = exp_map(TangentVector(Point(h, [1, 0, 0]), [0, 1, 0]))
    np.testing.assert_allclose(p.coords, [math.cosh(1), math.sinh(1), 0], atol=1e-14)


def test_spider_has_no_tangent_space():
    s = spider(3)
    with pytest.raises(UnsupportedOperation):
        log_map(spider_point(s, 1, 1), spider_point(s, 2, 1))
    with pytest.raises(UnsupportedOperation):
        TangentVector(hub(s), [0.0, 0.0])


def test_tangent_validation():
    h = hyperbolic(2)
    with pytest.raises(GeometryError):
        TangentVector(Point(h, [1, 0, 0]), [1, 0, 0])  # not Minkowski-orthogonal
    with pytest.raises(GeometryError):
        TangentVector(Point(spd(2), np.eye(2)), [[0, 1], [0, 0]])


def test_minkowski_form():
    assert minkowski(np.array([1.0, 0, 0]), np.array([1.0, 0, 0])) == -1.0


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_exp_log_roundtrip(space, seed):
    x, y = rpts(space, seed, 2, radius=1.5)
    v = log_map(x, y)
    assert distance(exp_map(v), y) <= 1e-8
    assert norm(v) == pytest.approx(distance(x, y), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("space", MANIFOLDS, ids=str)
@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_exp_of_random_tangent_is_valid(space, seed):
    rng = np.random.default_rng(seed)
    x = random_points(space, rng, 1)[0]
    v = random_tangent(x, rng)
    y = exp_map(v)
    Point(space, y.coords)
    assert distance(x, y) == pytest.approx(norm(v), rel=1e-9, abs=1e-12)
    assert inner(v, v) == pytest.approx(norm(v) ** 2)


# --- quasilinearization -----------------------------------------------------


def test_quasilin_examples():
    e = euclidean(2)
    a, b, c, d = (Point(e, v) for v in ([0, 0], [1, 0], [0, 0], [0, 1]))
    assert quasilin(a, b, c, d) == pytest.approx(0.0, abs=1e-15)
    h = hyperbolic(2)
    x, y, z = rpts(h, 3, 3)
    assert quasilin(x, y, x, y) == pytest.approx(distance(x, y) ** 2)
    assert quasilin(x, x, y, z) == pytest.approx(0.0, abs=1e-12)


def test_quasilin_is_euclidean_inner_product():
    rng = np.random.default_rng(1)
    e = euclidean(4)
    a, b, c, d = random_points(e, rng, 4)
    assert quasilin(a, b, c, d) == pytest.approx(np.dot(b.coords - a.coords, d.coords - c.coords))


@pytest.mark.parametrize("space", ALL_SPACES, ids=str)
def test_quasilin_identities(space):
    rng = np.random.default_rng(7)
    a, b, c, d = (random_coords(space, rng, 2000) for _ in range(4))
    q = quasilin_batch(space, a, b, c, d)
    assert np.max(np.abs(q + quasilin_batch(space, b, a, c, d))) <= 1e-10
    assert np.max(np.abs(q - quasilin_batch(space, c, d, a, b))) <= 1e-10


# --- CAT(0) and Cauchy-Schwarz ------------------------------------------------


def test_cat0_spider_example():
    # all four distances go through the hub; the geodesic midpoint is the hub
    s = spider(3)
    y, x0, x1 = spider_point(s, 1, 1), spider_point(s, 2, 1), spider_point(s, 3, 1)
    expected = 0.5 * distance(y, x0) ** 2 + 0.5 * distance(y, x1) ** 2 - 0.25 * distance(x0, x1) ** 2
    expected -= distance(y, hub(s)) ** 2
    assert expected == pytest.approx(2.0)
    assert cat0_residual(x0, x1, y, 0.5) == pytest.approx(2.0)


def test_cat0_euclidean_equality():
    rng = np.random.default_rng(3)
    e = euclidean(5)
    x0, x1, y = (random_coords(e, rng, 1000, 3.0) for _ in range(3))
    r = cat0_residual_batch(e, x0, x1, y, rng.uniform(size=1000))
    assert np.max(np.abs(r)) <= 1e-10


@pytest.mark.parametrize("space", ALL_SPACES, ids=str)
@settings(max_examples=30, deadline=None)
@given(seed=seeds, t=st.floats(0.0, 1.0))
def test_cat0_inequality(space, seed, t):
    x0, x1, y = rpts(space, seed, 3, radius=2.0)
    assert cat0_residual(x0, x1, y, t) >= -1e-9


def test_cat0_strict_in_negative_curvature():
    rng = np.random.default_rng(5)
    h = hyperbolic(2)
    x0, x1, y = (random_coords(h, rng, 500, 2.0) for _ in range(3))
    assert np.median(cat0_residual_batch(h, x0, x1, y, 0.5)) > 0


def test_cauchy_schwarz_examples():
    s = spd(2)
    a, c, d = rpts(s, 11, 3)
    assert cauchy_schwarz_slack(a, a, c, d) == pytest.approx(0.0, abs=1e-12)
    b = rpts(s, 12, 1)[0]
    assert cauchy_schwarz_slack(a, b, a, b) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("space", ALL_SPACES, ids=str)
def test_cauchy_schwarz_sweep(space):
    rng = np.random.default_rng(17)
    quad = [random_coords(space, rng, 2000, 1.5) for _ in range(4)]
    assert np.min(cauchy_schwarz_slack_batch(space, *quad)) >= -1e-9


def test_random_points_are_valid():
    rng = np.random.default_rng(0)
    for space in ALL_SPACES:
        for p in random_points(space, rng, 50, 2.0):
            Point(space, p.coords)
