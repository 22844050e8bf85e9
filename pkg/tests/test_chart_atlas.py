from __future__ import annotations

import numpy as np
import pytest

from gforms.chart_atlas import (
    BOUNDARY_SIGN,
    CATALOG,
    AtlasError,
    CoverageError,
    Support,
    boundary_manifold,
    build_partition,
    catalog_manifold,
    manifold_from_dict,
    orientation_check,
    overlap_points,
    transition,
)
from gforms.exprs import evaluate_many


def interval_pair():
    return manifold_from_dict(
        {
            "name": "interval",
            "dim": 1,
            "ambient_dim": 1,
            "charts": [
                {"id": "left", "image": [[-0.2, 0.7]], "param": ["x1"], "coord": ["x1"]},
                {"id": "right", "image": [[0.3, 1.2]], "param": ["x1"], "coord": ["x1"]},
            ],
        }
    )


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_chart_round_trips(name):
    M = catalog_manifold(name)
    rng = np.random.default_rng(0)
    for c in M.charts:
        assert c.roundtrip_error(100, rng) <= 1e-9
        X = c.sample(100, rng)
        P = c.to_ambient(X).reshape(M.ambient_dim, -1)
        back = evaluate_many(c.param, evaluate_many(c.coord, P).reshape(M.dim, -1)).reshape(M.ambient_dim, -1)
        assert np.max(np.abs(back - P)) <= 1e-9


def test_unknown_catalog_name():
    with pytest.raises(AtlasError, match="unknown catalog manifold"):
        catalog_manifold("torus")


def test_self_transition_is_identity():
    M = catalog_manifold("disk")
    tr = transition(M, "collar1", "collar1")
    X = M.chart("collar1").sample(10, np.random.default_rng(1))
    np.testing.assert_array_equal(evaluate_many(tr.map, X).reshape(2, -1), X)
    J = tr.evaluate_jacobian(X)
    np.testing.assert_array_equal(J, np.broadcast_to(np.eye(2)[:, :, None], J.shape))


def test_translated_box_charts_have_unit_jacobian():
    M = manifold_from_dict(
        {
            "dim": 2,
            "ambient_dim": 2,
            "charts": [
                {"id": "a", "image": [[-1, 1], [-1, 1]], "param": ["x1", "x2"], "coord": ["x1", "x2"]},
                {"id": "b", "image": [[-1, 1], [-1, 1]], "param": ["x1 + 0.5", "x2 - 0.25"], "coord": ["x1 - 0.5", "x2 + 0.25"]},
            ],
        }
    )
    tr = transition(M, "a", "b")
    X = overlap_points(M, "a", "b", 200, np.random.default_rng(0))
    assert X.shape[1] > 0
    Y = evaluate_many(tr.map, X).reshape(2, -1)
    np.testing.assert_allclose(Y - X, np.array([[-0.5], [0.25]]) * np.ones_like(X), atol=1e-15)
    np.testing.assert_allclose(tr.evaluate_jacobian(X), np.broadcast_to(np.eye(2)[:, :, None], (2, 2, X.shape[1])))


def test_annulus_transition_is_angle_shift():
    M = catalog_manifold("annulus")
    tr = transition(M, "east", "west")
    X = overlap_points(M, "east", "west", 400, np.random.default_rng(0))
    assert X.shape[1] > 0
    Y = evaluate_many(tr.map, X).reshape(2, -1)
    np.testing.assert_allclose(Y[0], X[0], atol=1e-12)
    shift = np.mod(Y[1] - X[1] + np.pi, 2 * np.pi) - np.pi
    np.testing.assert_allclose(np.abs(shift), np.pi, atol=1e-12)
    det = np.linalg.det(np.moveaxis(tr.evaluate_jacobian(X), -1, 0))
    np.testing.assert_allclose(det, 1.0, atol=1e-12)


def test_disjoint_charts_have_no_transition():
    M = manifold_from_dict(
        {
            "dim": 1,
            "ambient_dim": 1,
            "charts": [
                {"id": "a", "image": [[0, 1]], "param": ["x1"], "coord": ["x1"]},
                {"id": "b", "image": [[2, 3]], "param": ["x1"], "coord": ["x1"]},
            ],
        }
    )
    with pytest.raises(AtlasError, match="do not overlap"):
        transition(M, "a", "b")


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_atlases_are_oriented(name):
    report = orientation_check(catalog_manifold(name))
    assert report.passed and report.residual == 0.0


def test_single_chart_orientation_is_trivial():
    M = manifold_from_dict(
        {"dim": 1, "ambient_dim": 1, "charts": [{"id": "a", "image": [[0, 1]], "param": ["x1"], "coord": ["x1"]}]}
    )
    assert orientation_check(M).passed


def test_flipping_one_sign_breaks_orientation():
    M = catalog_manifold("s1").with_gamma("west", -1)
    report = orientation_check(M)
    assert not report.passed
    a, b, x = report.violation
    assert {a, b} == {"east", "west"}
    assert report.residual > 0.5


def test_reversing_every_sign_keeps_orientation():
    assert orientation_check(catalog_manifold("disk").reversed()).passed


def test_single_chart_partition_is_one_on_support():
    M = catalog_manifold("box2")
    pou = build_partition(M, [[-1, 1], [-1, 1]], ["whole"])
    P = np.random.default_rng(0).uniform(-1, 1, (2, 200))
    np.testing.assert_allclose(pou.weights(P)[0], 1.0, rtol=0, atol=1e-15)


def test_two_interval_partition_sums_to_one():
    M = interval_pair()
    pou = build_partition(M, [[0.0, 1.0]])
    P = np.random.default_rng(5).uniform(0, 1, (1, 50))
    np.testing.assert_allclose(pou.weights(P).sum(axis=0), 1.0, rtol=0, atol=1e-12)
    assert pou.sum_residual() <= 1e-12


def test_partition_weights_are_subordinate():
    M = catalog_manifold("disk")
    pou = build_partition(M)
    rng = np.random.default_rng(2)
    for c in M.charts:
        X = c.sample(300, rng)
        w = pou.weight_in_chart(c.id, X)
        assert np.all(w >= 0)
        lo, hi = c.lo(), c.hi()
        pad = 0.05 * (hi - lo)
        inner_lo, inner_hi = lo + pad, hi - pad
        if c.boundary:
            inner_lo[-1] = -np.inf
        outside = np.any((X < inner_lo[:, None]) | (X > inner_hi[:, None]), axis=0)
        assert np.all(w[outside] == 0.0)


def test_uncovered_support_point_is_reported():
    M = interval_pair()
    with pytest.raises(CoverageError, match="not covered") as info:
        build_partition(M, [[0.0, 1.0]], ["left"])
    assert info.value.point[0] > 0.6


def test_chart_coordinate_supports():
    M = catalog_manifold("annulus")
    sup = Support.in_chart("east", [[1.2, 1.8], [-0.5, 0.5]])
    P = M.chart("east").to_ambient(np.array([[1.5, 1.9], [0.0, 0.0]])).reshape(2, -1)
    np.testing.assert_array_equal(sup.contains(M, P), [True, False])


def test_halfplane_boundary_is_the_axis():
    M = catalog_manifold("halfplane")
    dM = boundary_manifold(M)
    assert dM.dim == 1 and dM.ambient_dim == 2
    for c in dM.charts:
        src = M.chart(c.id.split("|")[0])
        assert c.gamma == src.gamma * BOUNDARY_SIGN**2
        X = c.sample(20, np.random.default_rng(0))
        P = c.to_ambient(X).reshape(2, -1)
        np.testing.assert_array_equal(P[1], 0.0)
        np.testing.assert_array_equal(P[0], X[0])


def test_disk_boundary_is_the_unit_circle():
    M = catalog_manifold("disk")
    dM = boundary_manifold(M)
    assert len(dM.charts) == 4
    rng = np.random.default_rng(4)
    for c in dM.charts:
        P = c.to_ambient(c.sample(100, rng)).reshape(2, -1)
        np.testing.assert_allclose(np.hypot(P[0], P[1]), 1.0, atol=1e-14)
    # every angle is covered by some boundary chart
    t = np.linspace(-np.pi, np.pi, 721)
    P = np.stack([np.cos(t), np.sin(t)])
    covered = np.zeros(t.size, dtype=bool)
    for c in dM.charts:
        covered |= c.locate(P)[1]
    assert covered.all()
    assert orientation_check(dM).passed


def test_closed_manifolds_have_no_boundary():
    for name in ("s1", "s2", "annulus", "box2"):
        with pytest.raises(AtlasError, match="no boundary"):
            boundary_manifold(catalog_manifold(name))


def test_chart_validation():
    bad = {"dim": 1, "ambient_dim": 1, "charts": [{"id": "a", "image": [[1, 0]], "param": ["x1"], "coord": ["x1"]}]}
    with pytest.raises(AtlasError, match="empty image"):
        manifold_from_dict(bad)
    bad["charts"][0].update(image=[[0.5, 1]], boundary=True)
    with pytest.raises(AtlasError, match="boundary charts"):
        manifold_from_dict(bad)
