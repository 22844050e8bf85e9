from __future__ import annotations

import numpy as np
import pytest

from gforms.chart_atlas import Support, box, catalog_manifold, manifold_from_dict
from gforms.exprs import diff, evaluate, parse
from gforms.forms import (
    add_forms,
    as_tensor,
    exterior_derivative,
    form,
    from_ambient,
    increasing_indices,
    max_coefficient,
    max_difference,
    overlap_residual,
    permutation_sign,
    pullback_form,
    pushforward_form,
    sample_points,
    scale_form,
    shuffle_sign,
    wedge,
)
from gforms.tensor_fields import INTEGRABLE, FieldError, SmoothMap, evaluate_field, identity_map
from gforms.value_space import (
    COMPLEX,
    REAL,
    LinearMap,
    SpaceMismatchError,
    ValueSpace,
    dual_functionals,
    kronecker_map,
    scalar_space,
    swap_map,
)

R = scalar_space()
R2 = ValueSpace("R2", REAL, 2)
C1 = scalar_space(COMPLEX)
BOX2 = catalog_manifold("box2")
BOX3 = catalog_manifold("box3")


def pts(M, n=100, seed=0):
    return sample_points(M, M.chart_ids, n, np.random.default_rng(seed))


def everywhere(M, degree, space, table):
    return form(M, degree, space, {c: table for c in M.chart_ids})


def test_index_helpers():
    assert increasing_indices(3, 2) == [(1, 2), (1, 3), (2, 3)]
    assert permutation_sign((2, 1, 3)) == -1
    assert permutation_sign((2, 3, 1)) == 1
    assert shuffle_sign((2,), (1,)) == -1
    assert shuffle_sign((1, 3), (2,)) == -1
    assert shuffle_sign((1,), (1,)) == 0


def test_form_validation():
    with pytest.raises(FieldError, match="increasing"):
        form(BOX2, 2, R, {"whole": {(2, 1): "1"}})
    with pytest.raises(FieldError, match="out of range"):
        form(BOX2, 1, R, {"whole": {(3,): "1"}})
    with pytest.raises(FieldError, match="support"):
        form(BOX2, 1, R, {"whole": {(1,): "1"}}, INTEGRABLE)


def test_basis_wedges():
    dx1 = everywhere(BOX2, 1, R, {(1,): "1"})
    dx2 = everywhere(BOX2, 1, R, {(2,): "1"})
    X = pts(BOX2, 5)
    assert np.all(wedge(dx1, dx2).values("whole", X["whole"]) == 1.0)
    assert np.all(wedge(dx2, dx1).values("whole", X["whole"]) == -1.0)
    assert wedge(dx1, dx1).is_zero()


def test_vector_valued_wedge_pairs_values():
    f = ["x1", "x2^2"]
    g = ["sin(x1)", "1", "x1*x2"]
    R3 = ValueSpace("R3", REAL, 3)
    a = everywhere(BOX2, 1, R2, {(1,): f})
    b = everywhere(BOX2, 1, R3, {(2,): g})
    w = wedge(a, b)
    assert w.space.dim == 6
    X = pts(BOX2, 20)["low"]
    fv = np.array([evaluate(parse(t, 2), X) for t in f])
    gv = np.array([evaluate(parse(t, 2), X) for t in g])
    expect = np.einsum("in,jn->ijn", fv, gv).reshape(6, -1)
    np.testing.assert_allclose(w.values("low", X)[0], expect, atol=1e-14)


def test_wedge_above_top_degree_is_zero():
    a = everywhere(BOX2, 2, R, {(1, 2): "x1"})
    b = everywhere(BOX2, 1, R, {(1,): "1"})
    w = wedge(a, b)
    assert w.degree == 3 and w.is_zero()


def test_wedge_integrability_rules():
    sup = Support.ambient([[-1, 1], [-1, 1]])
    i1 = form(BOX2, 1, R, {"whole": {(1,): "bump(1; 0, 0)"}}, INTEGRABLE, sup)
    s1 = form(BOX2, 1, R, {"whole": {(2,): "x1"}})
    assert wedge(i1, s1, 1).kind == INTEGRABLE
    assert wedge(s1, i1, 2).kind == INTEGRABLE
    with pytest.raises(FieldError, match="variant 1"):
        wedge(s1, i1, 1)
    with pytest.raises(FieldError, match="variant 2"):
        wedge(i1, s1, 2)
    with pytest.raises(FieldError, match="two integrable"):
        wedge(i1, i1)
    with pytest.raises(FieldError, match="different manifolds"):
        wedge(s1, everywhere(box(2), 1, R, {(1,): "1"}))


def test_d_of_coordinate_times_dx2():
    th = everywhere(BOX2, 1, R, {(2,): "x1"})
    d = exterior_derivative(th)
    assert d.degree == 2
    assert np.all(d.values("whole", pts(BOX2)["whole"]) == 1.0)


def test_d_of_constant_is_zero():
    th = everywhere(BOX3, 1, R2, {(1,): ["2", "-1"], (3,): ["0.5", "3"]})
    assert exterior_derivative(th).is_zero()


def test_d_of_rotation_form():
    th = everywhere(BOX2, 1, R, {(1,): "-x2", (2,): "x1"})
    np.testing.assert_array_equal(exterior_derivative(th).values("high", pts(BOX2)["high"]), 2.0)


def test_d_rejects_integrable_forms():
    sup = Support.ambient([[-1, 1], [-1, 1]])
    with pytest.raises(FieldError, match="smooth"):
        exterior_derivative(form(BOX2, 1, R, {"whole": {(1,): "bump(1; 0, 0)"}}, INTEGRABLE, sup))


SMOOTH_CORPUS = [
    (BOX2, 0, R, {(): "exp(x1)*sin(x2)"}),
    (BOX2, 1, R2, {(1,): ["x1*x2^2", "cos(x1 + x2)"], (2,): ["bump(1.5; 0, 0)", "x1^3"]}),
    (BOX3, 1, C1, {(1,): [["x2*x3", "sin(x1)"]], (3,): [["exp(x2)", "x1*x2*x3"]]}),
    (BOX3, 2, R, {(1, 2): "x3^2*x1", (1, 3): "sin(x2*x3)", (2, 3): "exp(-x1^2)"}),
]


@pytest.mark.parametrize("M, k, space, table", SMOOTH_CORPUS)
def test_dd_is_zero(M, k, space, table):
    th = everywhere(M, k, space, table)
    assert max_coefficient(exterior_derivative(exterior_derivative(th)), pts(M)) <= 1e-12


@pytest.mark.parametrize("name", ["disk", "s2"])
def test_dd_is_zero_on_curved_charts(name):
    M = catalog_manifold(name)
    amb = {(1,): "x2*exp(x1)", (2,): "sin(x1*x2)"} if M.ambient_dim == 2 else {(1,): "x3", (2,): "x1*x2", (3,): "x3^2"}
    th = from_ambient(M, 1, R, amb)
    assert max_coefficient(exterior_derivative(exterior_derivative(th)), pts(M)) <= 1e-12


@pytest.mark.parametrize("k", [0, 1, 2])
def test_leibniz_rule(k):
    omega_tables = {0: {(): "x1*x3 + 1"}, 1: {(2,): "sin(x1)", (3,): "x2"}, 2: {(1, 3): "exp(x2)"}}
    omega = everywhere(BOX3, k, R, omega_tables[k])
    eta = everywhere(BOX3, 1, R2, {(1,): ["x2*x3", "x1^2"], (2,): ["cos(x3)", "x1*x2"]})
    lhs = exterior_derivative(wedge(omega, eta))
    rhs = add_forms(
        wedge(exterior_derivative(omega), eta),
        scale_form((-1.0) ** k, wedge(omega, exterior_derivative(eta))),
    )
    assert max_difference(lhs, rhs, pts(BOX3)) <= 1e-10


def test_d_is_linear():
    a = everywhere(BOX2, 1, R, {(1,): "x1*x2", (2,): "sin(x1)"})
    b = everywhere(BOX2, 1, R, {(1,): "exp(x2)", (2,): "x2^3"})
    lhs = exterior_derivative(add_forms(scale_form(2.5, a), scale_form(-3.0, b)))
    rhs = add_forms(scale_form(2.5, exterior_derivative(a)), scale_form(-3.0, exterior_derivative(b)))
    assert max_difference(lhs, rhs, pts(BOX2)) <= 1e-12


def test_pullback_identity():
    th = everywhere(BOX2, 1, R2, {(1,): ["x1", "x2"], (2,): ["x1*x2", "1"]})
    assert max_difference(pullback_form(identity_map(BOX2), th), th, pts(BOX2)) == 0.0


def test_pullback_along_line_inclusion():
    L = box(1)
    th = everywhere(BOX2, 1, R, {(1,): "x1", (2,): "x2"})
    F = SmoothMap(L, BOX2, {"whole": ("whole", (parse("x1", 1), parse("0", 1)))})
    out = pullback_form(F, th)
    X = np.linspace(-1.5, 1.5, 11)[None, :]
    np.testing.assert_allclose(out.values("whole", X)[0, 0], X[0])


def test_polar_pullback_of_area_form():
    P = manifold_from_dict(
        {"dim": 2, "ambient_dim": 2, "charts": [{"id": "rt", "image": [[0.5, 1.5], [-1, 1]], "param": ["x1", "x2"], "coord": ["x1", "x2"]}]}
    )
    F = SmoothMap(P, BOX2, {"rt": ("whole", (parse("x1*cos(x2)", 2), parse("x1*sin(x2)", 2)))})
    area = everywhere(BOX2, 2, R, {(1, 2): "1"})
    out = pullback_form(F, area)
    X = pts(P, 30)["rt"]
    np.testing.assert_allclose(out.values("rt", X)[0, 0], X[0], atol=1e-14)


def test_d_commutes_with_pullback():
    F = SmoothMap(BOX2, BOX3, {c: ("whole", (parse("x1*x2", 2), parse("sin(x1)", 2), parse("x2^2 - x1", 2))) for c in BOX2.chart_ids})
    th = everywhere(BOX3, 1, R2, {(1,): ["x3*x2", "exp(x1)"], (2,): ["x1", "x3^2"], (3,): ["sin(x2)", "1"]})
    lhs = exterior_derivative(pullback_form(F, th))
    rhs = pullback_form(F, exterior_derivative(th))
    assert max_difference(lhs, rhs, pts(BOX2)) <= 1e-10


def test_pushforward_identity_and_functional():
    th = everywhere(BOX2, 1, R2, {(1,): ["x1", "x2"], (2,): ["x1*x2", "1"]})
    assert max_difference(pushforward_form(LinearMap(R2, R2, np.eye(2)), th), th, pts(BOX2)) == 0.0
    e2 = dual_functionals(R2)[1]
    s = pushforward_form(e2, th)
    X = pts(BOX2)["whole"]
    np.testing.assert_array_equal(s.values("whole", X)[:, 0], th.values("whole", X)[:, 1])
    with pytest.raises(SpaceMismatchError):
        pushforward_form(e2, everywhere(BOX2, 1, R, {(1,): "1"}))


def test_pushforward_commutes_with_d():
    rng = np.random.default_rng(4)
    th = everywhere(BOX3, 1, C1, {(1,): [["x2*x3", "sin(x1)"]], (2,): [["exp(x3)", "x1"]]})
    psi = LinearMap(C1, ValueSpace("C2", COMPLEX, 2), rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)))
    lhs = pushforward_form(psi, exterior_derivative(th))
    rhs = exterior_derivative(pushforward_form(psi, th))
    assert max_difference(lhs, rhs, pts(BOX3)) <= 1e-12


@pytest.mark.parametrize("k, l", [(1, 1), (1, 2), (0, 2), (2, 1)])
def test_graded_commutativity_through_swap(k, l):
    tables = {
        0: {(): ["x1", "1"]},
        1: {(1,): ["x2", "x3"], (3,): ["1", "x1*x2"]},
        2: {(1, 2): ["x3", "2"], (2, 3): ["x1", "x2"]},
    }
    R3 = ValueSpace("R3", REAL, 3)
    theta = everywhere(BOX3, k, R2, tables[k])
    eps = everywhere(BOX3, l, R3, {I: v + ["x1 - x2"] for I, v in tables[l].items()})
    lhs = wedge(theta, eps, 1)
    rhs = scale_form((-1.0) ** (k * l), pushforward_form(swap_map(R3, R2), wedge(eps, theta, 2)))
    assert max_difference(lhs, rhs, pts(BOX3)) <= 1e-14


def test_functionals_commute_with_wedge():
    theta = everywhere(BOX2, 1, R2, {(1,): ["x1", "x2^2"], (2,): ["1", "sin(x1)"]})
    eps = everywhere(BOX2, 1, R2, {(2,): ["exp(x1)", "x1*x2"], (1,): ["x2", "3"]})
    for psi in dual_functionals(R2):
        for phi in dual_functionals(R2):
            lhs = pushforward_form(kronecker_map(psi, phi), wedge(theta, eps))
            rhs = wedge(pushforward_form(psi, theta), pushforward_form(phi, eps))
            assert max_difference(lhs, rhs, pts(BOX2)) <= 1e-12


def test_differential_of_a_function_is_directional_derivative():
    f = "sin(x1)*x2 + x1^2"
    th = everywhere(BOX2, 0, R, {(): f})
    dT = as_tensor(exterior_derivative(th))
    rng = np.random.default_rng(8)
    for _ in range(10):
        x = rng.uniform(-1.5, 1.5, 2)
        X = rng.normal(size=2)
        got = evaluate_field(dT, "whole", x, vectors=[X]).components[0]
        e = parse(f, 2)
        expect = sum(X[i] * evaluate(diff(e, i + 1), x) for i in range(2))
        assert got == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("name", ["disk", "annulus", "s2", "s1"])
def test_ambient_forms_are_chart_compatible(name):
    M = catalog_manifold(name)
    if M.ambient_dim == 2:
        amb = {(1,): "x2*exp(x1)", (2,): "x1^2"}
    else:
        amb = {(1,): "x3", (2,): "x1*x2", (3,): "x3^2"}
    th = from_ambient(M, 1, R, amb)
    assert overlap_residual(th) <= 1e-8
    assert overlap_residual(exterior_derivative(th)) <= 1e-8


def test_broken_form_is_detected():
    M = catalog_manifold("annulus")
    th = form(M, 1, R, {c: {(2,): "x2"} for c in M.chart_ids})
    assert overlap_residual(th) > 0.5
