from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gforms.value_space import (
    COMPLEX,
    REAL,
    LinearMap,
    SpaceMismatchError,
    ValueSpace,
    Vector,
    apply_linear_map,
    dual_functionals,
    forget_complex,
    identity_map,
    kron,
    kronecker_map,
    realify,
    scalar_space,
    swap_map,
    tensor_product_space,
    vector_from_functional_values,
)

R2 = ValueSpace("R2", REAL, 2)
R3 = ValueSpace("R3", REAL, 3)
C2 = ValueSpace("C2", COMPLEX, 2)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_kron_of_basis_coordinates():
    u = Vector(R2, [1, 2])
    v = Vector(R2, [3, 4])
    w = kron(u, v)
    assert w.space.dim == 4
    np.testing.assert_array_equal(w.components, [3, 4, 6, 8])


def test_swap_map_transposes_factors():
    R1 = scalar_space()
    u, v = Vector(R2, [1, 2]), Vector(R3, [3, 4, 5])
    sw = swap_map(R3, R2)
    assert sw(kron(v, u)) == kron(u, v)
    # a swap of R x R is the identity of R
    assert np.array_equal(swap_map(R1, R1).matrix, np.eye(1))


def test_user_map_swapping_coordinates():
    psi = LinearMap(R2, R2, [[0, 1], [1, 0]])
    out = apply_linear_map(psi, Vector(R2, [5, 7]))
    np.testing.assert_array_equal(out.components, [7, 5])


def test_linear_map_shape_and_field_checks():
    with pytest.raises(SpaceMismatchError):
        LinearMap(R2, R3, np.eye(2))
    with pytest.raises(SpaceMismatchError):
        LinearMap(R2, C2, np.eye(2))
    with pytest.raises(SpaceMismatchError):
        apply_linear_map(identity_map(R3), Vector(R2, [1, 2]))


def test_value_space_validation():
    with pytest.raises(ValueError):
        ValueSpace("bad", "quaternion", 2)
    with pytest.raises(ValueError):
        ValueSpace("bad", REAL, 0)
    with pytest.raises(ValueError):
        ValueSpace("bad", REAL, 2, dual_matrix=((1, 1), (1, 1)))
    with pytest.raises(SpaceMismatchError):
        Vector(R2, [1, 2, 3])


def test_realify_splits_parts():
    GR, re, im = realify(C2)
    assert GR.dim == 4 and GR.scalar == REAL
    v = Vector(C2, [1 + 2j, -3 + 0.5j])
    np.testing.assert_array_equal(re(v).components, [1, -3])
    np.testing.assert_array_equal(im(v).components, [2, 0.5])
    np.testing.assert_array_equal(forget_complex(C2)(v).components, [1, 2, -3, 0.5])
    assert not re.is_k_linear
    with pytest.raises(SpaceMismatchError):
        realify(R2)


def test_complex_real_matrix_matches_complex_action():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    psi = LinearMap(C2, C2, m)
    v = Vector(C2, rng.normal(size=2) + 1j * rng.normal(size=2))
    parts = psi.real_matrix @ forget_complex(C2)(v).components
    np.testing.assert_allclose(parts, forget_complex(C2)(psi(v)).components, atol=1e-14)


def test_dual_reconstruction_with_custom_family():
    V = ValueSpace("V", REAL, 2, ("a", "b"), ((1, 1), (0, 1)))
    b = vector_from_functional_values(V, [3.0, 1.0])
    np.testing.assert_allclose(b.components, [2.0, 1.0])
    for psi, val in zip(dual_functionals(V), [3.0, 1.0]):
        assert psi(b).components[0] == pytest.approx(val, abs=1e-15)


def test_dual_basis_reconstruction_is_verbatim():
    vals = [1.5, -2.0, 0.25]
    np.testing.assert_array_equal(vector_from_functional_values(R3, vals).components, vals)


def test_tensor_product_rejects_mixed_fields():
    with pytest.raises(SpaceMismatchError):
        tensor_product_space(R2, C2)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=6, max_size=6),
       st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=3, max_size=3))
def test_kronecker_map_acts_factorwise(a, b, u, v):
    psi = LinearMap(R2, R2, np.reshape(a, (2, 2)))
    phi = LinearMap(R3, R2, np.reshape(b, (2, 3)))
    U, W = Vector(R2, u), Vector(R3, v)
    lhs = kronecker_map(psi, phi)(kron(U, W))
    rhs = kron(psi(U), phi(W))
    np.testing.assert_allclose(lhs.components, rhs.components, rtol=1e-12, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4),
       st.lists(finite, min_size=2, max_size=2))
def test_composition_matches_sequential_application(a, b, u):
    psi = LinearMap(R2, R2, np.reshape(a, (2, 2)))
    phi = LinearMap(R2, R2, np.reshape(b, (2, 2)))
    U = Vector(R2, u)
    np.testing.assert_allclose((psi @ phi)(U).components, psi(phi(U)).components, rtol=1e-12, atol=1e-9)
