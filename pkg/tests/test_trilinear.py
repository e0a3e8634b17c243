"""Trilinear basis: nodal/monomial representations must agree everywhere."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ife3d.trilinear import (
    MONOMIAL_BITS,
    VERTEX_BITS,
    TrilinearPoly,
    affine_on_nodes,
    shape_gradients,
    shape_values,
)

RNG = np.random.default_rng(7)


def monomial_eval(points, coeffs):
    """Direct evaluation of sum_m c_m x^(m&1) y^((m>>1)&1) z^((m>>2)&1)."""
    points = np.atleast_2d(points)
    powers = points[:, None, :] ** MONOMIAL_BITS[None, :, :]
    return powers.prod(axis=-1) @ coeffs


def test_vertex_bit_layout():
    assert VERTEX_BITS.shape == (8, 3)
    for v in range(8):
        assert tuple(VERTEX_BITS[v]) == (v & 1, (v >> 1) & 1, (v >> 2) & 1)


def test_shape_values_nodal_delta():
    vals = shape_values(VERTEX_BITS.astype(float))
    assert np.allclose(vals, np.eye(8), atol=1e-15)


def test_shape_values_partition_of_unity():
    pts = RNG.random((50, 3))
    assert np.allclose(shape_values(pts).sum(axis=-1), 1.0, atol=1e-14)


def test_shape_gradients_sum_to_zero():
    pts = RNG.random((50, 3))
    grads = shape_gradients(pts, np.array([0.1, 0.2, 0.3]))
    assert np.allclose(grads.sum(axis=-2), 0.0, atol=1e-13)


def test_shape_gradients_match_finite_differences():
    spacing = np.array([0.2, 0.1, 0.4])
    pts = 0.1 + 0.8 * RNG.random((20, 3))
    grads = shape_gradients(pts, spacing)
    step = 1e-6
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        # local step translates to physical step*spacing[a]
        fd = (shape_values(pts + e) - shape_values(pts - e)) / (
            2 * step * spacing[a]
        )
        assert np.allclose(grads[..., a], fd, atol=1e-7)


def test_nodal_values_round_trip():
    corner = np.array([-0.3, 0.1, 0.5])
    spacing = np.array([0.25, 0.5, 0.125])
    nodal = RNG.standard_normal(8)
    poly = TrilinearPoly(corner, spacing, nodal)
    assert np.allclose(poly.value(poly.vertices()), nodal, atol=1e-13)


def test_monomial_round_trip():
    corner = np.array([0.2, -0.4, 0.0])
    spacing = np.array([0.5, 0.25, 0.75])
    nodal = RNG.standard_normal(8)
    poly = TrilinearPoly(corner, spacing, nodal)
    coeffs = poly.monomial_coefficients()
    back = TrilinearPoly.from_monomials(corner, spacing, coeffs)
    pts = corner + spacing * RNG.random((40, 3))
    assert np.allclose(poly.value(pts), back.value(pts), atol=1e-12)
    assert np.allclose(poly.value(pts), monomial_eval(pts, coeffs), atol=1e-12)


def test_monomial_representation_is_exact_for_trilinear_fields():
    corner = np.array([-1.0, -1.0, -1.0])
    spacing = np.array([0.4, 0.4, 0.4])
    coeffs = RNG.standard_normal(8)
    poly = TrilinearPoly.from_monomials(corner, spacing, coeffs)
    pts = corner + spacing * RNG.random((60, 3))
    assert np.allclose(poly.value(pts), monomial_eval(pts, coeffs), atol=1e-12)
    # gradient against the analytic monomial derivative
    step = 1e-7
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        fd = (monomial_eval(pts + e, coeffs) - monomial_eval(pts - e, coeffs)) / (
            2 * step
        )
        assert np.allclose(poly.gradient(pts)[:, a], fd, atol=1e-5)


@given(
    st.lists(
        st.floats(min_value=0.0, max_value=1.0), min_size=3, max_size=3
    )
)
@settings(max_examples=200, deadline=None)
def test_partition_of_unity_property(tloc):
    vals = shape_values(np.asarray(tloc))
    assert abs(vals.sum() - 1.0) < 1e-12
    assert (vals > -1e-15).all()


def test_affine_on_nodes_matches_direct_evaluation():
    corner = np.array([0.1, 0.2, -0.3])
    spacing = np.array([0.3, 0.2, 0.1])
    normal = np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)
    anchor = np.array([0.15, 0.25, -0.25])
    vals = affine_on_nodes(corner, spacing, normal, anchor)
    verts = corner + VERTEX_BITS * spacing
    assert np.allclose(vals, (verts - anchor) @ normal, atol=1e-15)


def test_affine_field_interpolates_exactly():
    """Trilinear interpolation reproduces affine functions without error."""
    corner = np.array([0.0, 0.0, 0.0])
    spacing = np.array([1.0, 1.0, 1.0])
    normal = np.array([0.3, -0.7, 0.2])
    anchor = np.array([0.5, 0.5, 0.5])
    nodal = affine_on_nodes(corner, spacing, normal, anchor)
    poly = TrilinearPoly(corner, spacing, nodal)
    pts = RNG.random((30, 3))
    assert np.allclose(poly.value(pts), (pts - anchor) @ normal, atol=1e-13)
    assert np.allclose(poly.gradient(pts), normal, atol=1e-13)
