"""Trilinear (Q1) polynomials on axis-aligned hexahedral elements.

Vertex numbering is bit-coded: vertex ``v`` sits at local coordinates
``(v & 1, (v >> 1) & 1, (v >> 2) & 1)``, so vertex 0 is the element corner
with the smallest coordinates and vertex 7 the opposite corner.  Monomials
use the same bit code: monomial ``m`` is ``x^(m&1) * y^((m>>1)&1) * z^((m>>2)&1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VERTEX_BITS = np.array([(v & 1, (v >> 1) & 1, (v >> 2) & 1) for v in range(8)], dtype=np.int64)

# Monomial exponent triples share the vertex bit layout.
MONOMIAL_BITS = VERTEX_BITS

XY, XZ, YZ, XYZ = 3, 5, 6, 7


def shape_values(tloc):
    """Nodal basis values at local points ``tloc`` with shape (..., 3) in [0,1]^3.

    Returns an array of shape (..., 8).
    """
    t = np.asarray(tloc, dtype=float)
    factors = np.where(VERTEX_BITS.astype(bool), t[..., None, :], 1.0 - t[..., None, :])
    return factors.prod(axis=-1)


def shape_gradients(tloc, spacing):
    """Physical gradients of the nodal basis at local points.

    ``spacing`` is the per-axis element size; returns shape (..., 8, 3).
    """
    t = np.asarray(tloc, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    bits = VERTEX_BITS.astype(bool)
    factors = np.where(bits, t[..., None, :], 1.0 - t[..., None, :])
    sign = np.where(bits, 1.0, -1.0)
    out = np.empty(t.shape[:-1] + (8, 3), dtype=float)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        out[..., a] = sign[:, a] / spacing[a] * factors[..., b] * factors[..., c]
    return out


@dataclass
class TrilinearPoly:
    """A trilinear polynomial bound to one element, stored by nodal values.

    The dual monomial representation is available through
    :meth:`monomial_coefficients`; both views agree to roundoff by
    construction (round-trip is exercised in the test suite).
    """

    corner: np.ndarray
    spacing: np.ndarray
    nodal: np.ndarray

    def __post_init__(self):
        self.corner = np.asarray(self.corner, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        self.nodal = np.asarray(self.nodal, dtype=float)

    def vertices(self):
        return self.corner + VERTEX_BITS * self.spacing

    def local(self, points):
        return (np.asarray(points, dtype=float) - self.corner) / self.spacing

    def value(self, points):
        return shape_values(self.local(points)) @ self.nodal

    def gradient(self, points):
        grads = shape_gradients(self.local(points), self.spacing)
        return np.einsum("...vd,v->...d", grads, self.nodal)

    def monomial_coefficients(self):
        """Coefficients of {1, x, y, z, xy, xz, yz, xyz} in global coordinates.

        Conversion conditioning degrades like (|corner|/spacing)^3; fine for
        the unit-scale elements the tests use, avoid for production math.
        """
        return self.nodal @ _nodal_to_monomial(self.corner, self.spacing)

    @classmethod
    def from_monomials(cls, corner, spacing, coeffs):
        corner = np.asarray(corner, dtype=float)
        spacing = np.asarray(spacing, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        verts = corner + VERTEX_BITS * spacing
        powers = verts[:, None, :] ** MONOMIAL_BITS[None, :, :]
        nodal = powers.prod(axis=-1) @ coeffs
        return cls(corner, spacing, nodal)


def _nodal_to_monomial(corner, spacing):
    """(8, 8) matrix sending nodal values to global monomial coefficients."""
    conv = np.empty((8, 8), dtype=float)
    # Per axis, the two hat factors written as p + q * coordinate.
    p = np.empty((3, 2))
    q = np.empty((3, 2))
    for a in range(3):
        h, c = spacing[a], corner[a]
        p[a, 0], q[a, 0] = (c + h) / h, -1.0 / h
        p[a, 1], q[a, 1] = -c / h, 1.0 / h
    for v in range(8):
        vb = VERTEX_BITS[v]
        for m in range(8):
            mb = MONOMIAL_BITS[m]
            term = 1.0
            for a in range(3):
                term *= q[a, vb[a]] if mb[a] else p[a, vb[a]]
            conv[v, m] = term
    return conv


def affine_on_nodes(corner, spacing, normal, anchor):
    """Values of the affine map X -> (X - anchor) . normal at the 8 vertices."""
    verts = corner + VERTEX_BITS * spacing
    return (verts - anchor) @ normal
