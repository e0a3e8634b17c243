"""Immersed trilinear shape functions on cut elements.

On a cut element the eight nodal functions are piecewise trilinear with
respect to the fitted plane: a single trilinear polynomial on the side of
the larger coefficient (the base side), plus a multiple of the plane's
affine offset L on the other side.  The coefficient matrix comes from a
rank-one update of the identity, so the whole local basis costs one outer
product; the denominator 1 + mu*gamma.delta >= 1 is what makes the
construction unisolvent for every coefficient pair and every admissible
cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError
from .geometry import InterfaceElementData
from .trilinear import affine_on_nodes, shape_gradients, shape_values

_DENOMINATOR_FLOOR = 0.5


def _side_vertices(mask, side):
    """Vertex ids on the geometric side ``side`` (-1 minus, +1 plus)."""
    bits = np.array([(mask >> v) & 1 for v in range(8)], dtype=bool)
    return np.flatnonzero(bits if side < 0 else ~bits)


def gamma_delta(data: InterfaceElementData, beta_minus, beta_plus):
    """Rank-one update ingredients for the element's IFE basis.

    gamma holds the plane-normal derivatives of the base-side nodal
    trilinears at the plane triangle's centroid, restricted to the
    correction-side vertices; delta holds the plane offsets L of those
    vertices.  Their inner product controls unisolvence.
    """
    if beta_minus <= 0 or beta_plus <= 0:
        raise ValueError("diffusion coefficients must be positive")
    base_side = -1 if beta_minus >= beta_plus else 1
    mu = max(beta_minus, beta_plus) / min(beta_minus, beta_plus) - 1.0
    correction_idx = _side_vertices(data.mask, -base_side)

    centroid = data.triangle.mean(axis=0)
    tloc = (centroid - data.corner) / data.spacing
    grads = shape_gradients(tloc, data.spacing)  # (8,3)
    g = grads @ data.normal  # (8,)

    node_offsets = affine_on_nodes(data.corner, data.spacing, data.normal, data.anchor)
    delta_masked = np.zeros(8)
    delta_masked[correction_idx] = node_offsets[correction_idx]

    gamma = g[correction_idx]
    delta = node_offsets[correction_idx]
    gdot = float(gamma @ delta)
    return {
        "g": g,
        "gamma": gamma,
        "delta": delta,
        "delta_masked": delta_masked,
        "gamma_dot_delta": gdot,
        "mu": mu,
        "denominator": 1.0 + mu * gdot,
        "base_side": base_side,
        "correction_idx": correction_idx,
        "node_offsets": node_offsets,
        "centroid": centroid,
    }


@dataclass
class LocalIFEBasis:
    """The eight IFE shape functions of one cut element, ready to evaluate."""

    element_id: int
    corner: np.ndarray
    spacing: np.ndarray
    normal: np.ndarray
    anchor: np.ndarray
    base_side: int              # geometric sign carrying the base polynomial
    coeffs: np.ndarray          # (8,8): row i = nodal coeffs of base poly of shape i
    c0: np.ndarray              # (8,): L-coefficient on the correction side
    gamma_dot_delta: float
    denominator: float
    beta_minus: float
    beta_plus: float

    def plane_offsets(self, points):
        return (np.asarray(points) - self.anchor) @ self.normal

    def values(self, points, sides):
        """Shape-function values; ``sides`` gives each point's region sign."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        sides = np.broadcast_to(np.asarray(sides), points.shape[:-1])
        tloc = (points - self.corner) / self.spacing
        psi = shape_values(tloc)  # (m,8)
        vals = psi @ self.coeffs.T
        corr = sides != self.base_side
        if corr.any():
            L = self.plane_offsets(points[corr])
            vals[corr] += L[:, None] * self.c0[None, :]
        return vals

    def gradients(self, points, sides):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        sides = np.broadcast_to(np.asarray(sides), points.shape[:-1])
        tloc = (points - self.corner) / self.spacing
        gpsi = shape_gradients(tloc, self.spacing)  # (m,8,3)
        out = np.einsum("mjd,ij->mid", gpsi, self.coeffs)
        corr = sides != self.base_side
        if corr.any():
            out[corr] += self.c0[None, :, None] * self.normal[None, None, :]
        return out


def build_shape_functions(
    data: InterfaceElementData, beta_minus, beta_plus
) -> LocalIFEBasis:
    gd = gamma_delta(data, beta_minus, beta_plus)
    den = gd["denominator"]
    if den < _DENOMINATOR_FLOOR:
        raise DegenerateGeometryError(
            f"element {data.element_id}: IFE denominator {den:.3e} lost positivity"
        )
    mu = gd["mu"]
    g = gd["g"]
    coeffs = np.eye(8) - (mu / den) * np.outer(g, gd["delta_masked"])
    c0 = mu * g / den
    return LocalIFEBasis(
        element_id=data.element_id,
        corner=data.corner,
        spacing=data.spacing,
        normal=data.normal,
        anchor=data.anchor,
        base_side=gd["base_side"],
        coeffs=coeffs,
        c0=c0,
        gamma_dot_delta=gd["gamma_dot_delta"],
        denominator=den,
        beta_minus=float(beta_minus),
        beta_plus=float(beta_plus),
    )


def evaluate_ife(basis: LocalIFEBasis, points, sides, *, gradient=False):
    """Values (and optionally gradients) of the eight shape functions."""
    vals = basis.values(points, sides)
    if not gradient:
        return vals
    return vals, basis.gradients(points, sides)


def extension_apply(
    data: InterfaceElementData,
    beta_minus,
    beta_plus,
    nodal,
    direction="minus_to_plus",
):
    """Flux-matching extension of a trilinear across the fitted plane.

    Given the nodal coefficients of the polynomial on one side, returns the
    nodal coefficients of the matching polynomial on the other side: the
    input plus a multiple of the plane offset L chosen so the normal flux
    beta * dP/dn agrees at the plane triangle's centroid.
    """
    nodal = np.asarray(nodal, dtype=float)
    if direction == "minus_to_plus":
        factor = beta_minus / beta_plus - 1.0
    elif direction == "plus_to_minus":
        factor = beta_plus / beta_minus - 1.0
    else:
        raise ValueError(f"unknown direction {direction!r}")
    centroid = data.triangle.mean(axis=0)
    tloc = (centroid - data.corner) / data.spacing
    grads = shape_gradients(tloc, data.spacing)
    dn = float(nodal @ (grads @ data.normal))
    L_nodes = affine_on_nodes(data.corner, data.spacing, data.normal, data.anchor)
    return nodal + factor * dn * L_nodes


def lagrange_interpolate(mesh, classification, exact):
    """Nodal coefficients of the IFE interpolant of a piecewise field.

    ``exact(points, signs)`` must evaluate the field on the side indicated
    by each sign; nodes are assigned the side of their level-set tag.
    """
    coeffs = np.empty(mesh.num_nodes)
    chunk = 200_000
    for start in range(0, mesh.num_nodes, chunk):
        ids = np.arange(start, min(start + chunk, mesh.num_nodes))
        pts = mesh.node_coords(ids)
        signs = classification.node_sign[ids]
        coeffs[ids] = exact(pts, signs)
    return coeffs
