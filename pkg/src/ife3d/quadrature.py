"""Quadrature rules and cut-cell decomposition.

Simplex rules are conical products (Gauss-Jacobi in the collapsed
coordinates), generated from scipy's Jacobi nodes rather than transcribed
tables: order n gives n^3 strictly positive points exact through total
degree 2n-1 on the tetrahedron, n^2 on the triangle.

Cut elements are split into tetrahedra per side by walking each cube face's
corner cycle (inserting edge cut points), fanning the cut polygon around
its centroid, and coning all boundary facets from an apex chosen so every
tet keeps nonnegative orientation.  Exact volume conservation against the
element box is asserted rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .exceptions import DecompositionError
from .geometry import InterfaceElementData
from .mesh import LOCAL_FACES
from .trilinear import VERTEX_BITS

DEFAULT_ORDER = 3
_VOLUME_REL_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-domain points and weights."""

    points: np.ndarray
    weights: np.ndarray


def _jacobi01(n, alpha):
    """Nodes/weights for int_0^1 (1-t)^alpha f(t) dt."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0)


@lru_cache(maxsize=None)
def tetrahedron_rule(n=DEFAULT_ORDER):
    """Conical product rule on the unit tetrahedron {a,b,c>=0, a+b+c<=1}."""
    t1, w1 = _jacobi01(n, 2.0)
    t2, w2 = _jacobi01(n, 1.0)
    g = gauss01(n)
    t3, w3 = g.points, g.weights
    a = t1[:, None, None] + 0.0 * t2[None, :, None] + 0.0 * t3[None, None, :]
    b = t2[None, :, None] * (1 - t1[:, None, None]) + 0.0 * t3[None, None, :]
    c = (
        t3[None, None, :]
        * (1 - t1[:, None, None])
        * (1 - t2[None, :, None])
    )
    w = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
    pts = np.stack([a.ravel(), b.ravel(), c.ravel()], axis=-1)
    return QuadratureRule(pts, w.ravel())


@lru_cache(maxsize=None)
def triangle_rule(n=DEFAULT_ORDER):
    """Conical product rule on the unit triangle {a,b>=0, a+b<=1}."""
    t1, w1 = _jacobi01(n, 1.0)
    g = gauss01(n)
    t2, w2 = g.points, g.weights
    a = t1[:, None] + 0.0 * t2[None, :]
    b = t2[None, :] * (1 - t1[:, None])
    w = w1[:, None] * w2[None, :]
    return QuadratureRule(np.stack([a.ravel(), b.ravel()], axis=-1), w.ravel())


@lru_cache(maxsize=None)
def box_rule(n=DEFAULT_ORDER):
    """Tensor Gauss rule on the unit cube."""
    g = gauss01(n)
    x, w = g.points, g.weights
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    wts = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    return QuadratureRule(pts, wts)


def map_tets(vertices, rule=None):
    """Physical points/weights for a batch of tets (m,4,3)."""
    rule = rule or tetrahedron_rule()
    vertices = np.asarray(vertices, dtype=float)
    edges = vertices[:, 1:] - vertices[:, :1]  # (m,3,3)
    pts = vertices[:, None, 0, :] + np.einsum("qc,mcd->mqd", rule.points, edges)
    dets = np.abs(np.linalg.det(edges))
    wts = rule.weights[None, :] * dets[:, None]
    return pts, wts


def map_triangles(vertices, rule=None):
    """Physical points/weights for a batch of 3-D triangles (m,3,3)."""
    rule = rule or triangle_rule()
    vertices = np.asarray(vertices, dtype=float)
    e1 = vertices[:, 1] - vertices[:, 0]
    e2 = vertices[:, 2] - vertices[:, 0]
    pts = (
        vertices[:, None, 0, :]
        + rule.points[None, :, :1] * e1[:, None, :]
        + rule.points[None, :, 1:] * e2[:, None, :]
    )
    jac = np.linalg.norm(np.cross(e1, e2), axis=-1)  # twice the area
    wts = rule.weights[None, :] * jac[:, None]
    return pts, wts


@dataclass
class CutDecomposition:
    """Signed tetrahedralization of a cut element."""

    element_id: int
    tet_vertices: np.ndarray  # (m,4,3)
    tet_sides: np.ndarray     # (m,) -1/+1
    volume_minus: float
    volume_plus: float

    def quadrature(self, rule=None):
        """Concatenated physical quadrature with per-point side tags."""
        pts, wts = map_tets(self.tet_vertices, rule)
        q = pts.shape[1]
        sides = np.repeat(self.tet_sides, q)
        return pts.reshape(-1, 3), wts.ravel(), sides


def _polygon_fan(poly):
    """Fan triangulation from the first polygon vertex."""
    out = []
    for i in range(1, len(poly) - 1):
        out.append((poly[0], poly[i], poly[i + 1]))
    return out


def _facet_triangles_for_side(data: InterfaceElementData, side, cut_normal_ref):
    """Outward-oriented boundary triangles of the side's region."""
    corner = data.corner
    spacing = data.spacing
    verts = corner + VERTEX_BITS * spacing
    sign_of = np.where(
        [(data.mask >> v) & 1 for v in range(8)], -1, 1
    )
    point_by_edge = {int(e): data.cut_points[i] for i, e in enumerate(data.cut_edges)}

    tris = []
    for axis, fside, corners, edges in LOCAL_FACES:
        # LOCAL_FACES cycles are right-handed about +axis; the outward
        # normal flips on the low side, so walk that cycle reversed.
        if fside == 0:
            cyc_c = [corners[0], corners[3], corners[2], corners[1]]
            cyc_e = [edges[3], edges[2], edges[1], edges[0]]
        else:
            cyc_c = list(corners)
            cyc_e = list(edges)
        poly = []
        for i in range(4):
            v = cyc_c[i]
            if sign_of[v] == side:
                poly.append(verts[v])
            e = cyc_e[i]
            if e in point_by_edge:
                poly.append(point_by_edge[e])
        if len(poly) >= 3:
            tris.extend(_polygon_fan(poly))

    # Cut polygon, oriented outward from the minus region.
    cyc = list(data.cycle_points)
    newell = np.zeros(3)
    for i in range(len(cyc)):
        newell += np.cross(cyc[i], cyc[(i + 1) % len(cyc)])
    if newell @ cut_normal_ref < 0:
        cyc = cyc[::-1]
    if side == 1:
        cyc = cyc[::-1]
    if len(cyc) == 3:
        tris.append(tuple(cyc))
    else:
        center = np.mean(cyc, axis=0)
        for i in range(len(cyc)):
            tris.append((center, cyc[i], cyc[(i + 1) % len(cyc)]))
    return tris


def _cone_from_apex(tris, apex, vol_tol):
    verts = []
    vols = []
    for t0, t1, t2 in tris:
        v = -np.linalg.det(np.stack([t1 - t0, t2 - t0, apex - t0])) / 6.0
        if v < -vol_tol:
            return None
        if v > vol_tol:
            verts.append((apex, t0, t1, t2))
            vols.append(v)
    return verts, vols


def decompose_cut_element(data: InterfaceElementData) -> CutDecomposition:
    corner = np.asarray(data.corner, dtype=float)
    spacing = np.asarray(data.spacing, dtype=float)
    verts = corner + VERTEX_BITS * spacing
    sign_of = np.where([(data.mask >> v) & 1 for v in range(8)], -1, 1)
    c_minus = verts[sign_of < 0].mean(axis=0)
    c_plus = verts[sign_of > 0].mean(axis=0)
    cut_ref = c_plus - c_minus
    cell_volume = float(np.prod(spacing))
    vol_tol = 1e-14 * cell_volume

    all_verts = []
    all_sides = []
    volumes = {}
    for side in (-1, 1):
        tris = _facet_triangles_for_side(data, side, cut_ref)
        own = verts[sign_of == side]
        facet_pts = np.unique(
            np.vstack([np.stack(t) for t in tris]).round(decimals=14), axis=0
        )
        candidates = [own.mean(axis=0), facet_pts.mean(axis=0)]
        candidates += [v for v in own]
        candidates.append(corner + 0.5 * spacing)
        result = None
        for apex in candidates:
            result = _cone_from_apex(tris, apex, vol_tol)
            if result is not None:
                break
        if result is None:
            raise DecompositionError(
                f"element {data.element_id}: no star point found for side {side}"
            )
        tets, vols = result
        volumes[side] = float(np.sum(vols)) if vols else 0.0
        for t in tets:
            all_verts.append(np.stack(t))
            all_sides.append(side)

    total = volumes[-1] + volumes[1]
    if abs(total - cell_volume) > _VOLUME_REL_TOL * cell_volume:
        raise DecompositionError(
            f"element {data.element_id}: decomposed volume {total!r} does not "
            f"match cell volume {cell_volume!r}"
        )
    return CutDecomposition(
        element_id=data.element_id,
        tet_vertices=np.stack(all_verts),
        tet_sides=np.asarray(all_sides, dtype=np.int8),
        volume_minus=volumes[-1],
        volume_plus=volumes[1],
    )


def decompose_face(corners_xyz, corner_signs, cut_points_by_pos):
    """Split a mesh face into triangles with side tags.

    ``corners_xyz`` are the face's corners in cycle order, ``corner_signs``
    their level-set signs, and ``cut_points_by_pos`` maps cycle position i
    (the edge from corner i to corner i+1) to that edge's cut point.
    Returns (triangles (m,3,3), sides (m,)).
    """
    polys = {-1: [], 1: []}
    for i in range(4):
        s = int(corner_signs[i])
        polys[s].append(corners_xyz[i])
        if i in cut_points_by_pos:
            polys[s].append(cut_points_by_pos[i])
            polys[-s].append(cut_points_by_pos[i])
    tris = []
    sides = []
    for s in (-1, 1):
        poly = polys[s]
        if len(poly) >= 3:
            for t in _polygon_fan(poly):
                tris.append(np.stack(t))
                sides.append(s)
    return np.stack(tris), np.asarray(sides, dtype=np.int8)


def integrate_element(region, fn, *, rule=None):
    """Integrate ``fn(points, sides)`` over a cut element or a plain box.

    ``region`` is either a :class:`CutDecomposition` or a (corner, spacing,
    side) triple for an uncut element.
    """
    if isinstance(region, CutDecomposition):
        pts, wts, sides = region.quadrature(rule)
    else:
        corner, spacing, side = region
        r = rule or box_rule()
        pts = np.asarray(corner) + r.points * np.asarray(spacing)
        wts = r.weights * float(np.prod(spacing))
        sides = np.full(len(wts), side, dtype=np.int8)
    vals = np.asarray(fn(pts, sides))
    return np.tensordot(wts, vals, axes=(0, 0))


def integrate_face(triangles, sides, fn, *, rule=None):
    """Integrate ``fn(points, sides)`` over tagged face triangles."""
    pts, wts = map_triangles(triangles, rule)
    q = pts.shape[1]
    flat = pts.reshape(-1, 3)
    tags = np.repeat(np.asarray(sides), q)
    vals = np.asarray(fn(flat, tags))
    return np.tensordot(wts.ravel(), vals, axes=(0, 0))
