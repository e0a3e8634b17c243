"""Cut-element geometry: sign-pattern cases, cut cycles, and fitted planes.

Everything here is driven by a 256-entry table indexed by the element's
8-bit minus-vertex mask.  The table, the per-mask cut-edge lists, and the
cyclic ordering of cut edges around the interface polygon are generated
from the cube's bit-coded connectivity at import time; there are no
hand-transcribed stencils.

Case ids (by minority vertex set of the mask):
  1  single vertex          (3 cut edges)
  2  adjacent vertex pair   (4 cut edges)
  3  full face              (4 cut edges)
  4  three-vertex L path    (5 cut edges)
  5  vertex plus its three neighbours (6 cut edges)
  6  four-vertex skew path  (6 cut edges)
Patterns 1 to 5 are the sections a plane can carve out of a box.  The skew
path cannot come from a plane, but its cut edges still close into a single
polygon (every face carries 0 or 2 of them), so it is kept and fitted with
a plane the same way as case 5.  Any remaining pattern has no consistent
single cut polygon and is rejected as under-resolved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError, MeshResolutionError
from .mesh import LOCAL_EDGE_VERTICES, LOCAL_FACES, CartesianMesh, EntityClassification

_DEGENERATE_AREA_REL = 1e-10
# Cut points closer together than this fraction of h sit on a vertex the
# interface (nearly) passes through; their positions are then dominated by
# the root clamp in the edge bisection, not by the interface.
_CLUSTERED_DIAMETER_REL = 1e-2
_SLIVER_AREA_REL = 1e-4

CASE_CUT_COUNTS = {1: 3, 2: 4, 3: 4, 4: 5, 5: 6, 6: 6}

_NEIGHBOR_XOR = (1, 2, 4)


def _popcount(m):
    return bin(m).count("1")


def _vertex_set(mask):
    return [v for v in range(8) if mask >> v & 1]


def _is_adjacent(a, b):
    return _popcount(a ^ b) == 1


def _is_face_set(s):
    ss = set(s)
    return any(set(corners) == ss for _, _, corners, _ in LOCAL_FACES)


def _is_tripod(s):
    ss = set(s)
    for v in s:
        if {v ^ 1, v ^ 2, v ^ 4} == ss - {v}:
            return True
    return False


def _is_l_path(s):
    pairs = [(a, b) for i, a in enumerate(s) for b in s[i + 1 :] if _is_adjacent(a, b)]
    if len(pairs) != 2:
        return False
    # Two adjacency edges sharing one vertex.
    return len({v for p in pairs for v in p}) == 3


def _is_skew_path(s):
    pairs = [(a, b) for i, a in enumerate(s) for b in s[i + 1 :] if _is_adjacent(a, b)]
    if len(pairs) != 3:
        return False
    deg = {v: 0 for v in s}
    for a, b in pairs:
        deg[a] += 1
        deg[b] += 1
    # Three adjacency edges chaining all four vertices (the cube graph has
    # no triangles, so this is the only degree pattern besides the tripod).
    return sorted(deg.values()) == [1, 1, 2, 2]


def _classify_mask(mask):
    if mask in (0, 255):
        return 0
    minus = _vertex_set(mask)
    plus = _vertex_set(mask ^ 255)
    minority = minus if len(minus) <= len(plus) else plus
    k = len(minority)
    if k == 1:
        return 1
    if k == 2:
        return 2 if _is_adjacent(*minority) else -1
    if k == 3:
        return 4 if _is_l_path(minority) else -1
    # k == 4: both sides are candidates and mirror each other's shape.
    if _is_face_set(minus) or _is_face_set(plus):
        return 3
    if _is_tripod(minus) or _is_tripod(plus):
        return 5
    if _is_skew_path(minus) or _is_skew_path(plus):
        return 6
    return -1


def _cut_edges_of_mask(mask):
    out = []
    for le, (a, b) in enumerate(LOCAL_EDGE_VERTICES):
        if (mask >> int(a) & 1) != (mask >> int(b) & 1):
            out.append(le)
    return out


def _cycle_of_mask(mask, cut):
    """Cut edges ordered around the interface polygon.

    Each cube face containing a cut edge contains exactly two, which makes
    those two neighbours in the polygon; the walk starts at the lowest cut
    edge id and moves toward its lower-id neighbour.
    """
    cut_set = set(cut)
    neighbors = {e: [] for e in cut}
    for _, _, _, face_edges in LOCAL_FACES:
        on_face = [e for e in face_edges if e in cut_set]
        if not on_face:
            continue
        if len(on_face) != 2:
            raise AssertionError(f"mask {mask}: face with {len(on_face)} cut edges")
        a, b = on_face
        neighbors[a].append(b)
        neighbors[b].append(a)
    for e, nb in neighbors.items():
        if len(nb) != 2:
            raise AssertionError(f"mask {mask}: cut edge {e} has {len(nb)} neighbours")
    start = min(cut)
    cycle = [start, min(neighbors[start])]
    while len(cycle) < len(cut):
        prev, cur = cycle[-2], cycle[-1]
        nxt = [e for e in neighbors[cur] if e != prev]
        cycle.append(nxt[0])
    return tuple(cycle)


def _build_tables():
    case = np.full(256, -1, dtype=np.int8)
    cut_edges = [()] * 256
    cycles = [()] * 256
    for m in range(256):
        c = _classify_mask(m)
        case[m] = c
        if c <= 0:
            continue
        cut = _cut_edges_of_mask(m)
        if len(cut) != CASE_CUT_COUNTS[c]:
            raise AssertionError(f"mask {m}: case {c} with {len(cut)} cut edges")
        cut_edges[m] = tuple(cut)
        cyc = _cycle_of_mask(m, cut)
        if len(set(cyc)) != len(cut):
            raise AssertionError(f"mask {m}: cut cycle does not cover the cut edges")
        if c == 5:
            from .mesh import LOCAL_EDGE_AXIS

            axes = [int(LOCAL_EDGE_AXIS[e]) for e in cyc]
            if axes[:3] != axes[3:] or len(set(axes[:3])) != 3:
                raise AssertionError(f"mask {m}: case 5 cycle axes not alternating")
        cycles[m] = cyc
    return case, cut_edges, cycles


CASE_TABLE, CUT_EDGE_TABLE, CYCLE_TABLE = _build_tables()


def classify_case(mask: int) -> int:
    """Case id for an 8-bit minus-vertex mask; raises if unresolvable."""
    c = int(CASE_TABLE[mask])
    if c < 0:
        raise MeshResolutionError(
            f"vertex sign pattern {mask:#04x} is not a plane-section pattern; "
            "mesh too coarse for the interface"
        )
    return c


@dataclass
class InterfaceElementData:
    """Geometry of one cut element: cut points, fitted plane, bookkeeping."""

    element_id: int
    corner: np.ndarray
    spacing: np.ndarray
    mask: int
    case_id: int
    cut_edges: np.ndarray       # local edge ids, ascending
    cut_points: np.ndarray      # (k,3) physical, aligned with cut_edges
    cycle_edges: np.ndarray     # local edge ids in polygon order
    cycle_points: np.ndarray    # (k,3) aligned with cycle_edges
    selected_edges: np.ndarray  # 3 local edge ids defining the plane
    triangle: np.ndarray        # (3,3)
    normal: np.ndarray          # unit, points from minus to plus side
    anchor: np.ndarray
    max_angle_deg: float

    @property
    def minus_vertices(self):
        return np.flatnonzero([(self.mask >> v) & 1 for v in range(8)])

    @property
    def plus_vertices(self):
        return np.flatnonzero([~(self.mask >> v) & 1 for v in range(8)])

    def plane_offsets(self, points):
        """Signed distance L(X) to the fitted plane (negative on minus side)."""
        return (np.asarray(points) - self.anchor) @ self.normal

    def point_on_edge(self, local_edge):
        pos = int(np.flatnonzero(self.cut_edges == local_edge)[0])
        return self.cut_points[pos]


def edge_intersections(
    mesh: CartesianMesh, classification: EntityClassification, element_ids
):
    """Per-element cut flags and points on the 12 local edges (NaN when uncut)."""
    element_ids = np.atleast_1d(np.asarray(element_ids, dtype=np.int64))
    ee = mesh.element_edges(element_ids)
    cut = classification.edge_cut[ee]
    idx = classification.edge_cut_index[ee]
    points = np.full(ee.shape + (3,), np.nan)
    sel = idx >= 0
    points[sel] = classification.cut_points[idx[sel]]
    return cut, points


def _triangle_geometry(points):
    p0, p1, p2 = points
    cross = np.cross(p1 - p0, p2 - p0)
    area = 0.5 * float(np.linalg.norm(cross))
    return cross, area


def _triangle_diameter(points):
    p0, p1, p2 = points
    return float(
        max(
            np.linalg.norm(p1 - p0),
            np.linalg.norm(p2 - p0),
            np.linalg.norm(p2 - p1),
        )
    )


def _max_angle_deg(points):
    angles = []
    for i in range(3):
        a = points[(i + 1) % 3] - points[i]
        b = points[(i + 2) % 3] - points[i]
        cosv = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
        angles.append(np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0))))
    return float(max(angles))


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def select_plane_triangle(
    mask, case_id, cut_edges, cut_points, cycle_edges, corner, spacing, *, rng=None
):
    """Local edge ids of the three cut points that define the fitted plane.

    With ``rng`` given, three distinct cut points are drawn at random
    instead (the deliberately wrong rule used to demonstrate that the
    selection matters); redraws up to 8 times if the draw is degenerate.
    """
    h = float(np.max(spacing))
    area_tol = _DEGENERATE_AREA_REL * h * h
    cut_edges = np.asarray(cut_edges)
    by_edge = {int(e): cut_points[i] for i, e in enumerate(cut_edges)}

    if rng is not None:
        k = len(cut_edges)
        for _ in range(8):
            pick = np.sort(rng.choice(k, size=3, replace=False))
            tri = cut_points[pick]
            if _triangle_geometry(tri)[1] > area_tol:
                return cut_edges[pick]
        raise DegenerateGeometryError(
            "random plane selection kept drawing (near) collinear cut points"
        )

    if case_id == 1:
        sel = np.sort(cut_edges)
    elif case_id == 2:
        from .mesh import local_edge_between

        iso = local_edge_between(*_minority_pair(mask))
        av, bv = LOCAL_EDGE_VERTICES[iso]
        seg_a = corner + _vertex_offset(av, spacing)
        seg_b = corner + _vertex_offset(bv, spacing)
        dists = np.array(
            [_point_segment_distance(p, seg_a, seg_b) for p in cut_points]
        )
        order = sorted(range(len(cut_edges)), key=lambda i: (-dists[i], cut_edges[i]))
        sel = np.sort(cut_edges[order[:3]])
    elif case_id == 3:
        sel = np.sort(np.asarray(cut_edges))[:3]
    elif case_id == 4:
        from .mesh import LOCAL_EDGE_AXIS

        axes = LOCAL_EDGE_AXIS[np.asarray(cut_edges)]
        counts = np.bincount(axes, minlength=3)
        axis = int(np.flatnonzero(counts == 3)[0])
        sel = np.sort(np.asarray(cut_edges)[axes == axis])
    elif case_id in (5, 6):
        cyc = np.asarray(cycle_edges)
        pts = {int(e): by_edge[int(e)] for e in cyc}
        tri_a = cyc[[0, 2, 4]]
        tri_b = cyc[[1, 3, 5]]
        pa = np.stack([pts[int(e)] for e in tri_a])
        if _triangle_geometry(pa)[1] > area_tol:
            sel = np.sort(tri_a)
        else:
            pb = np.stack([pts[int(e)] for e in tri_b])
            if _triangle_geometry(pb)[1] <= area_tol:
                raise DegenerateGeometryError(
                    "both alternating cut-point triples are (near) collinear"
                )
            sel = np.sort(tri_b)
    else:
        raise ValueError(f"not an interface case: {case_id}")

    tri = np.stack([by_edge[int(e)] for e in sel])
    if _triangle_geometry(tri)[1] <= area_tol:
        raise DegenerateGeometryError(
            f"selected cut points for case {case_id} are (near) collinear"
        )
    return sel


def _minority_pair(mask):
    minus = _vertex_set(mask)
    plus = _vertex_set(mask ^ 255)
    return minus if len(minus) == 2 else plus


def _vertex_offset(v, spacing):
    from .trilinear import VERTEX_BITS

    return VERTEX_BITS[int(v)] * np.asarray(spacing, dtype=float)


def plane_data(triangle, orient_reference):
    """Unit normal and anchor of the plane through a triangle.

    The normal is flipped, if needed, so that its dot product with
    ``orient_reference`` (a direction pointing from the minus toward the
    plus side) is positive.
    """
    cross, area = _triangle_geometry(np.asarray(triangle, dtype=float))
    if area == 0.0:
        raise DegenerateGeometryError("plane triangle has zero area")
    normal = cross / np.linalg.norm(cross)
    dot = float(np.dot(normal, orient_reference))
    if dot < 0:
        normal = -normal
    elif dot == 0:
        raise DegenerateGeometryError("cannot orient plane normal")
    return normal, np.asarray(triangle[0], dtype=float)


def fd_gradient(fn, points, step):
    """Central-difference gradient of a scalar field, vectorized over points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(points)
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        out[:, a] = (fn(points + e) - fn(points - e)) / (2 * step)
    return out


def _levelset_normal(levelset, levelset_grad, point, h):
    """Unit level-set gradient at a point; the minus-to-plus direction."""
    point = np.asarray(point, dtype=float)
    if levelset_grad is not None:
        g = np.asarray(levelset_grad(point[None, :]))[0]
    else:
        g = fd_gradient(levelset, point[None, :], 1e-6 * h)[0]
    nrm = float(np.linalg.norm(g))
    if nrm == 0.0:
        raise DegenerateGeometryError(
            "level-set gradient vanishes at the cut-point cluster; "
            "the plane orientation is undetermined"
        )
    return g / nrm


def _orientation_reference(levelset, levelset_grad, centroid, mask, corner, spacing, h):
    if levelset_grad is not None:
        g = np.asarray(levelset_grad(centroid[None, :]))[0]
    else:
        g = fd_gradient(levelset, centroid[None, :], 1e-6 * h)[0]
    if np.linalg.norm(g) > 0:
        return g
    # Level-set gradient vanished at the centroid; fall back to the
    # direction from the minus-corner centroid to the plus-corner centroid.
    from .trilinear import VERTEX_BITS

    verts = corner + VERTEX_BITS * spacing
    minus = np.array([(mask >> v) & 1 for v in range(8)], dtype=bool)
    return verts[~minus].mean(axis=0) - verts[minus].mean(axis=0)


def build_interface_data(
    mesh: CartesianMesh,
    classification: EntityClassification,
    levelset,
    *,
    levelset_grad=None,
    wrong_plane=False,
    seed=42,
):
    """Assemble :class:`InterfaceElementData` for every cut element.

    Returns (list of data, dict element_id -> list position).
    """
    eids = classification.interface_element_ids()
    if eids.size == 0:
        return [], {}
    cut_flags, cut_pts = edge_intersections(mesh, classification, eids)
    corners = mesh.element_corner(eids)
    spacing = mesh.spacing
    h = mesh.h

    out = []
    index = {}
    for row, eid in enumerate(eids):
        mask = int(classification.element_mask[eid])
        case_id = classify_case(mask)
        cut_local = np.asarray(CUT_EDGE_TABLE[mask], dtype=np.int64)
        expected = np.flatnonzero(cut_flags[row])
        if not np.array_equal(np.sort(cut_local), expected):
            raise MeshResolutionError(
                f"element {int(eid)}: cut edges do not match its sign pattern"
            )
        points = cut_pts[row, cut_local]
        cycle = np.asarray(CYCLE_TABLE[mask], dtype=np.int64)
        pos_of = {int(e): i for i, e in enumerate(cut_local)}
        cycle_points = points[[pos_of[int(e)] for e in cycle]]

        rng = (
            np.random.default_rng((seed, int(eid))) if wrong_plane else None
        )
        sel = select_plane_triangle(
            mask, case_id, cut_local, points, cycle, corners[row], spacing, rng=rng
        )
        triangle = np.stack([points[pos_of[int(e)]] for e in sel])
        centroid = triangle.mean(axis=0)
        diameter = _triangle_diameter(triangle)
        area = _triangle_geometry(triangle)[1]
        if case_id == 6:
            # Skew-path sections are not planar cuts; any cycle triple is a
            # warped sample of the section, so anchor at the section centroid
            # and take the level-set normal there.
            anchor = points.mean(axis=0)
            normal = _levelset_normal(levelset, levelset_grad, anchor, h)
        elif (
            diameter < _CLUSTERED_DIAMETER_REL * h
            or area < _SLIVER_AREA_REL * diameter * diameter
        ):
            # Cut points this bunched sit on a vertex or edge the interface
            # passes through; their triangle normal is clamp noise.
            normal = _levelset_normal(levelset, levelset_grad, centroid, h)
            anchor = centroid
        else:
            ref = _orientation_reference(
                levelset, levelset_grad, centroid, mask, corners[row], spacing, h
            )
            normal, anchor = plane_data(triangle, ref)

        out.append(
            InterfaceElementData(
                element_id=int(eid),
                corner=corners[row],
                spacing=np.asarray(spacing, dtype=float),
                mask=mask,
                case_id=case_id,
                cut_edges=cut_local,
                cut_points=points,
                cycle_edges=cycle,
                cycle_points=cycle_points,
                selected_edges=np.asarray(sel, dtype=np.int64),
                triangle=triangle,
                normal=normal,
                anchor=anchor,
                max_angle_deg=_max_angle_deg(triangle),
            )
        )
        index[int(eid)] = row
    return out, index


def geometry_diagnostics(
    data_list, levelset, *, levelset_grad=None, samples=4, bracket_factor=2.0
):
    """How well each fitted plane tracks the true interface inside its element.

    For sample points spread over the cut polygon, the true interface is
    recovered by bisection along the plane normal; reported per element are
    the largest plane offset |L| of those interface points and the largest
    angle between the plane normal and the level-set normal there.
    """
    dists = np.zeros(len(data_list))
    devs = np.zeros(len(data_list))
    for i, data in enumerate(data_list):
        h = float(np.max(data.spacing))
        pts = _polygon_samples(data.cycle_points, samples)
        gamma_pts = _project_to_levelset(
            levelset, pts, data.normal, bracket_factor * h
        )
        gamma_pts = np.vstack([gamma_pts, data.cycle_points])
        offs = np.abs(data.plane_offsets(gamma_pts))
        dists[i] = float(offs.max())
        if levelset_grad is not None:
            g = np.asarray(levelset_grad(gamma_pts))
        else:
            g = fd_gradient(levelset, gamma_pts, 1e-6 * h)
        norms = np.linalg.norm(g, axis=1)
        ok = norms > 0
        cosang = np.clip((g[ok] @ data.normal) / norms[ok], -1.0, 1.0)
        devs[i] = float(np.arccos(cosang).max()) if ok.any() else 0.0
    return {"plane_distance": dists, "normal_deviation": devs}


def _polygon_samples(cycle_points, per_tri):
    """Barycentric samples of the fan over the cut polygon's centroid."""
    center = cycle_points.mean(axis=0)
    k = len(cycle_points)
    bary = []
    for a in range(per_tri + 1):
        for b in range(per_tri + 1 - a):
            bary.append((a / per_tri, b / per_tri))
    bary = np.asarray(bary)
    out = []
    for i in range(k):
        p0, p1 = cycle_points[i], cycle_points[(i + 1) % k]
        out.append(
            center
            + bary[:, :1] * (p0 - center)
            + bary[:, 1:] * (p1 - center)
        )
    return np.unique(np.vstack(out).round(decimals=14), axis=0)


def _project_to_levelset(levelset, points, direction, span):
    """Move each point along +-direction onto the level set by bisection."""
    lo_pts = points - span * direction
    hi_pts = points + span * direction
    flo = levelset(lo_pts)
    fhi = levelset(hi_pts)
    ok = flo * fhi < 0
    if not ok.any():
        return points[:0]
    lo = np.full(ok.sum(), -span)
    hi = np.full(ok.sum(), span)
    base = points[ok]
    neg_low = flo[ok] < 0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        fm = levelset(base + mid[:, None] * direction)
        neg = fm < 0
        take_lo = neg == neg_low
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)
    s = 0.5 * (lo + hi)
    return base + s[:, None] * direction
