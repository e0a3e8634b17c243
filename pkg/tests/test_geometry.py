"""Case table, plane selection, and interface geometry records.

The case table is cross-checked against an oracle that classifies each
vertex sign pattern from scratch by the induced subgraph of the minority
vertex set on the cube adjacency graph.
"""

import itertools

import numpy as np
import pytest

from ife3d.exceptions import DegenerateGeometryError, MeshResolutionError
from ife3d.geometry import (
    CASE_CUT_COUNTS,
    CASE_TABLE,
    CUT_EDGE_TABLE,
    CYCLE_TABLE,
    build_interface_data,
    classify_case,
    geometry_diagnostics,
    plane_data,
    select_plane_triangle,
)
from ife3d.mesh import (
    LOCAL_EDGE_AXIS,
    LOCAL_EDGE_VERTICES,
    LOCAL_FACES,
    BoxDomain,
    build_mesh,
    classify_entities,
)
from ife3d.problems import builtin_problem

CUBE2 = BoxDomain((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))

# cube adjacency: vertices differ in exactly one bit
ADJACENT = {
    (a, b)
    for a in range(8)
    for b in range(8)
    if bin(a ^ b).count("1") == 1
}


def oracle_case(mask):
    """Classify a sign pattern by the structure of its minority vertex set."""
    if mask in (0, 255):
        return 0
    minus = [v for v in range(8) if (mask >> v) & 1]
    small = minus if len(minus) <= 4 else [v for v in range(8) if v not in minus]
    k = len(small)
    edges = [(a, b) for a, b in itertools.combinations(small, 2) if (a, b) in ADJACENT]
    deg = {v: 0 for v in small}
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    degs = sorted(deg.values())
    if k == 1:
        return 1
    if k == 2:
        return 2 if len(edges) == 1 else -1
    if k == 3:
        # connected triples in the cube graph are always two-edge bends
        return 4 if len(edges) == 2 and degs == [1, 1, 2] else -1
    if k == 4:
        if len(edges) == 4 and degs == [2, 2, 2, 2]:
            return 3  # 4-cycle, i.e. one cube face
        if len(edges) == 3 and degs == [1, 1, 1, 3]:
            return 5  # star: a vertex and its three neighbors
        if len(edges) == 3 and degs == [1, 1, 2, 2]:
            return 6  # open 4-vertex path leaving the face
        return -1
    raise AssertionError(k)


def oracle_cut_edges(mask):
    out = []
    for le, (a, b) in enumerate(LOCAL_EDGE_VERTICES):
        if ((mask >> a) & 1) != ((mask >> b) & 1):
            out.append(le)
    return out


def test_case_table_matches_oracle():
    for mask in range(256):
        assert CASE_TABLE[mask] == oracle_case(mask), hex(mask)


def test_case_histogram():
    hist = dict(zip(*np.unique(CASE_TABLE, return_counts=True)))
    assert hist == {-1: 128, 0: 2, 1: 16, 2: 24, 3: 6, 4: 48, 5: 8, 6: 24}


def test_case_table_complement_symmetric():
    for mask in range(256):
        assert CASE_TABLE[mask] == CASE_TABLE[mask ^ 255]


def cube_symmetries():
    """All 48 signed axis permutations as vertex relabelings."""
    perms = []
    for axes in itertools.permutations(range(3)):
        for flips in itertools.product((0, 1), repeat=3):
            relabel = []
            for v in range(8):
                bits = [(v >> a) & 1 for a in range(3)]
                new_bits = [bits[axes[a]] ^ flips[a] for a in range(3)]
                relabel.append(new_bits[0] + 2 * new_bits[1] + 4 * new_bits[2])
            perms.append(relabel)
    return perms


def test_case_table_rotation_covariant():
    for relabel in cube_symmetries():
        for mask in range(256):
            image = 0
            for v in range(8):
                if (mask >> v) & 1:
                    image |= 1 << relabel[v]
            assert CASE_TABLE[image] == CASE_TABLE[mask]


def test_cut_edge_table_matches_sign_changes():
    for mask in range(256):
        case = CASE_TABLE[mask]
        expected = oracle_cut_edges(mask)
        if case <= 0:
            assert CUT_EDGE_TABLE[mask] == ()
            continue
        assert list(CUT_EDGE_TABLE[mask]) == expected
        assert len(expected) == CASE_CUT_COUNTS[case]


def test_cycle_covers_cut_edges_and_walks_faces():
    face_edges = [set(edges) for _, _, _, edges in LOCAL_FACES]
    for mask in range(256):
        cyc = CYCLE_TABLE[mask]
        cut = CUT_EDGE_TABLE[mask]
        assert sorted(cyc) == sorted(cut)
        k = len(cyc)
        for i in range(k):
            a, b = cyc[i], cyc[(i + 1) % k]
            # consecutive cut points lie on a shared element face
            assert any(a in fe and b in fe for fe in face_edges), hex(mask)


def test_case5_cycle_axes_alternate():
    tripod = 0b00010111  # vertex 0 plus its three neighbors
    assert CASE_TABLE[tripod] == 5
    axes = [int(LOCAL_EDGE_AXIS[e]) for e in CYCLE_TABLE[tripod]]
    assert axes[:3] == axes[3:]
    assert sorted(axes[:3]) == [0, 1, 2]


def test_classify_case_rejects_unresolvable_masks():
    with pytest.raises(MeshResolutionError):
        classify_case(0b10000001)  # two antipodal corners
    with pytest.raises(MeshResolutionError):
        classify_case(0b01000010)


def case1_data(d1, d2, d3, beta=None, mesh_n=1):
    """Single minus corner at the origin of a unit element, cut at d1,d2,d3."""

    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return p[..., 0] / d1 + p[..., 1] / d2 + p[..., 2] / d3 - 1.0

    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), mesh_n)
    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, index = build_interface_data(mesh, cls, w)
    return mesh, cls, data, index


def test_case1_geometry_record():
    _, _, data, index = case1_data(0.4, 0.6, 0.8)
    assert len(data) == 1
    d = data[0]
    assert d.case_id == 1
    assert d.mask == 0x01
    assert sorted(d.cut_edges) == [0, 4, 8]  # the three edges at vertex 0
    assert np.allclose(sorted(d.cut_points[:, 0]), [0.0, 0.0, 0.4], atol=1e-9)
    # plane triangle is the unique cut-point triple
    assert np.array_equal(np.sort(d.selected_edges), np.sort(d.cut_edges))
    # unit normal oriented from the minus corner outward
    n_expect = np.array([1 / 0.4, 1 / 0.6, 1 / 0.8])
    n_expect /= np.linalg.norm(n_expect)
    assert np.allclose(d.normal, n_expect, atol=1e-9)
    assert d.plane_offsets(np.zeros((1, 3)))[0] < 0
    # plane passes through all three cut points
    assert np.abs(d.plane_offsets(d.cut_points)).max() < 1e-12


def test_plane_offsets_sign_convention_on_plane_cut():
    """For an affine level set every vertex sign matches its plane offset."""
    rng = np.random.default_rng(3)
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 1)
    for _ in range(50):
        normal = rng.standard_normal(3)
        normal /= np.linalg.norm(normal)
        offset = rng.uniform(0.2, 0.8)
        center = rng.uniform(0.3, 0.7, 3)

        def w(p, normal=normal, center=center):
            p = np.atleast_2d(np.asarray(p, dtype=float))
            return (p - center) @ normal

        try:
            cls = classify_entities(mesh, w, allow_boundary_interface=True)
        except MeshResolutionError:
            continue
        data, _ = build_interface_data(mesh, cls, w)
        if not data:
            continue
        d = data[0]
        verts = d.corner + np.array(
            [[v & 1, (v >> 1) & 1, (v >> 2) & 1] for v in range(8)]
        ) * d.spacing
        offs = d.plane_offsets(verts)
        for v in d.minus_vertices:
            assert offs[v] < 1e-10
        for v in d.plus_vertices:
            assert offs[v] > -1e-10
        # fitted plane coincides with the affine interface
        assert abs(abs(d.normal @ normal) - 1.0) < 1e-10


def test_selected_triangle_vanishing_offsets():
    prob = builtin_problem("sphere")
    mesh = build_mesh(CUBE2, 8)
    cls = classify_entities(mesh, prob.levelset)
    data, _ = build_interface_data(
        mesh, cls, prob.levelset, levelset_grad=prob.levelset_grad
    )
    assert len(data) > 0
    h = mesh.h
    for d in data:
        if d.case_id == 6:
            continue  # section plane is anchored at the centroid instead
        assert np.abs(d.plane_offsets(d.triangle)).max() < 1e-12 * h


def test_max_angle_bound_on_sphere():
    prob = builtin_problem("sphere")
    mesh = build_mesh(CUBE2, 10)
    cls = classify_entities(mesh, prob.levelset)
    data, _ = build_interface_data(
        mesh, cls, prob.levelset, levelset_grad=prob.levelset_grad
    )
    worst = max(d.max_angle_deg for d in data)
    assert worst <= 135.0 + 1e-9


def test_case2_selection_prefers_far_points():
    """Case 2 keeps the three cut points farthest from the isolated edge."""
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 1)

    # minus pair (0,1): the bottom x-edge; slab cut slanted in y
    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return p[..., 1] + 0.5 * p[..., 2] - 0.3

    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, _ = build_interface_data(mesh, cls, w)
    d = data[0]
    assert d.case_id == 2
    assert d.mask == 0x03
    assert len(d.cut_edges) == 4
    iso_a = np.array([0.0, 0.0, 0.0])
    iso_b = np.array([1.0, 0.0, 0.0])

    def dist(p):
        t = np.clip((p - iso_a) @ (iso_b - iso_a), 0.0, 1.0)
        return np.linalg.norm(p - (iso_a + t * (iso_b - iso_a)))

    dists = {int(e): dist(d.point_on_edge(int(e))) for e in d.cut_edges}
    dropped = set(map(int, d.cut_edges)) - set(map(int, d.selected_edges))
    assert len(dropped) == 1
    kept_min = min(dists[int(e)] for e in d.selected_edges)
    assert dists[dropped.pop()] <= kept_min + 1e-12


def test_case3_selection_lowest_edges():
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 1)

    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return p[..., 0] - 0.5

    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, _ = build_interface_data(mesh, cls, w)
    d = data[0]
    assert d.case_id == 3
    assert np.array_equal(d.selected_edges, np.sort(d.cut_edges)[:3])


def test_case5_selection_alternating_triple():
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 1)

    # tripod at vertex 0
    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return p.sum(axis=-1) - 1.25

    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, _ = build_interface_data(mesh, cls, w)
    d = data[0]
    assert d.case_id == 5
    assert len(d.cut_edges) == 6
    cyc = list(d.cycle_edges)
    assert sorted(d.selected_edges) == sorted(cyc[0::2])
    axes = sorted(int(LOCAL_EDGE_AXIS[e]) for e in d.selected_edges)
    assert axes == [0, 1, 2]


def test_plane_data_orientation():
    tri = np.array([[0.3, 0, 0], [0, 0.3, 0], [0, 0, 0.3]])
    n, anchor = plane_data(tri, np.array([1.0, 1.0, 1.0]))
    assert n @ [1, 1, 1] > 0
    n2, _ = plane_data(tri, np.array([-1.0, -1.0, -1.0]))
    assert np.allclose(n2, -n)
    assert np.allclose(anchor, tri[0])
    with pytest.raises(DegenerateGeometryError):
        plane_data(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.ones(3))


def test_wrong_plane_is_seeded_and_differs():
    prob = builtin_problem("sphere")
    mesh = build_mesh(CUBE2, 8)
    cls = classify_entities(mesh, prob.levelset)
    kwargs = dict(levelset_grad=prob.levelset_grad, wrong_plane=True)
    data_a, _ = build_interface_data(mesh, cls, prob.levelset, seed=1, **kwargs)
    data_b, _ = build_interface_data(mesh, cls, prob.levelset, seed=1, **kwargs)
    data_c, _ = build_interface_data(mesh, cls, prob.levelset, seed=2, **kwargs)
    same = [np.array_equal(a.selected_edges, b.selected_edges)
            for a, b in zip(data_a, data_b)]
    assert all(same)
    diff = [not np.array_equal(a.selected_edges, c.selected_edges)
            for a, c in zip(data_a, data_c)]
    assert any(diff)


def test_wrong_plane_triangle_still_from_cut_points():
    prob = builtin_problem("sphere")
    mesh = build_mesh(CUBE2, 8)
    cls = classify_entities(mesh, prob.levelset)
    data, _ = build_interface_data(
        mesh, cls, prob.levelset, levelset_grad=prob.levelset_grad,
        wrong_plane=True, seed=5,
    )
    for d in data:
        assert set(map(int, d.selected_edges)) <= set(map(int, d.cut_edges))
        for i, e in enumerate(d.selected_edges):
            assert np.allclose(d.triangle[i], d.point_on_edge(int(e)))


def test_select_plane_triangle_case4_single_axis():
    """Case 4 keeps the three cut points on edges of the common axis."""
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 1)

    # minus set {0,1,3}: an L along the bottom face
    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        return 2.0 * z + y - x - 1.5

    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, _ = build_interface_data(mesh, cls, w)
    d = data[0]
    assert d.case_id == 4
    assert len(d.cut_edges) == 5
    axes = [int(LOCAL_EDGE_AXIS[e]) for e in d.selected_edges]
    assert len(set(axes)) == 1


def test_geometry_diagnostics_plane_is_exact():
    mesh = build_mesh(BoxDomain((0, 0, 0), (1, 1, 1)), 2)

    def w(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return p[..., 0] + 0.3 * p[..., 1] - 0.52

    cls = classify_entities(mesh, w, allow_boundary_interface=True)
    data, _ = build_interface_data(mesh, cls, w)
    diag = geometry_diagnostics(data, w)
    assert diag["plane_distance"].max() < 1e-9
    assert diag["normal_deviation"].max() < 1e-6


def test_geometry_diagnostics_sphere_scaling():
    """Distance shrinks ~h^2 and deviation ~h across one refinement.

    Both statistics are maxima over elements, so per-pair rates wobble as
    the worst grazing element changes; the (16, 32) halving sits well
    inside the expected bands.
    """
    prob = builtin_problem("sphere")
    stats = {}
    for n in (16, 32):
        mesh = build_mesh(CUBE2, n)
        cls = classify_entities(mesh, prob.levelset)
        data, _ = build_interface_data(
            mesh, cls, prob.levelset, levelset_grad=prob.levelset_grad
        )
        diag = geometry_diagnostics(
            data, prob.levelset, levelset_grad=prob.levelset_grad
        )
        stats[n] = (diag["plane_distance"].max(), diag["normal_deviation"].max())
    dist_rate = np.log2(stats[16][0] / stats[32][0])
    dev_rate = np.log2(stats[16][1] / stats[32][1])
    assert dist_rate >= 1.6
    assert dev_rate >= 0.8


def test_select_plane_triangle_rejects_collinear():
    pts = np.array([[0.0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]])
    with pytest.raises(DegenerateGeometryError):
        select_plane_triangle(
            0x01, 1, np.array([0, 4, 8]), pts, np.array([0, 4, 8]),
            np.zeros(3), np.ones(3),
        )
