"""Global IFE space, PPIFE system assembly, Dirichlet constraints, solvers.

One degree of freedom per mesh node.  Non-interface elements carry the
standard trilinear basis and share a single local stiffness block; cut
elements use their LocalIFEBasis with the tagged tetrahedral quadrature.
Interior faces whose boundary is cut get the interior-penalty terms

    - int_F {beta grad u . n}[v] + eps int_F {beta grad v . n}[u]
    + (sigma0/|F|) int_F [u][v]

with {.} the arithmetic mean, [.] the lower-minus-upper trace jump along
the face normal, and |F| the full face area.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import SolverError
from .geometry import build_interface_data
from .ife import LocalIFEBasis, build_shape_functions
from .mesh import CartesianMesh, EntityClassification
from .quadrature import (
    box_rule,
    decompose_cut_element,
    decompose_face,
    map_triangles,
    tetrahedron_rule,
    triangle_rule,
)
from .trilinear import shape_gradients, shape_values

_ELEMENT_CHUNK = 100_000


@dataclass
class GlobalIFESpace:
    """Per-node dof numbering plus the per-cut-element machinery."""

    mesh: CartesianMesh
    classification: EntityClassification
    beta_minus: float
    beta_plus: float
    interface_data: list
    interface_index: dict       # element id -> position in the lists
    bases: list                 # LocalIFEBasis, aligned with interface_data
    decompositions: list        # CutDecomposition, aligned likewise
    levelset: object = None
    wrong_plane: bool = False
    seed: int = 42

    @property
    def num_dofs(self):
        return self.mesh.num_nodes

    def basis_for(self, element_id) -> LocalIFEBasis:
        return self.bases[self.interface_index[int(element_id)]]

    def decomposition_for(self, element_id):
        return self.decompositions[self.interface_index[int(element_id)]]


def build_space(
    mesh: CartesianMesh,
    classification: EntityClassification,
    levelset,
    beta_minus,
    beta_plus,
    *,
    levelset_grad=None,
    wrong_plane=False,
    seed=42,
) -> GlobalIFESpace:
    data, index = build_interface_data(
        mesh,
        classification,
        levelset,
        levelset_grad=levelset_grad,
        wrong_plane=wrong_plane,
        seed=seed,
    )
    bases = [build_shape_functions(d, beta_minus, beta_plus) for d in data]
    decomps = [decompose_cut_element(d) for d in data]
    return GlobalIFESpace(
        mesh=mesh,
        classification=classification,
        beta_minus=float(beta_minus),
        beta_plus=float(beta_plus),
        interface_data=data,
        interface_index=index,
        bases=bases,
        decompositions=decomps,
        levelset=levelset,
        wrong_plane=wrong_plane,
        seed=seed,
    )


@dataclass(frozen=True)
class SchemeParameters:
    """Penalty scheme knobs: epsilon picks the SPPIFE/NPPIFE/IPPIFE variant."""

    epsilon: int = -1
    sigma0_factor: float = 10.0

    def __post_init__(self):
        if self.epsilon not in (-1, 0, 1):
            raise ValueError("epsilon must be -1, 0, or +1")
        if self.sigma0_factor <= 0:
            raise ValueError("sigma0_factor must be positive")

    def sigma0(self, beta_minus, beta_plus):
        return self.sigma0_factor * max(beta_minus, beta_plus)


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool = False
    boundary_nodes: np.ndarray = None
    boundary_values: np.ndarray = None
    meta: dict = dc_field(default_factory=dict)

    def export_matrix_market(self, basename):
        scipy.io.mmwrite(f"{basename}.mtx", self.matrix)
        scipy.io.mmwrite(f"{basename}_rhs.mtx", self.rhs.reshape(-1, 1))


def _reference_stiffness(spacing):
    """Exact trilinear stiffness block for one uncut cell."""
    rule = box_rule(2)
    pts = rule.points
    grads = shape_gradients(pts, spacing)  # (q,8,3)
    vol = float(np.prod(spacing))
    return np.einsum("q,qid,qjd->ij", rule.weights * vol, grads, grads)


def assemble(space: GlobalIFESpace, problem, scheme: SchemeParameters) -> SparseSystem:
    """Raw PPIFE system (no boundary constraints applied yet)."""
    mesh = space.mesh
    cls = space.classification
    n_dof = space.num_dofs
    beta_m, beta_p = space.beta_minus, space.beta_plus
    sigma0 = scheme.sigma0(beta_m, beta_p)
    t0 = time.perf_counter()

    matrix = sp.csr_matrix((n_dof, n_dof))
    rhs = np.zeros(n_dof)

    k_ref = _reference_stiffness(mesh.spacing)
    load_rule = box_rule()
    psi_load = shape_values(load_rule.points)  # (q,8)
    cell_vol = float(np.prod(mesh.spacing))

    std_ids = np.flatnonzero(~cls.element_interface)
    for start in range(0, std_ids.size, _ELEMENT_CHUNK):
        eids = std_ids[start : start + _ELEMENT_CHUNK]
        nodes = mesh.element_nodes(eids)  # (e,8)
        beta_e = np.where(cls.element_sign[eids] < 0, beta_m, beta_p)
        blocks = beta_e[:, None, None] * k_ref[None, :, :]
        rows = np.repeat(nodes, 8, axis=1).ravel()
        cols = np.tile(nodes, (1, 8)).ravel()
        matrix = matrix + sp.coo_matrix(
            (blocks.ravel(), (rows, cols)), shape=(n_dof, n_dof)
        ).tocsr()

        corners = mesh.element_corner(eids)
        pts = corners[:, None, :] + load_rule.points[None, :, :] * mesh.spacing
        signs = np.broadcast_to(
            cls.element_sign[eids][:, None], pts.shape[:2]
        )
        fvals = np.asarray(
            problem.source(pts.reshape(-1, 3), signs.ravel())
        ).reshape(pts.shape[:2])
        b_local = np.einsum(
            "eq,qi->ei", fvals * load_rule.weights[None, :] * cell_vol, psi_load
        )
        np.add.at(rhs, nodes, b_local)

    tet_rule = tetrahedron_rule()
    rows_acc, cols_acc, vals_acc = [], [], []
    for data, basis, decomp in zip(
        space.interface_data, space.bases, space.decompositions
    ):
        pts, wts, sides = decomp.quadrature(tet_rule)
        beta_q = np.where(sides < 0, beta_m, beta_p)
        grads = basis.gradients(pts, sides)
        a_local = np.einsum("q,qid,qjd->ij", wts * beta_q, grads, grads)
        vals = basis.values(pts, sides)
        f_q = np.asarray(problem.source(pts, sides))
        b_local = (wts * f_q) @ vals
        nodes = mesh.element_nodes(np.array([data.element_id]))[0]
        rows_acc.append(np.repeat(nodes, 8))
        cols_acc.append(np.tile(nodes, 8))
        vals_acc.append(a_local.ravel())
        np.add.at(rhs, nodes, b_local)

    face_rows, face_cols, face_vals, face_rhs, n_faces, n_bnd_faces = (
        _assemble_penalty_faces(space, problem, scheme, sigma0)
    )
    rows_acc.extend(face_rows)
    cols_acc.extend(face_cols)
    vals_acc.extend(face_vals)
    for nodes, b_face in face_rhs:
        np.add.at(rhs, nodes, b_face)

    if rows_acc:
        matrix = matrix + sp.coo_matrix(
            (
                np.concatenate(vals_acc),
                (np.concatenate(rows_acc), np.concatenate(cols_acc)),
            ),
            shape=(n_dof, n_dof),
        ).tocsr()
    matrix.sum_duplicates()

    meta = {
        "num_interface_elements": len(space.interface_data),
        "num_irregular_elements": sum(
            1 for d in space.interface_data if d.case_id == 6
        ),
        "num_penalty_faces": n_faces,
        "num_boundary_interface_faces": n_bnd_faces,
        "sigma0": sigma0,
        "epsilon": scheme.epsilon,
        "assemble_seconds": time.perf_counter() - t0,
    }
    return SparseSystem(matrix=matrix, rhs=rhs, meta=meta)


def _face_quadrature(mesh, cls, face_id):
    """Side-tagged quadrature on one cut face, split along the cut segment."""
    fid = np.asarray([face_id], dtype=np.int64)
    cycle = mesh.face_corner_cycle(fid)[0]
    corners = mesh.node_coords(cycle)
    signs = cls.node_sign[cycle]
    cut_pos = {}
    edge_cycle = mesh.face_edge_cycle(fid)[0]
    for pos in range(4):
        ci = cls.edge_cut_index[edge_cycle[pos]]
        if ci >= 0:
            cut_pos[pos] = cls.cut_points[ci]
    tris, tri_sides = decompose_face(corners, signs, cut_pos)
    pts, wts = map_triangles(tris, triangle_rule())
    flat = pts.reshape(-1, 3)
    tags = np.repeat(tri_sides, pts.shape[1])
    return flat, wts.ravel(), tags


def _assemble_penalty_faces(space, problem, scheme, sigma0):
    """Interface-face terms: jump/average coupling across cut interior
    faces, and single-sided consistency plus penalty on cut boundary
    faces, where shape functions of interior nodes need not vanish."""
    mesh = space.mesh
    cls = space.classification
    eps = scheme.epsilon
    beta_m, beta_p = space.beta_minus, space.beta_plus

    face_ids = np.nonzero(cls.face_interface)[0]
    rows, cols, vals, rhs_pairs = [], [], [], []
    if face_ids.size == 0:
        return rows, cols, vals, rhs_pairs, 0, 0
    on_boundary = mesh.face_on_boundary(face_ids)

    axes = mesh.face_axis(face_ids)
    adjacency = mesh.face_elements(face_ids)
    spacing = mesh.spacing
    for f in range(face_ids.size):
        axis = int(axes[f])
        # Penalty length scale: the face diameter, giving the classical
        # h^-1 interior-penalty scaling.  Reading |F| as the face area
        # over-penalizes by another h^-1 and visibly locks the solution.
        h_face = float(max(spacing[(axis + 1) % 3], spacing[(axis + 2) % 3]))
        flat, w_flat, tags = _face_quadrature(mesh, cls, face_ids[f])
        beta_q = np.where(tags < 0, beta_m, beta_p)
        lower, upper = int(adjacency[f, 0]), int(adjacency[f, 1])
        normal = np.zeros(3)
        normal[axis] = 1.0

        if not on_boundary[f]:
            basis1 = space.basis_for(lower)
            basis2 = space.basis_for(upper)
            v1 = basis1.values(flat, tags)
            v2 = basis2.values(flat, tags)
            g1 = basis1.gradients(flat, tags) @ normal
            g2 = basis2.gradients(flat, tags) @ normal

            jump = np.concatenate([v1, -v2], axis=1)          # (Q,16)
            avg = 0.5 * beta_q[:, None] * np.concatenate([g1, g2], axis=1)
            a_face = (
                -np.einsum("q,qa,qb->ab", w_flat, jump, avg)
                + eps * np.einsum("q,qa,qb->ab", w_flat, avg, jump)
                + (sigma0 / h_face)
                * np.einsum("q,qa,qb->ab", w_flat, jump, jump)
            )
            nodes = np.concatenate(
                [
                    mesh.element_nodes(np.array([lower]))[0],
                    mesh.element_nodes(np.array([upper]))[0],
                ]
            )
            rows.append(np.repeat(nodes, 16))
            cols.append(np.tile(nodes, 16))
            vals.append(a_face.ravel())
        else:
            # Single neighbor; outward normal points away from it.
            if upper < 0:
                eid, orient = lower, 1.0
            else:
                eid, orient = upper, -1.0
            basis = space.basis_for(eid)
            v = basis.values(flat, tags)
            flux = beta_q[:, None] * (
                orient * (basis.gradients(flat, tags) @ normal)
            )
            a_face = (
                -np.einsum("q,qa,qb->ab", w_flat, v, flux)
                + eps * np.einsum("q,qa,qb->ab", w_flat, flux, v)
                + (sigma0 / h_face) * np.einsum("q,qa,qb->ab", w_flat, v, v)
            )
            g_q = np.asarray(problem.dirichlet(flat, tags))
            b_face = eps * (w_flat * g_q) @ flux + (sigma0 / h_face) * (
                w_flat * g_q
            ) @ v
            nodes = mesh.element_nodes(np.array([eid]))[0]
            rows.append(np.repeat(nodes, 8))
            cols.append(np.tile(nodes, 8))
            vals.append(a_face.ravel())
            rhs_pairs.append((nodes, b_face))

    n_bnd = int(on_boundary.sum())
    return rows, cols, vals, rhs_pairs, int(face_ids.size) - n_bnd, n_bnd


def apply_dirichlet(
    space: GlobalIFESpace, system: SparseSystem, dirichlet, *, symmetric=None
) -> SparseSystem:
    """Constrain boundary nodes to g via row replacement.

    ``dirichlet(points, signs)`` evaluates the boundary data.  With
    ``symmetric`` (default: matrix symmetry preserved automatically when the
    raw matrix is symmetric) the boundary columns are eliminated into the
    right-hand side as well, keeping the system CG-compatible.
    """
    mesh = space.mesh
    cls = space.classification
    bnd = mesh.boundary_node_ids()
    g = np.asarray(
        dirichlet(mesh.node_coords(bnd), cls.node_sign[bnd]), dtype=float
    )
    if symmetric is None:
        diff = system.matrix - system.matrix.T
        denom = max(np.abs(system.matrix.data).max(), 1.0)
        symmetric = np.abs(diff.data).max() / denom < 1e-12 if diff.nnz else True

    n = space.num_dofs
    keep = np.ones(n)
    keep[bnd] = 0.0
    d_int = sp.diags(keep)
    d_bnd = sp.diags(1.0 - keep)
    g_full = np.zeros(n)
    g_full[bnd] = g

    a = system.matrix
    if symmetric:
        a2 = d_int @ a @ d_int + d_bnd
        b2 = keep * (system.rhs - a @ g_full)
        b2[bnd] = g
    else:
        a2 = d_int @ a + d_bnd
        b2 = system.rhs.copy()
        b2[bnd] = g
    a2 = a2.tocsr()
    a2.eliminate_zeros()
    return SparseSystem(
        matrix=a2,
        rhs=b2,
        symmetric=bool(symmetric),
        boundary_nodes=bnd,
        boundary_values=g,
        meta=dict(system.meta),
    )


@dataclass
class SolveDiagnostics:
    method: str
    iterations: int
    rel_residual: float
    converged: bool


def solve(system: SparseSystem, *, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned CG (symmetric) or BiCGSTAB, verified against
    the true residual before returning."""
    a = system.matrix
    b = system.rhs
    n = a.shape[0]
    if max_iter is None:
        max_iter = int(np.ceil(20 * np.sqrt(n)))
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n), SolveDiagnostics("trivial", 0, 0.0, True)

    x0 = np.zeros(n)
    if system.boundary_nodes is not None:
        x0[system.boundary_nodes] = system.boundary_values

    inv_diag = a.diagonal()
    if np.any(inv_diag == 0):
        raise SolverError("zero diagonal entry; cannot precondition")
    inv_diag = 1.0 / inv_diag

    method = "pcg" if system.symmetric else "bicgstab"
    stepper = _pcg if system.symmetric else _bicgstab
    x = x0
    total = 0
    rel = np.inf
    # Recursive residuals drift; loop on the true residual until it holds.
    while total < max_iter:
        x, used = stepper(a, b, x, inv_diag, tol, max_iter - total)
        total += used
        rel = float(np.linalg.norm(b - a @ x) / b_norm)
        if rel <= tol:
            return x, SolveDiagnostics(method, total, rel, True)
        if used == 0:
            break
    raise SolverError(
        f"{method} stalled at relative residual {rel:.3e} "
        f"after {total} iterations (cap {max_iter})",
        diagnostics=SolveDiagnostics(method, total, rel, False),
    )


def _pcg(a, b, x, inv_diag, tol, max_iter):
    r = b - a @ x
    b_norm = np.linalg.norm(b)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        q = a @ p
        pq = float(p @ q)
        if pq <= 0:
            return x, it
        alpha = rz / pq
        x = x + alpha * p
        r = r - alpha * q
        if np.linalg.norm(r) <= tol * b_norm:
            return x, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter


def _bicgstab(a, b, x, inv_diag, tol, max_iter):
    r = b - a @ x
    b_norm = np.linalg.norm(b)
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, max_iter + 1):
        rho_new = float(r_hat @ r)
        if rho_new == 0.0 or omega == 0.0:
            return x, it
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        ph = inv_diag * p
        v = a @ ph
        denom = float(r_hat @ v)
        if denom == 0.0:
            return x, it
        alpha = rho / denom
        s = r - alpha * v
        x = x + alpha * ph
        if np.linalg.norm(s) <= tol * b_norm:
            return x, it
        sh = inv_diag * s
        t = a @ sh
        tt = float(t @ t)
        if tt == 0.0:
            return x, it
        omega = float(t @ s) / tt
        x = x + omega * sh
        r = s - omega * t
        if np.linalg.norm(r) <= tol * b_norm:
            return x, it
    return x, max_iter
