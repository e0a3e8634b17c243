"""Error norms, interpolation diagnostics, and convergence studies.

Norm conventions: L2 and the broken H1 seminorm integrate against the
exact solution per level-set side (tagged tetrahedral quadrature on cut
elements); Linf is a dense-sampling maximum (5^3 grid per element plus the
cut-cell quadrature points).  The eta quantities, reported for
interpolation studies only, are per-cut-element ratios maximized over all
cut elements:

    eta_inf  max ||u - I_h u||_Linf(T)
    eta0     max ||u - I_h u||_L2(T)  / ||u||_PH2(T)
    eta1     max |u - I_h u|_H1(T)    / ||u||_PH2(T)

where ||u||_PH2(T) collects value, gradient, and the six second
derivatives, integrated piecewise.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .assembly import (
    SchemeParameters,
    apply_dirichlet,
    assemble,
    build_space,
    solve,
)
from .exceptions import IFEError
from .ife import lagrange_interpolate
from .mesh import build_mesh, classify_entities
from .quadrature import box_rule, tetrahedron_rule
from .trilinear import shape_gradients, shape_values

_LINF_GRID = 5
_SAMPLE_CHUNK = 20_000

MODES = ("interpolation", "sppife", "nppife", "ippife")
_MODE_EPSILON = {"sppife": -1, "nppife": 1, "ippife": 0}


@dataclass
class ErrorReport:
    label: str
    h: float
    n_axis: int
    linf: float = None
    l2: float = None
    h1: float = None
    eta_inf: float = None
    eta0: float = None
    eta1: float = None
    error: str = None
    meta: dict = dc_field(default_factory=dict)


def pairwise_rate(e_coarse, e_fine, h_coarse, h_fine):
    if e_coarse is None or e_fine is None or e_coarse <= 0 or e_fine <= 0:
        return None
    return float(np.log(e_coarse / e_fine) / np.log(h_coarse / h_fine))


def compute_errors(space, problem, coeffs, *, include_eta=False) -> dict:
    mesh = space.mesh
    cls = space.classification
    spacing = mesh.spacing
    cell_vol = float(np.prod(spacing))
    rule = box_rule()
    psi = shape_values(rule.points)
    ref_grads = shape_gradients(rule.points, spacing)

    s1 = np.linspace(0.0, 1.0, _LINF_GRID)
    grid = np.stack(np.meshgrid(s1, s1, s1, indexing="ij"), axis=-1).reshape(-1, 3)
    psi_grid = shape_values(grid)

    l2_sq = 0.0
    h1_sq = 0.0
    linf = 0.0

    std_ids = np.flatnonzero(~cls.element_interface)
    for start in range(0, std_ids.size, _SAMPLE_CHUNK):
        eids = std_ids[start : start + _SAMPLE_CHUNK]
        nodes = mesh.element_nodes(eids)
        ce = coeffs[nodes]
        corners = mesh.element_corner(eids)
        signs_e = cls.element_sign[eids]

        pts = corners[:, None, :] + rule.points[None, :, :] * spacing
        flat = pts.reshape(-1, 3)
        signs = np.repeat(signs_e, len(rule.points))
        u = np.asarray(problem.exact(flat, signs)).reshape(len(eids), -1)
        uh = ce @ psi.T
        wq = rule.weights * cell_vol
        l2_sq += float(((u - uh) ** 2 @ wq).sum())
        gu = np.asarray(problem.exact_grad(flat, signs)).reshape(
            len(eids), -1, 3
        )
        guh = np.einsum("ei,qid->eqd", ce, ref_grads)
        h1_sq += float((((gu - guh) ** 2).sum(axis=2) @ wq).sum())

        spts = corners[:, None, :] + grid[None, :, :] * spacing
        sflat = spts.reshape(-1, 3)
        ssigns = np.repeat(signs_e, len(grid))
        us = np.asarray(problem.exact(sflat, ssigns)).reshape(len(eids), -1)
        uhs = ce @ psi_grid.T
        linf = max(linf, float(np.abs(us - uhs).max()))

    eta_inf = eta0 = eta1 = 0.0
    tet = tetrahedron_rule()
    for data, basis, decomp in zip(
        space.interface_data, space.bases, space.decompositions
    ):
        nodes = mesh.element_nodes(np.array([data.element_id]))[0]
        ce = coeffs[nodes]
        pts, wts, sides = decomp.quadrature(tet)
        u = np.asarray(problem.exact(pts, sides))
        uh = basis.values(pts, sides) @ ce
        diff_sq = float(wts @ (u - uh) ** 2)
        l2_sq += diff_sq
        gu = np.asarray(problem.exact_grad(pts, sides))
        guh = np.einsum("qid,i->qd", basis.gradients(pts, sides), ce)
        gdiff_sq = float(wts @ ((gu - guh) ** 2).sum(axis=1))
        h1_sq += gdiff_sq

        spts = data.corner + grid * spacing
        w_s = np.asarray(space.levelset(spts))
        ssigns = np.where(w_s < cls.snap_tol, -1, 1)
        us = np.asarray(problem.exact(spts, ssigns))
        uhs = basis.values(spts, ssigns) @ ce
        local_inf = max(
            float(np.abs(us - uhs).max()), float(np.abs(u - uh).max())
        )
        linf = max(linf, local_inf)

        if include_eta:
            hess = np.asarray(problem.exact_hess(pts, sides))
            # Six distinct second derivatives: the three diagonal entries
            # plus each off-diagonal pair once.
            diag_sq = np.einsum("qaa->q", hess**2)
            off_sq = 0.5 * ((hess**2).sum(axis=(1, 2)) - diag_sq)
            ph2_sq = float(
                wts @ (u**2 + (gu**2).sum(axis=1) + diag_sq + off_sq)
            )
            ph2 = np.sqrt(ph2_sq)
            if ph2 > 0:
                eta0 = max(eta0, np.sqrt(diff_sq) / ph2)
                eta1 = max(eta1, np.sqrt(gdiff_sq) / ph2)
            eta_inf = max(eta_inf, local_inf)

    out = {
        "linf": linf,
        "l2": float(np.sqrt(l2_sq)),
        "h1": float(np.sqrt(h1_sq)),
    }
    if include_eta:
        out.update(eta_inf=eta_inf, eta0=float(eta0), eta1=float(eta1))
    return out


@dataclass
class StudyResult:
    problem_name: str
    mode: str
    rows: list
    meta: dict = dc_field(default_factory=dict)

    _COLUMNS = ("linf", "l2", "h1", "eta_inf", "eta0", "eta1")
    _HEADER = "h,Linf,rate,L2,rate,H1,rate,eta_inf,rate,eta0,rate,eta1,rate"

    def rates(self):
        """Per-row dict of rates vs the previous row (None where undefined)."""
        out = []
        prev = None
        for row in self.rows:
            rates = {}
            for col in self._COLUMNS:
                if prev is None:
                    rates[col] = None
                else:
                    rates[col] = pairwise_rate(
                        getattr(prev, col), getattr(row, col), prev.h, row.h
                    )
            out.append(rates)
            prev = row
        return out

    def to_csv(self):
        buf = io.StringIO()
        buf.write(self._HEADER + "\n")
        for row, rates in zip(self.rows, self.rates()):
            cells = [row.label]
            for col in self._COLUMNS:
                v = getattr(row, col)
                cells.append("" if v is None else format(v, ".6e"))
                r = rates[col]
                cells.append("" if r is None else format(r, ".4f"))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_markdown(self):
        show_eta = any(r.eta0 is not None for r in self.rows)
        cols = self._COLUMNS if show_eta else self._COLUMNS[:3]
        names = {
            "linf": "Linf",
            "l2": "L2",
            "h1": "H1",
            "eta_inf": "eta_inf",
            "eta0": "eta0",
            "eta1": "eta1",
        }
        head = ["h"]
        for c in cols:
            head += [names[c], "rate"]
        lines = [
            "| " + " | ".join(head) + " |",
            "|" + "---|" * len(head),
        ]
        for row, rates in zip(self.rows, self.rates()):
            cells = [row.label]
            for c in cols:
                v = getattr(row, c)
                cells.append("" if v is None else format(v, ".4e"))
                r = rates[c]
                cells.append("" if r is None else format(r, ".4f"))
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def convergence_study(
    problem,
    ns,
    mode="sppife",
    *,
    scheme: SchemeParameters = None,
    wrong_plane=False,
    seed=42,
    solver_tol=1e-10,
    solver_max_iter=None,
    log=None,
) -> StudyResult:
    """Run one problem over a ladder of meshes (n elements per unit length)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    if scheme is None and mode in _MODE_EPSILON:
        scheme = SchemeParameters(epsilon=_MODE_EPSILON[mode])

    def emit(msg):
        if log is not None:
            log(msg)

    rows = []
    lengths = problem.domain.lengths
    for n in ns:
        t0 = time.perf_counter()
        n_axis = int(n)
        h = float(lengths.max()) / n_axis
        label = f"1/{n_axis}"
        report = ErrorReport(label=label, h=h, n_axis=n_axis)
        rows.append(report)
        try:
            mesh = build_mesh(problem.domain, n_axis)
            cls = classify_entities(
                mesh,
                problem.levelset,
                allow_boundary_interface=problem.allow_boundary_interface,
            )
            space = build_space(
                mesh,
                cls,
                problem.levelset,
                problem.beta_minus,
                problem.beta_plus,
                levelset_grad=problem.levelset_grad,
                wrong_plane=wrong_plane,
                seed=seed,
            )
            report.meta["num_interface_elements"] = len(space.interface_data)
            report.meta["num_irregular_elements"] = sum(
                1 for d in space.interface_data if d.case_id == 6
            )
            report.meta["num_boundary_interface_faces"] = cls.checks.get(
                "boundary_interface_faces", 0
            )
            if space.interface_data:
                report.meta["max_angle_deg"] = max(
                    d.max_angle_deg for d in space.interface_data
                )
                report.meta["min_denominator"] = min(
                    b.denominator for b in space.bases
                )
            if mode == "interpolation":
                coeffs = lagrange_interpolate(mesh, cls, problem.exact)
            else:
                system = assemble(space, problem, scheme)
                constrained = apply_dirichlet(
                    space,
                    system,
                    problem.dirichlet,
                    symmetric=(scheme.epsilon == -1),
                )
                coeffs, diag = solve(
                    constrained, tol=solver_tol, max_iter=solver_max_iter
                )
                report.meta["solver"] = {
                    "method": diag.method,
                    "iterations": diag.iterations,
                    "rel_residual": diag.rel_residual,
                }
            errs = compute_errors(
                space, problem, coeffs, include_eta=(mode == "interpolation")
            )
            for k, v in errs.items():
                setattr(report, k, v)
        except IFEError as exc:
            report.error = f"{type(exc).__name__}: {exc}"
            emit(f"row {label}: FAILED {report.error}")
        report.meta["seconds"] = time.perf_counter() - t0
        emit(
            f"row {label}: "
            + (
                report.error
                or f"Linf={report.linf:.4e} L2={report.l2:.4e} H1={report.h1:.4e} "
                f"({report.meta['seconds']:.1f}s)"
            )
        )
    meta = {
        "mode": mode,
        "wrong_plane": wrong_plane,
        "seed": seed,
        "epsilon": scheme.epsilon if scheme else None,
        "sigma0_factor": scheme.sigma0_factor if scheme else None,
        "beta_minus": problem.beta_minus,
        "beta_plus": problem.beta_plus,
        "notes": list(problem.notes),
    }
    return StudyResult(problem_name=problem.name, mode=mode, rows=rows, meta=meta)
