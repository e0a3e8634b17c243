"""Benchmark interface problems with manufactured solutions.

Three builtins on (-1,1)^3 with beta = (1, 100) by default:

  sphere        radius pi/6 sphere, u^s = r0 |X|^5 / beta^s (plus a constant
                shift outside so the trace matches)
  orthocircle   three orthogonally interlocked rings, u^s = w / beta^s
  torus_sphere  a torus and a disjoint sphere, combined level set w1*w2,
                u^s = w1*w2 / beta^s

For any level set w, u^s = w/beta^s vanishes on {w=0} from both sides and
has continuous flux beta^s grad(u^s) = grad(w), so it is an exact solution
of the interface problem with f = -laplacian(w).  The orthocircle and
torus-and-sphere surfaces reach the box boundary, so those problems carry
``allow_boundary_interface=True``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import (
    Field,
    affine,
    constant,
    finite_difference_laplacian,
    radial_power,
    sphere_quadric,
    torus_quartic,
)
from .mesh import BoxDomain

DEFAULT_DOMAIN = BoxDomain((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
BUILTIN_NAMES = ("sphere", "orthocircle", "torus_sphere")


@dataclass
class BenchmarkProblem:
    """An elliptic interface problem plus its exact solution per side."""

    name: str
    domain: BoxDomain
    beta_minus: float
    beta_plus: float
    levelset: object            # callable points -> values
    levelset_grad: object       # callable or None
    u_minus: Field
    u_plus: Field
    source: object              # callable (points, signs) -> values
    allow_boundary_interface: bool = False
    notes: tuple = dc_field(default_factory=tuple)

    def beta_of(self, signs):
        return np.where(np.asarray(signs) < 0, self.beta_minus, self.beta_plus)

    def _dispatch(self, fn_minus, fn_plus, points, signs):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        signs = np.broadcast_to(np.asarray(signs), points.shape[:-1])
        neg = signs < 0
        vm = fn_minus(points)
        vp = fn_plus(points)
        return np.where(
            neg.reshape(neg.shape + (1,) * (vm.ndim - 1)), vm, vp
        )

    def exact(self, points, signs):
        return self._dispatch(self.u_minus, self.u_plus, points, signs)

    def exact_grad(self, points, signs):
        return self._dispatch(
            self.u_minus.gradient, self.u_plus.gradient, points, signs
        )

    def exact_hess(self, points, signs):
        return self._dispatch(
            self.u_minus.hessian, self.u_plus.hessian, points, signs
        )

    def dirichlet(self, points, signs):
        return self.exact(points, signs)


def _sphere_problem(beta_minus, beta_plus, domain):
    r0 = np.pi / 6.0
    r5 = radial_power(5.0)
    shift = r0**6 * (1.0 / beta_minus - 1.0 / beta_plus)
    u_minus = (r0 / beta_minus) * r5
    u_plus = (r0 / beta_plus) * r5 + shift

    def levelset(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.linalg.norm(p, axis=-1) - r0

    def levelset_grad(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        r = np.linalg.norm(p, axis=-1)
        return p / np.where(r > 0, r, 1.0)[:, None]

    def source(points, signs):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(points, axis=-1)
        return -30.0 * r0 * r**3

    return BenchmarkProblem(
        name="sphere",
        domain=domain,
        beta_minus=beta_minus,
        beta_plus=beta_plus,
        levelset=levelset,
        levelset_grad=levelset_grad,
        u_minus=u_minus,
        u_plus=u_plus,
        source=source,
    )


def from_levelset(
    name,
    w: Field,
    beta_minus,
    beta_plus,
    domain=DEFAULT_DOMAIN,
    *,
    allow_boundary_interface=False,
    notes=(),
):
    """Problem with exact solution u^s = w/beta^s and source f = -laplacian(w)."""

    def source(points, signs):
        return -w.laplacian(points)

    return BenchmarkProblem(
        name=name,
        domain=domain,
        beta_minus=beta_minus,
        beta_plus=beta_plus,
        levelset=w,
        levelset_grad=w.gradient,
        u_minus=(1.0 / beta_minus) * w,
        u_plus=(1.0 / beta_plus) * w,
        source=source,
        allow_boundary_interface=allow_boundary_interface,
        notes=tuple(notes),
    )


def _orthocircle_problem(beta_minus, beta_plus, domain):
    k, rho, r, R = 1e-3, 0.15, 0.3, 1.0
    w1 = torus_quartic(R, r, 0)
    w2 = torus_quartic(R, r, 1)
    w3 = torus_quartic(R, r, 2)
    w = k * (w1 * w2 * w3) + (-k * rho)
    return from_levelset(
        "orthocircle",
        w,
        beta_minus,
        beta_plus,
        domain,
        allow_boundary_interface=True,
        notes=(
            "interface rings reach the domain boundary; boundary faces may be cut",
        ),
    )


def _torus_sphere_problem(beta_minus, beta_plus, domain):
    w1 = sphere_quadric((0.3, 0.0, 0.0), 0.5)
    w2 = torus_quartic(1.0, 0.3, 0)
    w = w1 * w2
    return from_levelset(
        "torus_sphere",
        w,
        beta_minus,
        beta_plus,
        domain,
        allow_boundary_interface=True,
        notes=(
            "combined level set is the product of the sphere and torus level sets; "
            "u^s = w1*w2/beta^s",
            "beta takes its minus value inside either component (w1*w2 < 0) and "
            "its plus value outside",
            "the torus tube crosses the domain boundary; boundary faces may be cut",
        ),
    )


def plane_problem(normal, offset, beta_minus, beta_plus, domain=DEFAULT_DOMAIN):
    """Flat interface with u^s = (normal.X - offset)/beta^s; exactly representable."""
    w = affine(normal, -float(offset))
    # A plane through the box always reaches the boundary.
    return from_levelset(
        "plane", w, beta_minus, beta_plus, domain, allow_boundary_interface=True
    )


def builtin_problem(name, beta_minus=1.0, beta_plus=100.0, domain=DEFAULT_DOMAIN):
    if name == "sphere":
        return _sphere_problem(float(beta_minus), float(beta_plus), domain)
    if name == "orthocircle":
        return _orthocircle_problem(float(beta_minus), float(beta_plus), domain)
    if name == "torus_sphere":
        return _torus_sphere_problem(float(beta_minus), float(beta_plus), domain)
    raise ValueError(
        f"unknown problem {name!r}; builtins are {', '.join(BUILTIN_NAMES)}"
    )


def check_source_consistency(
    problem: BenchmarkProblem, *, n_per_side=1000, step=1e-2, rel=1e-5, seed=0
):
    """Finite-difference audit of the coded source term.

    Samples interior points whose full FD stencil stays on one side of the
    interface and compares -beta^s * (FD laplacian of u^s) against the coded
    f.  Returns the worst relative mismatch.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(problem.domain.lo) + 3 * step
    hi = np.asarray(problem.domain.hi) - 3 * step
    worst = 0.0
    for side, u_field in ((-1, problem.u_minus), (1, problem.u_plus)):
        beta = problem.beta_minus if side < 0 else problem.beta_plus
        kept = []
        while len(kept) < n_per_side:
            pts = rng.uniform(lo, hi, size=(4 * n_per_side, 3))
            offsets = np.array(
                [[0, 0, 0]]
                + [
                    d * s * np.eye(3, dtype=int)[a]
                    for a in range(3)
                    for d in (1, 2)
                    for s in (1, -1)
                ]
            )
            stencil = pts[:, None, :] + step * offsets[None, :, :]
            w = np.asarray(problem.levelset(stencil.reshape(-1, 3))).reshape(
                len(pts), -1
            )
            ok = (w < 0).all(axis=1) if side < 0 else (w > 0).all(axis=1)
            kept.extend(pts[ok][: n_per_side - len(kept)])
        pts = np.asarray(kept)
        f_fd = -beta * finite_difference_laplacian(u_field, pts, step)
        f_coded = problem.source(pts, np.full(len(pts), side))
        scale = max(np.abs(f_coded).max(), 1.0)
        worst = max(worst, float(np.abs(f_fd - f_coded).max() / scale))
    if worst > rel:
        raise AssertionError(
            f"{problem.name}: finite-difference source check failed ({worst:.2e})"
        )
    return worst
