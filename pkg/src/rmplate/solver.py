"""Linear solves, error norms and the stability diagnostics.

Two solution paths are provided.  The full path factorizes the symmetric
indefinite saddle matrix

    [ rot_rot     rot_disp    rot_mult      ] [phi ]   [load_rot ]
    [ rot_disp^T  disp_disp  -disp_mult     ] [u   ] = [load_disp]
    [ rot_mult^T -disp_mult^T -c_t mult_mass] [zeta]   [0        ]

directly.  The condensed path requires the dual multiplier kind, whose
rot_mult block is diagonal: the multiplier is eliminated from the
rotation-test rows, the remaining equations are solved for (phi, u), and
the multiplier is recovered by inverting the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import ref_element as ref
from .assembly import (FieldSet, SaddleSystem, coupling_blocks,
                       integrate_against_hats)
from .mesh import Mesh, PointLocator, classify
from .spaces import (DofLayout, MultiplierBasis, build_layout, build_multiplier,
                     multiplier_mass, multiplier_primal_gram, scalar_vertex_gram)


@dataclass
class PlateSolution:
    """Coefficient vectors of one solve; residual is for the full system."""

    rotation: np.ndarray    # (2m,)
    deflection: np.ndarray  # (m + nt,)
    shear: np.ndarray       # (2m,)
    solver_path: str
    residual: float


def full_matrix(system: SaddleSystem) -> sp.csr_matrix:
    return sp.bmat([
        [system.rot_rot, system.rot_disp, system.rot_mult],
        [system.rot_disp.T, system.disp_disp, -system.disp_mult],
        [system.rot_mult.T, -system.disp_mult.T, -system.shear_factor * system.mult_mass],
    ], format="csr")


def full_rhs(system: SaddleSystem) -> np.ndarray:
    return np.concatenate([system.load_rot, system.load_disp, np.zeros(2 * system.m)])


def _split(system: SaddleSystem, x: np.ndarray):
    m, nw = system.m, system.nw
    return x[:2 * m], x[2 * m:2 * m + nw], x[2 * m + nw:]


def _relative_residual(K, b, x) -> float:
    norm_b = np.linalg.norm(b)
    res = np.linalg.norm(K @ x - b)
    return res / norm_b if norm_b > 0 else res


def solve_full(system: SaddleSystem, residual_tol: float = 1e-10) -> PlateSolution:
    """Direct solve of the complete saddle system."""
    K = full_matrix(system).tocsc()
    b = full_rhs(system)
    try:
        x = spsolve(K, b)
    except RuntimeError as exc:
        raise RuntimeError(
            "saddle system factorization failed (singular matrix; check the "
            "mesh and the multiplier stability)") from exc
    if not np.all(np.isfinite(x)):
        raise RuntimeError("saddle system solve produced non-finite entries")
    res = _relative_residual(K, b, x)
    if res > residual_tol:
        raise RuntimeError(f"full-path residual {res:.3e} exceeds {residual_tol:.1e}")
    phi, u, zeta = _split(system, x)
    return PlateSolution(rotation=phi, deflection=u, shear=zeta,
                         solver_path="full", residual=res)


def condensed_system(system: SaddleSystem):
    """Reduced (phi, u) system after eliminating the multiplier.

    Only valid for the dual kind.  The rotation-test rows give
    zeta = Dinv (f_phi - rot_rot phi - rot_disp u); substituting into the
    remaining rows leaves the returned (generally nonsymmetric) matrix and
    right-hand side, plus the diagonal inverse used for the recovery.
    """
    if system.kind != "dual":
        raise ValueError("static condensation requires the dual multiplier kind "
                         "(diagonal coupling block)")
    D = system.rot_mult
    off_diag = D - sp.diags(D.diagonal())
    if off_diag.nnz and abs(off_diag).max() > 1e-12 * abs(D.diagonal()).max():
        raise ValueError("coupling block is not diagonal; cannot condense")
    d = D.diagonal()
    if np.any(d == 0.0):
        raise RuntimeError("zero diagonal entry in the multiplier coupling block; "
                           "the multiplier basis is broken")
    dinv = sp.diags(1.0 / d)

    A, B = system.rot_rot, system.rot_disp
    G, M = system.disp_mult, system.mult_mass
    c_t = system.shear_factor
    f_phi, f_u = system.load_rot, system.load_disp

    GDi = G @ dinv
    MDi = c_t * (M @ dinv)
    K_red = sp.bmat([
        [B.T + GDi @ A, system.disp_disp + GDi @ B],
        [D.T + MDi @ A, -G.T + MDi @ B],
    ], format="csc")
    b_red = np.concatenate([f_u + GDi @ f_phi, MDi @ f_phi])
    return K_red, b_red, dinv


def solve_condensed(system: SaddleSystem, residual_tol: float = 1e-9) -> PlateSolution:
    """Condensed-path solve; the recovered triple is checked on the full system."""
    K_red, b_red, dinv = condensed_system(system)
    try:
        x = spsolve(K_red, b_red)
    except RuntimeError as exc:
        raise RuntimeError("condensed system factorization failed") from exc
    phi, u = x[:2 * system.m], x[2 * system.m:]
    zeta = dinv @ (system.load_rot - system.rot_rot @ phi - system.rot_disp @ u)

    full = np.concatenate([phi, u, zeta])
    res = _relative_residual(full_matrix(system), full_rhs(system), full)
    if res > residual_tol:
        raise RuntimeError(f"condensed-path residual {res:.3e} exceeds {residual_tol:.1e}")
    return PlateSolution(rotation=phi, deflection=u, shear=zeta,
                         solver_path="condensed", residual=res)


# ---------------------------------------------------------------------------
# error norms against pointwise reference fields

@dataclass
class ErrorNorms:
    phi_h1: float
    u_h1: float
    zeta_l2: float
    zeta_tl2: float


def _padded_vertex_coeffs(layout: DofLayout, interior_coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros(layout.n)
    out[layout.interior_vertices] = interior_coeffs
    return out


def error_norms(solution: PlateSolution, fields: FieldSet, mesh: Mesh,
                layout: DofLayout, multiplier: MultiplierBasis, t: float) -> ErrorNorms:
    """H1 errors of rotation/deflection and L2 error of the shear multiplier.

    Only the computable t-weighted L2 part of the shear error is reported.
    """
    rule = ref.QUADRATURE
    coords = mesh.coords()
    areas = ref.triangle_areas(coords)
    grads = ref.hat_gradients(coords, areas)
    pts = ref.physical_points(coords, rule)
    x, y = pts[..., 0], pts[..., 1]
    hats = ref.hat_table(rule)
    bub = ref.bubble_table(rule)
    bgrad = ref.bubble_gradients(coords, rule, areas)
    tris = mesh.triangles
    m = layout.m

    def cell_sum(sq):
        return float(np.einsum("q,tq->", rule.weights, sq * areas[:, None]))

    # deflection
    uv = _padded_vertex_coeffs(layout, solution.deflection[:m])[tris]
    ub = solution.deflection[m:]
    uh = np.einsum("qv,tv->tq", hats, uv) + ub[:, None] * bub[None, :]
    guh = np.einsum("tv,tvd->td", uv, grads)[:, None, :] + ub[:, None, None] * bgrad
    du = fields.u(x, y) - uh
    dgu = fields.grad_u(x, y) - guh
    u_h1 = np.sqrt(cell_sum(du ** 2) + cell_sum((dgu ** 2).sum(axis=-1)))

    # rotation
    phi_ex = fields.phi(x, y)
    gphi_ex = fields.grad_phi(x, y)
    phi_sq = np.zeros_like(du)
    gphi_sq = np.zeros_like(du)
    for c in range(2):
        pv = _padded_vertex_coeffs(layout, solution.rotation[c * m:(c + 1) * m])[tris]
        ph = np.einsum("qv,tv->tq", hats, pv)
        gph = np.einsum("tv,tvd->td", pv, grads)[:, None, :]
        phi_sq += (phi_ex[..., c] - ph) ** 2
        gphi_sq += ((gphi_ex[..., c, :] - gph) ** 2).sum(axis=-1)
    phi_h1 = np.sqrt(cell_sum(phi_sq) + cell_sum(gphi_sq))

    # shear multiplier
    table = multiplier.local_value_table(rule)
    zeta_ex = fields.zeta(x, y)
    zeta_sq = np.zeros_like(du)
    for c in range(2):
        w = multiplier.unmodified_coefficients(solution.shear[c * m:(c + 1) * m])[tris]
        zh = np.einsum("qv,tv->tq", table, w)
        zeta_sq += (zeta_ex[..., c] - zh) ** 2
    zeta_l2 = np.sqrt(cell_sum(zeta_sq))

    return ErrorNorms(phi_h1=float(phi_h1), u_h1=float(u_h1),
                      zeta_l2=float(zeta_l2), zeta_tl2=float(t * zeta_l2))


def discrete_fields(solution: PlateSolution, mesh: Mesh, layout: DofLayout,
                    multiplier: MultiplierBasis,
                    locator: Optional[PointLocator] = None) -> FieldSet:
    """Wrap a finite element solution as pointwise-evaluable fields.

    Used as the reference in self-convergence studies: the fields of a fine
    solve are evaluated at the quadrature points of coarser meshes.
    """
    if locator is None:
        locator = PointLocator(mesh)
    coords = mesh.coords()
    areas = ref.triangle_areas(coords)
    grads = ref.hat_gradients(coords, areas)
    tris = mesh.triangles
    m = layout.m

    uv = _padded_vertex_coeffs(layout, solution.deflection[:m])
    ub = solution.deflection[m:]
    pv = np.stack([_padded_vertex_coeffs(layout, solution.rotation[c * m:(c + 1) * m])
                   for c in range(2)])
    wz = np.stack([multiplier.unmodified_coefficients(solution.shear[c * m:(c + 1) * m])
                   for c in range(2)])
    dual_kind = multiplier.kind == "dual"

    def _locate(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        p = np.column_stack([np.broadcast_to(x, shape).ravel(),
                             np.broadcast_to(y, shape).ravel()])
        tri, lam = locator.locate(p)
        return shape, tri, lam

    def u(x, y):
        shape, tri, lam = _locate(x, y)
        vals = np.einsum("pv,pv->p", uv[tris[tri]], lam)
        vals += ub[tri] * ref.BUBBLE_SCALE * lam.prod(axis=1)
        return vals.reshape(shape)

    def grad_u(x, y):
        shape, tri, lam = _locate(x, y)
        g = grads[tri]
        vals = np.einsum("pv,pvd->pd", uv[tris[tri]], g)
        pair = np.stack([lam[:, 1] * lam[:, 2], lam[:, 0] * lam[:, 2],
                         lam[:, 0] * lam[:, 1]], axis=1)
        vals += ub[tri, None] * ref.BUBBLE_SCALE * np.einsum("pv,pvd->pd", pair, g)
        return vals.reshape(shape + (2,))

    def phi(x, y):
        shape, tri, lam = _locate(x, y)
        vals = np.einsum("cpv,pv->pc", pv[:, tris[tri]], lam)
        return vals.reshape(shape + (2,))

    def grad_phi(x, y):
        shape, tri, lam = _locate(x, y)
        vals = np.einsum("cpv,pvd->pcd", pv[:, tris[tri]], grads[tri])
        return vals.reshape(shape + (2, 2))

    def zeta(x, y):
        shape, tri, lam = _locate(x, y)
        loc = 4.0 * lam - 1.0 if dual_kind else lam
        vals = np.einsum("cpv,pv->pc", wz[:, tris[tri]], loc)
        return vals.reshape(shape + (2,))

    return FieldSet(u=u, grad_u=grad_u, phi=phi, grad_phi=grad_phi, zeta=zeta)


# ---------------------------------------------------------------------------
# constraint-preserving interpolation diagnostics (standard kind)

@dataclass
class FortinSample:
    """A smooth clamped pair: rotation-like psi and deflection-like v."""

    name: str
    psi: Callable    # (x, y) -> (..., 2)
    v: Callable      # (x, y) -> (...,)
    grad_v: Callable  # (x, y) -> (..., 2)


def _poly_bubble():
    def b(x, y):
        return x * (1 - x) * y * (1 - y)

    def gb(x, y):
        return np.stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], axis=-1)

    return b, gb


def default_fortin_samples() -> list[FortinSample]:
    """Clamped polynomial pairs of degree <= 4 (quadrature-exact)."""
    b, gb = _poly_bubble()
    zero2 = lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)) + (2,))
    zero1 = lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
    return [
        FortinSample("x-rotation", lambda x, y: np.stack([b(x, y), zero1(x, y)], axis=-1), b, gb),
        FortinSample("y-rotation", lambda x, y: np.stack([zero1(x, y), b(x, y)], axis=-1),
                     lambda x, y: 2.0 * b(x, y), lambda x, y: 2.0 * gb(x, y)),
        FortinSample("rotation-only", lambda x, y: np.stack([b(x, y), -b(x, y)], axis=-1),
                     zero1, zero2),
    ]


def l2_projection_clamped(mesh: Mesh, layout: DofLayout, v) -> np.ndarray:
    """L2 projection of v onto the clamped P1 space, coefficients (m,)."""
    mass = scalar_vertex_gram(mesh, "hat", "hat")
    idx = layout.interior_vertices
    rhs = integrate_against_hats(mesh, v)[idx]
    return spsolve(mass[idx][:, idx].tocsc(), rhs)


def multiplier_weighted_projection(mesh: Mesh, layout: DofLayout,
                                   multiplier: MultiplierBasis, v) -> np.ndarray:
    """Projection onto clamped P1 weighted by the multiplier basis.

    Solves int (v - proj) mu_i = 0 for every multiplier basis function.
    """
    W = multiplier_primal_gram(mesh, multiplier, layout)
    if multiplier.kind == "standard":
        rhs = multiplier.coeffs @ integrate_against_hats(mesh, v)
    else:
        from .assembly import integrate_against_duals

        rhs = multiplier.coeffs @ integrate_against_duals(mesh, v)
    return spsolve(sp.csc_matrix(W), rhs)


def constraint_interpolant(mesh: Mesh, layout: DofLayout, v) -> np.ndarray:
    """Deflection-space interpolant matching element means of v.

    L2-projects onto clamped P1, then corrects each element with its bubble
    so that int_T (interpolant - v) = 0 for every triangle.
    """
    from .assembly import element_means

    areas = ref.triangle_areas(mesh.coords())
    p = l2_projection_clamped(mesh, layout, v)
    pv = _padded_vertex_coeffs(layout, p)[mesh.triangles]
    proj_means = pv.sum(axis=1) * areas / 3.0
    bubble_ints = 27.0 * 2.0 * areas / 120.0   # int_T bubble = 9 |T| / 20
    z = (element_means(mesh, v) - proj_means) / bubble_ints
    return np.concatenate([p, z])


@dataclass
class FortinReport:
    identity_defect: float
    mean_defect: float
    per_sample: dict


def fortin_diagnostics(mesh: Mesh, layout: DofLayout, multiplier: MultiplierBasis,
                       samples: Optional[Sequence[FortinSample]] = None) -> FortinReport:
    """Check the constraint-preservation identity of the projector pair.

    For each sample (psi, v) the projected pair (weighted projection of
    psi, mean-matching interpolant of v) must reproduce the constraint form
    against every multiplier basis function; the report carries the largest
    identity defect and the largest element-mean defect.
    """
    if multiplier.kind != "standard":
        raise ValueError("the projector diagnostics are defined for the "
                         "standard (continuous) multiplier kind")
    if samples is None:
        samples = default_fortin_samples()

    from .assembly import element_means

    rot_mult, disp_mult, _ = coupling_blocks(mesh, layout, multiplier)
    C = multiplier.coeffs
    rule = ref.QUADRATURE
    areas = ref.triangle_areas(mesh.coords())
    hats = ref.hat_table(rule)
    bub = ref.bubble_table(rule)

    worst_identity = 0.0
    worst_mean = 0.0
    per_sample = {}
    for sample in samples:
        q = np.concatenate([
            multiplier_weighted_projection(mesh, layout, multiplier,
                                           lambda x, y, c=c: sample.psi(x, y)[..., c])
            for c in range(2)
        ])
        rv = constraint_interpolant(mesh, layout, sample.v)

        b_disc = rot_mult.T @ q - disp_mult.T @ rv
        b_cont = np.concatenate([
            C @ integrate_against_hats(mesh, lambda x, y, c=c: sample.psi(x, y)[..., c])
            - C @ integrate_against_hats(mesh, lambda x, y, c=c: sample.grad_v(x, y)[..., c])
            for c in range(2)
        ])
        identity = float(np.abs(b_disc - b_cont).max())

        # integrate the interpolant from its pointwise values, independently
        # of the algebra that produced the bubble coefficients
        pv = _padded_vertex_coeffs(layout, rv[:layout.m])[mesh.triangles]
        vals = np.einsum("qv,tv->tq", hats, pv) + rv[layout.m:, None] * bub[None, :]
        means_h = np.einsum("q,tq->t", rule.weights, vals) * areas
        mean = float(np.abs(means_h - element_means(mesh, sample.v)).max())

        per_sample[sample.name] = {"identity": identity, "mean": mean}
        worst_identity = max(worst_identity, identity)
        worst_mean = max(worst_mean, mean)
    return FortinReport(identity_defect=worst_identity, mean_defect=worst_mean,
                        per_sample=per_sample)


# ---------------------------------------------------------------------------
# discrete stability constant

@dataclass
class InfSupReport:
    kind: str
    hs: list
    values: list

    @property
    def min_over_max(self) -> float:
        return min(self.values) / max(self.values)

    @property
    def failures(self) -> list:
        return [h for h, v in zip(self.hs, self.values) if v <= 1e-10]


def infsup_constant(mesh: Mesh, layout: DofLayout, multiplier: MultiplierBasis) -> float:
    """Smallest singular value of the mass-scaled multiplier/primal coupling.

    Both sides are symmetrically scaled by their mass matrices, which makes
    the value mesh-size invariant; it must stay bounded away from zero under
    refinement for the discrete problem to be uniformly stable.
    """
    M_mult = multiplier_mass(mesh, multiplier).toarray()
    W = multiplier_primal_gram(mesh, multiplier, layout).toarray()
    idx = layout.interior_vertices
    M_s = scalar_vertex_gram(mesh, "hat", "hat")[idx][:, idx].toarray()

    L_mult = dla.cholesky(M_mult, lower=True)
    L_s = dla.cholesky(M_s, lower=True)
    B = dla.solve_triangular(L_mult, W, lower=True)
    B = dla.solve_triangular(L_s, B.T, lower=True).T
    return float(dla.svdvals(B).min())


def infsup_estimate(meshes: Sequence[Mesh], kind: str,
                    weighting="equal") -> InfSupReport:
    """Stability constants over a mesh sequence (at least two meshes)."""
    if len(meshes) < 2:
        raise ValueError("need at least two meshes to assess uniformity")
    hs, values = [], []
    for mesh in meshes:
        cls = classify(mesh)
        layout = build_layout(mesh, cls)
        mult = build_multiplier(kind, mesh, cls, weighting)
        hs.append(mesh.h)
        values.append(infsup_constant(mesh, layout, mult))
    return InfSupReport(kind=kind, hs=hs, values=values)
