"""Assembly of the sparse saddle-point blocks for the clamped plate.

With rotation phi (two clamped P1 components), deflection u (clamped P1
plus bubbles) and the scaled shear multiplier zeta (two modified-multiplier
components), the discrete problem reads

    bend(phi, psi) + lam (phi - grad u, psi - grad v) + (psi - grad v, zeta)
        = (g, v) + (f, psi)
    (phi - grad u, eta) - c_t (zeta, eta) = 0,     c_t = t^2 / (lam (1 - t^2))

for all test functions (psi, v, eta), where bend is the bending energy
int C eps(phi) : eps(psi) and lam the shear modulus times the correction
factor.  The assembled blocks follow that expansion:

    rot_rot    = bend + lam * vector mass          (2m x 2m)
    rot_disp   = -lam * (grad u, psi)              (2m x nw)
    disp_disp  =  lam * (grad u, grad v)           (nw x nw)
    rot_mult   = (psi, eta)                        (2m x 2m)
    disp_mult  = (grad v, eta)                     (nw x 2m)
    mult_mass  = (zeta, eta)                       (2m x 2m)

nw = m + nt.  The full matrix (see solver) carries rot_mult in the
(phi, zeta) position, -disp_mult in (u, zeta) and -c_t * mult_mass in
(zeta, zeta), which makes it symmetric indefinite.  All integrals use the
degree-5 rule; every matrix integrand is a polynomial of degree <= 4, so
the blocks are quadrature-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import ref_element as ref
from .mesh import Mesh
from .spaces import DofLayout, MultiplierBasis, scalar_vertex_gram


@dataclass(frozen=True)
class Material:
    """Isotropic plate material; defaults E=1, nu=0.3, correction 5/6."""

    E: float = 1.0
    nu: float = 0.3
    shear_correction: float = 5.0 / 6.0

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError("Young's modulus must be positive")
        if not 0.0 < self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in (0, 0.5)")
        if self.shear_correction <= 0.0:
            raise ValueError("shear correction factor must be positive")

    @property
    def shear_modulus(self) -> float:
        """lam = E k / (2 (1 + nu))."""
        return self.E * self.shear_correction / (2.0 * (1.0 + self.nu))

    @property
    def bending_modulus(self) -> float:
        """D_b = E / (12 (1 - nu^2))."""
        return self.E / (12.0 * (1.0 - self.nu ** 2))

    def bending_matrix(self) -> np.ndarray:
        """Voigt form of eps -> D_b [(1 - nu) eps + nu tr(eps) I].

        Ordering (e_xx, e_yy, 2 e_xy); energies C eps : eps' become
        v' @ B @ v in these coordinates.
        """
        nu = self.nu
        return self.bending_modulus * np.array([
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ])


def shear_scaling(material: Material, t: float) -> float:
    """c_t = t^2 / (lam (1 - t^2)); requires 0 < t < 1."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"plate thickness t={t} must lie in (0, 1)")
    return t ** 2 / (material.shear_modulus * (1.0 - t ** 2))


@dataclass
class Loads:
    """Right-hand side data: transverse load g and rotation forcing f.

    g(x, y) -> scalar array; f(x, y) -> (..., 2) array.  Either may be None.
    """

    g: Optional[Callable] = None
    f: Optional[Callable] = None


@dataclass
class FieldSet:
    """Pointwise-evaluable solution fields (exact or discrete reference).

    u(x, y) -> (...,); grad_u -> (..., 2); phi -> (..., 2);
    grad_phi -> (..., 2, 2) with grad_phi[..., c, d] = d phi_c / d x_d;
    zeta -> (..., 2).
    """

    u: Callable
    grad_u: Callable
    phi: Callable
    grad_phi: Callable
    zeta: Callable


@dataclass
class SaddleSystem:
    """Assembled blocks, loads and metadata of one discrete plate problem."""

    kind: str
    m: int
    nw: int
    rot_rot: sp.csr_matrix
    rot_disp: sp.csr_matrix
    disp_disp: sp.csr_matrix
    rot_mult: sp.csr_matrix
    disp_mult: sp.csr_matrix
    mult_mass: sp.csr_matrix
    shear_factor: float
    load_rot: np.ndarray
    load_disp: np.ndarray
    t: float
    material: Material
    mesh: Mesh = field(repr=False)
    layout: DofLayout = field(repr=False)
    multiplier: MultiplierBasis = field(repr=False)

    @property
    def num_unknowns(self) -> int:
        return 4 * self.m + self.nw


# ---------------------------------------------------------------------------
# elementwise integration helpers

def _geometry(mesh: Mesh):
    coords = mesh.coords()
    areas = ref.triangle_areas(coords)
    grads = ref.hat_gradients(coords, areas)
    return coords, areas, grads


def integrate_against_hats(mesh: Mesh, func) -> np.ndarray:
    """int f * hat_j for every vertex j, shape (n,)."""
    rule = ref.QUADRATURE
    coords, areas, _ = _geometry(mesh)
    pts = ref.physical_points(coords, rule)
    fv = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    cell = np.einsum("q,tq,qv->tv", rule.weights, fv, ref.hat_table(rule)) * areas[:, None]
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.triangles.ravel(), cell.ravel())
    return out


def integrate_against_duals(mesh: Mesh, func) -> np.ndarray:
    """int f * dual_j for every vertex j, shape (n,)."""
    rule = ref.QUADRATURE
    coords, areas, _ = _geometry(mesh)
    pts = ref.physical_points(coords, rule)
    fv = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    cell = np.einsum("q,tq,qv->tv", rule.weights, fv, ref.dual_table(rule)) * areas[:, None]
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.triangles.ravel(), cell.ravel())
    return out


def integrate_against_bubbles(mesh: Mesh, func) -> np.ndarray:
    """int f * bubble_T for every triangle T, shape (nt,)."""
    rule = ref.QUADRATURE
    coords, areas, _ = _geometry(mesh)
    pts = ref.physical_points(coords, rule)
    fv = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    return np.einsum("q,tq,q->t", rule.weights, fv, ref.bubble_table(rule)) * areas


def element_means(mesh: Mesh, func) -> np.ndarray:
    """int f over every triangle, shape (nt,)."""
    rule = ref.QUADRATURE
    coords, areas, _ = _geometry(mesh)
    pts = ref.physical_points(coords, rule)
    fv = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    return np.einsum("q,tq->t", rule.weights, fv) * areas


def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)


def _deflection_gradient_coupling(mesh: Mesh, layout: DofLayout,
                                  value_table: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Matrices int d_c(w-basis) * (vertex function) for c = x, y.

    Rows run over the deflection space (clamped hats then bubbles), columns
    over all n vertex functions described by the local value table.
    """
    rule = ref.QUADRATURE
    coords, areas, grads = _geometry(mesh)
    nt = mesh.num_triangles
    nw, n = layout.dim_deflection, layout.n

    # any vertex function integrates to |T|/3 over the element
    col_int = np.einsum("q,qv->v", rule.weights, value_table)  # = 1/3 each
    bgrad = ref.bubble_gradients(coords, rule, areas)

    hat_rows = layout.vertex_to_interior[mesh.triangles]          # (nt, 3)
    bub_rows = layout.bubble_dofs                                  # (nt,)
    cols = mesh.triangles                                          # (nt, 3)

    blocks = []
    for c in range(2):
        hat_vals = (grads[:, :, c] * areas[:, None])[:, :, None] * col_int[None, None, :]
        r1 = np.repeat(hat_rows, 3, axis=1)
        c1 = np.tile(cols, (1, 3))
        bub_vals = np.einsum("q,tq,qv->tv", rule.weights, bgrad[:, :, c], value_table) * areas[:, None]
        r2 = np.repeat(bub_rows[:, None], 3, axis=1)
        mat = _scatter(np.concatenate([r1.ravel(), r2.ravel()]),
                       np.concatenate([c1.ravel(), cols.ravel()]),
                       np.concatenate([hat_vals.ravel(), bub_vals.ravel()]),
                       (nw, n))
        blocks.append(mat)
    return blocks[0], blocks[1]


def _deflection_stiffness(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    """int grad(w-basis) . grad(w-basis) over the deflection space."""
    rule = ref.QUADRATURE
    coords, areas, grads = _geometry(mesh)
    bgrad = ref.bubble_gradients(coords, rule, areas)
    nw = layout.dim_deflection

    hat_rows = layout.vertex_to_interior[mesh.triangles]
    bub_rows = layout.bubble_dofs

    hh = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    # int grad hat . grad bubble vanishes analytically; keep the quadrature
    # value so the block stays consistent with the rule everywhere
    hb = np.einsum("q,tid,tqd->ti", rule.weights, grads, bgrad) * areas[:, None]
    bb = np.einsum("q,tqd,tqd->t", rule.weights, bgrad, bgrad) * areas

    rows = [np.repeat(hat_rows, 3, axis=1).ravel(),
            np.repeat(hat_rows, 1, axis=1).ravel(),
            np.repeat(bub_rows[:, None], 3, axis=1).ravel(),
            bub_rows]
    cols = [np.tile(hat_rows, (1, 3)).ravel(),
            np.repeat(bub_rows[:, None], 3, axis=1).ravel(),
            hat_rows.ravel(),
            bub_rows]
    vals = [hh.ravel(), hb.ravel(), hb.ravel(), bb]
    return sum(_scatter(r, c, v, (nw, nw)) for r, c, v in zip(rows, cols, vals))


def _rotation_block(mesh: Mesh, layout: DofLayout, material: Material) -> sp.csr_matrix:
    """Bending energy plus lam * vector mass on the rotation space."""
    coords, areas, grads = _geometry(mesh)
    m = layout.m
    lam = material.shear_modulus
    B = material.bending_matrix()

    # Voigt strain rows of the 6 local dofs (3 vertices x 2 components):
    # dof (i, x): (gx, 0, gy); dof (i, y): (0, gy, gx)
    nt = mesh.num_triangles
    strain = np.zeros((nt, 6, 3))
    strain[:, 0:3, 0] = grads[:, :, 0]
    strain[:, 0:3, 2] = grads[:, :, 1]
    strain[:, 3:6, 1] = grads[:, :, 1]
    strain[:, 3:6, 2] = grads[:, :, 0]
    elast = np.einsum("tia,ab,tjb->tij", strain, B, strain) * areas[:, None, None]

    rule = ref.QUADRATURE
    hats = ref.hat_table(rule)
    mass_local = np.einsum("q,qi,qj->ij", rule.weights, hats, hats)
    vec_mass = np.zeros((nt, 6, 6))
    vec_mass[:, 0:3, 0:3] = mass_local[None] * areas[:, None, None]
    vec_mass[:, 3:6, 3:6] = mass_local[None] * areas[:, None, None]

    local = elast + lam * vec_mass
    idof = layout.vertex_to_interior[mesh.triangles]
    dofs = np.concatenate([idof, np.where(idof >= 0, idof + m, -1)], axis=1)  # (nt, 6)
    rows = np.repeat(dofs, 6, axis=1)
    cols = np.tile(dofs, (1, 6))
    return _scatter(rows, cols, local, (2 * m, 2 * m))


def coupling_blocks(mesh: Mesh, layout: DofLayout,
                    multiplier: MultiplierBasis) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """(rot_mult, disp_mult, mult_mass) for a given multiplier basis."""
    m = layout.m
    C = multiplier.coeffs
    if multiplier.kind == "standard":
        vertex_gram = scalar_vertex_gram(mesh, "hat", "hat")
        mult_gram = vertex_gram
        table = ref.hat_table()
    else:
        vertex_gram = scalar_vertex_gram(mesh, "dual", "hat")
        mult_gram = scalar_vertex_gram(mesh, "dual", "dual")
        table = ref.dual_table()

    # rows: interior hats (test), cols: multiplier dofs
    d_scalar = sp.csr_matrix(((C @ vertex_gram)[:, layout.interior_vertices]).T)
    rot_mult = sp.block_diag((d_scalar, d_scalar), format="csr")

    g1, g2 = _deflection_gradient_coupling(mesh, layout, table)
    disp_mult = sp.hstack([g1 @ C.T, g2 @ C.T], format="csr")

    mm = C @ mult_gram @ C.T
    mult_mass = sp.block_diag((mm, mm), format="csr")
    return rot_mult, disp_mult, mult_mass


def assemble(mesh: Mesh, layout: DofLayout, multiplier: MultiplierBasis,
             material: Material, t: float, loads: Loads) -> SaddleSystem:
    """Assemble every block and load vector of the discrete saddle problem."""
    c_t = shear_scaling(material, t)
    m, nw = layout.m, layout.dim_deflection
    lam = material.shear_modulus

    rot_rot = _rotation_block(mesh, layout, material)

    g1_hat, g2_hat = _deflection_gradient_coupling(mesh, layout, ref.hat_table())
    int_cols = layout.interior_vertices
    rot_disp = -lam * sp.vstack([g1_hat[:, int_cols].T, g2_hat[:, int_cols].T], format="csr")

    disp_disp = lam * _deflection_stiffness(mesh, layout)
    rot_mult, disp_mult, mult_mass = coupling_blocks(mesh, layout, multiplier)

    load_rot = np.zeros(2 * m)
    load_disp = np.zeros(nw)
    if loads.g is not None:
        hat_part = integrate_against_hats(mesh, loads.g)
        load_disp[:m] = hat_part[int_cols]
        load_disp[m:] = integrate_against_bubbles(mesh, loads.g)
    if loads.f is not None:
        fx = integrate_against_hats(mesh, lambda x, y: loads.f(x, y)[..., 0])
        fy = integrate_against_hats(mesh, lambda x, y: loads.f(x, y)[..., 1])
        load_rot[:m] = fx[int_cols]
        load_rot[m:] = fy[int_cols]

    return SaddleSystem(
        kind=multiplier.kind, m=m, nw=nw,
        rot_rot=rot_rot.tocsr(), rot_disp=rot_disp.tocsr(),
        disp_disp=disp_disp.tocsr(), rot_mult=rot_mult,
        disp_mult=disp_mult, mult_mass=mult_mass,
        shear_factor=c_t, load_rot=load_rot, load_disp=load_disp,
        t=t, material=material, mesh=mesh, layout=layout, multiplier=multiplier,
    )


# ---------------------------------------------------------------------------
# manufactured solutions

def _broadcasting(fn, trailing: tuple[int, ...]):
    def wrapped(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        out = fn(x, y)
        return np.broadcast_to(np.asarray(out, dtype=float), shape + trailing).copy()
    return wrapped


def _lambdify_scalar(expr, xy):
    import sympy as sym

    f = sym.lambdify(xy, expr, "numpy")
    return _broadcasting(lambda x, y: f(x, y), ())


def _lambdify_stack(exprs, xy, trailing):
    import sympy as sym

    flat = np.array(exprs, dtype=object).reshape(-1)
    fns = [sym.lambdify(xy, e, "numpy") for e in flat]

    def fn(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        cols = [np.broadcast_to(np.asarray(f(x, y), dtype=float), shape) for f in fns]
        return np.stack(cols, axis=-1).reshape(shape + trailing)

    return _broadcasting(fn, trailing)


@dataclass
class ManufacturedCase:
    """Exact fields plus the loads that make them solve the plate problem."""

    fields: FieldSet
    loads: Loads
    t: float
    material: Material


def default_deflection_expression():
    """(x (1-x) y (1-y))^2: clamped to second order on the unit square."""
    import sympy as sym

    x, y = sym.symbols("x y")
    return (x * (1 - x) * y * (1 - y)) ** 2, (x, y)


def default_shear_expression():
    """(sin(pi x) sin(pi y), 0): smooth, vanishing on the unit-square boundary."""
    import sympy as sym

    x, y = sym.symbols("x y")
    return (sym.sin(sym.pi * x) * sym.sin(sym.pi * y), sym.Integer(0)), (x, y)


def build_manufactured_case(u_expr, shear_expr, xy, material: Material,
                            t: float) -> ManufacturedCase:
    """Derive exact fields and forcing from a deflection and a shear profile.

    Given u* (clamped with vanishing gradient on the boundary) and a shear
    profile rho* (vanishing on the boundary), the exact solution is

        phi* = grad u* + c_t rho*,   zeta* = rho*,

    which satisfies the multiplier equation identically, and the forcing

        f* = -div C eps(phi*) + rho* / (1 - t^2),
        g* = div rho* / (1 - t^2)

    closes the first equation.  All fields stay bounded as t -> 0.
    """
    import sympy as sym

    x, y = xy
    c_t = shear_scaling(material, t)
    rho = sym.Matrix(list(shear_expr))
    grad_u = sym.Matrix([sym.diff(u_expr, x), sym.diff(u_expr, y)])
    phi = grad_u + c_t * rho

    Db = material.bending_modulus
    nu = material.nu
    dphi = phi.jacobian([x, y])
    eps = (dphi + dphi.T) / 2
    stress = Db * ((1 - nu) * eps + nu * eps.trace() * sym.eye(2))
    div_stress = sym.Matrix([
        sym.diff(stress[0, 0], x) + sym.diff(stress[0, 1], y),
        sym.diff(stress[1, 0], x) + sym.diff(stress[1, 1], y),
    ])
    f = -div_stress + rho / (1 - t ** 2)
    g = (sym.diff(rho[0], x) + sym.diff(rho[1], y)) / (1 - t ** 2)

    fields = FieldSet(
        u=_lambdify_scalar(u_expr, xy),
        grad_u=_lambdify_stack(list(grad_u), xy, (2,)),
        phi=_lambdify_stack(list(phi), xy, (2,)),
        grad_phi=_lambdify_stack([dphi[0, 0], dphi[0, 1], dphi[1, 0], dphi[1, 1]],
                                 xy, (2, 2)),
        zeta=_lambdify_stack(list(rho), xy, (2,)),
    )
    loads = Loads(g=_lambdify_scalar(g, xy),
                  f=_lambdify_stack(list(f), xy, (2,)))
    return ManufacturedCase(fields=fields, loads=loads, t=t, material=material)


def default_manufactured_case(material: Material, t: float) -> ManufacturedCase:
    u_expr, xy = default_deflection_expression()
    shear_expr, _ = default_shear_expression()
    return build_manufactured_case(u_expr, shear_expr, xy, material, t)
