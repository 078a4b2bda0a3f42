"""Global finite element spaces and the boundary-modified multiplier bases.

On a triangulation with n vertices (m of them interior) and nt triangles,
the library uses

* the full P1 space (all vertices),
* its clamped subspace (interior vertices only, dimension m),
* the bubble space (one cubic bubble per triangle),
* the deflection space = clamped P1 + bubbles,
* the rotation space = two clamped P1 components,

and a scalar multiplier space of dimension m in one of two flavours:

* kind "standard": modified nodal hats (continuous),
* kind "dual": modified biorthogonal duals (discontinuous).

Both flavours attach one basis function to each interior vertex.  Near the
boundary the function additionally absorbs the unmodified functions of its
boundary neighbours, with nonnegative weights that sum to one per boundary
vertex, so that constants stay exactly representable.  The basis is stored
as a sparse coefficient matrix against the unmodified nodal/dual functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import ref_element as ref
from .mesh import Mesh, MeshError, VertexClassification, validate_interior_vertex_assumption

KINDS = ("standard", "dual")


@dataclass
class DofLayout:
    """Global numbering shared by all spaces on one mesh.

    Clamped P1 dofs are the interior vertices in ascending order; bubble
    dofs follow them inside the deflection space.  Vector spaces use the
    x-block/y-block convention: component c of scalar dof i is c*m + i.
    """

    m: int    # interior vertices = clamped P1 dimension
    n: int    # all vertices = full P1 dimension
    nb: int   # triangles = bubble dimension
    vertex_to_interior: np.ndarray  # (n,), -1 for boundary vertices
    interior_vertices: np.ndarray   # (m,)
    bubble_dofs: np.ndarray         # (nb,), positions inside the deflection space

    @property
    def dim_deflection(self) -> int:
        return self.m + self.nb

    @property
    def dim_rotation(self) -> int:
        return 2 * self.m


@dataclass
class MultiplierBasis:
    """Modified multiplier basis as sparse rows over unmodified functions.

    coeffs[i, j] is the weight of unmodified function j (nodal hat for the
    standard kind, dual function for the dual kind) inside modified basis
    function i; row i belongs to the i-th interior vertex.
    """

    kind: str
    coeffs: sp.csr_matrix           # (m, n)
    interior_vertices: np.ndarray   # (m,)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def unmodified_coefficients(self, coefficients: np.ndarray) -> np.ndarray:
        """Expand multiplier coefficients to the unmodified basis, shape (n,)."""
        return self.coeffs.T @ coefficients

    def local_value_table(self, rule: ref.QuadratureRule = ref.QUADRATURE) -> np.ndarray:
        """Unmodified local values at quadrature points, shape (nq, 3)."""
        return ref.hat_table(rule) if self.kind == "standard" else ref.dual_table(rule)


def build_layout(mesh: Mesh, classification: VertexClassification) -> DofLayout:
    """Create the shared dof numbering; refuses meshes that the boundary
    modification cannot handle (triangles with all vertices on the boundary).
    """
    report = validate_interior_vertex_assumption(mesh)
    if not report.ok:
        raise MeshError(
            "mesh has triangles with all vertices on the boundary: "
            f"{report.offending}")
    n = mesh.num_vertices
    interior = classification.interior
    m = len(interior)
    v2i = np.full(n, -1, dtype=np.int64)
    v2i[interior] = np.arange(m)
    v2i.setflags(write=False)
    return DofLayout(m=m, n=n, nb=mesh.num_triangles,
                     vertex_to_interior=v2i,
                     interior_vertices=interior,
                     bubble_dofs=m + np.arange(mesh.num_triangles))


def build_multiplier(kind: str, mesh: Mesh, classification: VertexClassification,
                     weighting="equal") -> MultiplierBasis:
    """Construct the boundary-modified multiplier basis of the given kind.

    With ``weighting="equal"`` each boundary vertex distributes its
    unmodified function equally over its interior edge-neighbours.  A
    custom weighting is a dict ``{boundary_vertex: {interior_vertex: w}}``
    with nonnegative weights summing to one per boundary vertex.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown multiplier kind {kind!r}, expected one of {KINDS}")
    report = validate_interior_vertex_assumption(mesh)
    if not report.ok:
        raise MeshError(
            "mesh has triangles with all vertices on the boundary: "
            f"{report.offending}")

    interior = classification.interior
    m, n = len(interior), mesh.num_vertices
    row_of = {int(v): r for r, v in enumerate(interior)}
    interior_set = set(row_of)

    rows = list(range(m))
    cols = [int(v) for v in interior]
    data = [1.0] * m
    for j in classification.boundary:
        j = int(j)
        nbrs = [v for v in classification.edge_neighbors[j] if v in interior_set]
        if not nbrs:
            raise MeshError(f"boundary vertex {j} has no interior edge-neighbour; "
                            "cannot distribute its basis function")
        if weighting == "equal":
            weights = {i: 1.0 / len(nbrs) for i in nbrs}
        else:
            weights = {int(i): float(w) for i, w in weighting[j].items()}
            if set(weights) - set(nbrs):
                raise ValueError(f"weights of boundary vertex {j} refer to "
                                 "non-neighbouring vertices")
            if min(weights.values()) < 0.0:
                raise ValueError(f"negative weight at boundary vertex {j}")
            if abs(sum(weights.values()) - 1.0) > 1e-12:
                raise ValueError(f"weights of boundary vertex {j} must sum to 1")
        for i, w in weights.items():
            if w:
                rows.append(row_of[i])
                cols.append(j)
                data.append(w)

    coeffs = sp.csr_matrix((data, (rows, cols)), shape=(m, n))
    return MultiplierBasis(kind=kind, coeffs=coeffs, interior_vertices=interior)


# ---------------------------------------------------------------------------
# Gram matrices of the nodal / dual vertex bases (degree-5 quadrature)

_LOCAL_TABLES = {
    "hat": ref.hat_table,
    "dual": ref.dual_table,
}


def scalar_vertex_gram(mesh: Mesh, row_basis: str, col_basis: str) -> sp.csr_matrix:
    """(n x n) Gram matrix between vertex-attached bases ("hat" or "dual")."""
    rule = ref.QUADRATURE
    rows_t = _LOCAL_TABLES[row_basis](rule)
    cols_t = _LOCAL_TABLES[col_basis](rule)
    local = np.einsum("q,qi,qj->ij", rule.weights, rows_t, cols_t)
    coords = mesh.coords()
    areas = ref.triangle_areas(coords)
    vals = areas[:, None, None] * local[None, :, :]
    tris = mesh.triangles
    i = np.repeat(tris, 3, axis=1).ravel()
    j = np.tile(tris, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.csr_matrix((vals.ravel(), (i, j)), shape=(n, n))


def multiplier_mass(mesh: Mesh, multiplier: MultiplierBasis) -> sp.csr_matrix:
    """(m x m) mass matrix of the modified multiplier basis."""
    basis = "hat" if multiplier.kind == "standard" else "dual"
    gram = scalar_vertex_gram(mesh, basis, basis)
    return multiplier.coeffs @ gram @ multiplier.coeffs.T


def multiplier_primal_gram(mesh: Mesh, multiplier: MultiplierBasis,
                           layout: DofLayout) -> sp.csr_matrix:
    """(m x m) coupling int mu_i * hat_j over the interior hats."""
    basis = "hat" if multiplier.kind == "standard" else "dual"
    gram = scalar_vertex_gram(mesh, basis, "hat")
    return (multiplier.coeffs @ gram)[:, layout.interior_vertices]


# ---------------------------------------------------------------------------
# pointwise diagnostics

def partition_of_unity_defect(mesh: Mesh, multiplier: MultiplierBasis) -> float:
    """Max deviation of sum_i mu_i from 1 over all quadrature points."""
    w = multiplier.unmodified_coefficients(np.ones(multiplier.dim))
    table = multiplier.local_value_table()
    vals = np.einsum("qv,tv->tq", table, w[mesh.triangles])
    return float(np.abs(vals - 1.0).max())


def _interior_edges(mesh: Mesh) -> list[tuple[int, int, int, int]]:
    """(a, b, tri1, tri2) for every edge shared by two triangles, a < b."""
    seen: dict[tuple[int, int], int] = {}
    out = []
    for k, tri in enumerate(mesh.triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            if key in seen:
                out.append((key[0], key[1], seen[key], k))
            else:
                seen[key] = k
    return out


def edge_continuity_defect(mesh: Mesh, multiplier: MultiplierBasis,
                           params=(0.25, 0.5, 0.75)) -> float:
    """Max jump of any multiplier basis function across interior edges.

    Standard-kind bases are continuous (defect at rounding level); dual-kind
    bases are genuinely discontinuous and give an O(1) defect.
    """
    table_kind = multiplier.kind
    coeffs = multiplier.coeffs.tocsc()
    tris = mesh.triangles
    worst = 0.0
    for a, b, t1, t2 in _interior_edges(mesh):
        for s in params:
            side = []
            for t in (t1, t2):
                verts = tris[t]
                lam = np.zeros(3)
                lam[list(verts).index(a)] = 1.0 - s
                lam[list(verts).index(b)] = s
                loc = lam if table_kind == "standard" else 4.0 * lam - 1.0
                side.append(coeffs[:, verts] @ loc)
            worst = max(worst, float(np.abs(side[0] - side[1]).max()))
    return worst


# ---------------------------------------------------------------------------
# approximation-property measurement

def best_approximation_error(mesh: Mesh, multiplier: MultiplierBasis,
                             probe) -> float:
    """L2 distance from the probe to the span of the multiplier basis.

    The probe is projected in L2 onto the span; the error integral uses the
    same degree-5 rule as the projection, evaluated element by element.
    """
    from scipy.sparse.linalg import spsolve

    rule = ref.QUADRATURE
    coords = mesh.coords()
    areas = ref.triangle_areas(coords)
    pts = ref.physical_points(coords, rule)
    pvals = np.asarray(probe(pts[..., 0], pts[..., 1]), dtype=float)
    table = multiplier.local_value_table(rule)

    # rhs against unmodified functions, then mapped through the basis rows
    cell = np.einsum("q,tq,qv->tv", rule.weights, pvals, table) * areas[:, None]
    rhs_unmod = np.zeros(mesh.num_vertices)
    np.add.at(rhs_unmod, mesh.triangles.ravel(), cell.ravel())
    rhs = multiplier.coeffs @ rhs_unmod

    mass = multiplier_mass(mesh, multiplier)
    coef = spsolve(mass.tocsc(), rhs)

    w = multiplier.unmodified_coefficients(coef)
    proj = np.einsum("qv,tv->tq", table, w[mesh.triangles])
    err2 = np.einsum("q,tq->t", rule.weights, (pvals - proj) ** 2) @ areas
    return float(np.sqrt(max(err2, 0.0)))


def best_approximation_errors(kind: str, meshes, probe,
                              weighting="equal") -> list[float]:
    """Best-approximation errors of a probe over a mesh sequence."""
    from .mesh import classify

    errors = []
    for mesh in meshes:
        cls = classify(mesh)
        mult = build_multiplier(kind, mesh, cls, weighting)
        errors.append(best_approximation_error(mesh, mult, probe))
    return errors
