"""Triangulations of a polygon and the vertex sets used near the boundary.

Two structured generators are provided for axis-aligned rectangles:

* ``generate_crisscross``: each grid cell is cut into 4 triangles through
  its centroid.  Every triangle touches a centroid, which is interior, so
  the "each triangle has at least one interior vertex" requirement of the
  boundary modification holds on every refinement level.
* ``generate_uniform_diagonal``: each cell is cut by one diagonal.  The
  corner cells always contain triangles with all three vertices on the
  boundary; this generator exists as a negative test for the validator.

Arbitrary conforming meshes can be loaded from a plain-text file
(``read_mesh``); boundary vertices are detected from edge incidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for malformed meshes (orientation, conformity, file format)."""


@dataclass
class Mesh:
    """Immutable triangle mesh.

    vertices: (nv, 2) coordinates
    triangles: (nt, 3) vertex indices, counterclockwise
    boundary_vertex_flags: (nv,) bool, True if the vertex lies on a
        boundary edge (an edge incident to exactly one triangle)
    h: maximum element diameter
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_vertex_flags: np.ndarray
    h: float

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]


@dataclass
class VertexClassification:
    """Interior/boundary split plus the edge-neighbour sets.

    edge_neighbors[i] lists every vertex sharing an edge with i;
    interior_neighbors[i] (defined for interior i) keeps only the interior
    ones; near_boundary_interior is the set of interior vertices with at
    least one boundary neighbour.  All listings are ascending.
    """

    interior: np.ndarray
    boundary: np.ndarray
    edge_neighbors: dict[int, tuple[int, ...]]
    interior_neighbors: dict[int, tuple[int, ...]] = field(repr=False)
    near_boundary_interior: np.ndarray = field(default=None)


@dataclass
class ValidationReport:
    """Result of the interior-vertex check; offending lists triangle indices."""

    ok: bool
    offending: list[int]


def _edge_counts(triangles: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            counts[key] = counts.get(key, 0) + 1
    return counts


def _freeze(mesh: Mesh) -> Mesh:
    for arr in (mesh.vertices, mesh.triangles, mesh.boundary_vertex_flags):
        arr.setflags(write=False)
    return mesh


def build_mesh(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Assemble a Mesh from raw arrays, checking conformity invariants.

    Raises MeshError on nonpositive triangle areas (wrong orientation or
    degenerate elements) or edges shared by more than two triangles.
    Boundary flags and the mesh size h are derived, not taken as input.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (nv, 2) array")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be an (nt, 3) array")
    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
        raise MeshError("triangle vertex index out of range")

    coords = vertices[triangles]
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    bad = np.nonzero(areas <= 0.0)[0]
    if bad.size:
        raise MeshError(f"triangles with nonpositive signed area: {bad.tolist()}")

    counts = _edge_counts(triangles)
    over = [e for e, c in counts.items() if c > 2]
    if over:
        raise MeshError(f"edges shared by more than two triangles: {over}")

    flags = np.zeros(len(vertices), dtype=bool)
    for (a, b), c in counts.items():
        if c == 1:
            flags[a] = True
            flags[b] = True

    # diameter of a triangle is its longest edge
    e = np.stack([coords[:, 1] - coords[:, 0],
                  coords[:, 2] - coords[:, 1],
                  coords[:, 0] - coords[:, 2]])
    h = float(np.sqrt((e ** 2).sum(axis=-1)).max())
    return _freeze(Mesh(vertices=vertices, triangles=triangles,
                        boundary_vertex_flags=flags, h=h))


UNIT_SQUARE = (0.0, 0.0, 1.0, 1.0)


def generate_crisscross(n: int, domain: tuple[float, float, float, float] = UNIT_SQUARE) -> Mesh:
    """n x n grid of cells, each split into 4 triangles through its centroid.

    (n+1)^2 grid vertices followed by n^2 centroids, both numbered
    lexicographically by (y, x); 4 n^2 triangles.  Every triangle contains
    a centroid, hence at least one interior vertex, for any n >= 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, y0, x1, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must be a nondegenerate rectangle")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys)                       # row-major in y
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    gcx, gcy = np.meshgrid(cx, cy)
    cents = np.column_stack([gcx.ravel(), gcy.ravel()])
    vertices = np.vstack([grid, cents])

    ng = (n + 1) * (n + 1)
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + (n + 1)
            v11 = v01 + 1
            c = ng + j * n + i
            tris += [(v00, v10, c), (v10, v11, c), (v11, v01, c), (v01, v00, c)]
    return build_mesh(vertices, np.array(tris))


def generate_uniform_diagonal(n: int, domain: tuple[float, float, float, float] = UNIT_SQUARE) -> Mesh:
    """n x n grid of cells, each split by the bottom-left/top-right diagonal.

    (n+1)^2 vertices, 2 n^2 triangles.  The corner cells contain triangles
    whose three vertices all lie on the boundary, so this family always
    fails the interior-vertex assumption.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, y0, x1, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("domain must be a nondegenerate rectangle")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10 = v00 + 1
            v01 = v00 + (n + 1)
            v11 = v01 + 1
            tris += [(v00, v10, v11), (v00, v11, v01)]
    return build_mesh(vertices, np.array(tris))


def classify(mesh: Mesh) -> VertexClassification:
    """Split vertices into interior/boundary and collect edge-neighbour sets."""
    nv = mesh.num_vertices
    neighbors: list[set[int]] = [set() for _ in range(nv)]
    for tri in mesh.triangles:
        a, b, c = (int(v) for v in tri)
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))

    flags = mesh.boundary_vertex_flags
    interior = np.nonzero(~flags)[0]
    boundary = np.nonzero(flags)[0]
    edge_neighbors = {i: tuple(sorted(neighbors[i])) for i in range(nv)}
    interior_set = set(interior.tolist())
    interior_neighbors = {
        int(i): tuple(j for j in edge_neighbors[int(i)] if j in interior_set)
        for i in interior
    }
    near = np.array(sorted(
        int(i) for i in interior if any(flags[j] for j in edge_neighbors[int(i)])
    ), dtype=np.int64)
    interior.setflags(write=False)
    boundary.setflags(write=False)
    near.setflags(write=False)
    return VertexClassification(
        interior=interior, boundary=boundary,
        edge_neighbors=edge_neighbors,
        interior_neighbors=interior_neighbors,
        near_boundary_interior=near,
    )


def validate_interior_vertex_assumption(mesh: Mesh) -> ValidationReport:
    """Check that every triangle has at least one interior vertex.

    Meshes failing this check cannot carry the boundary-modified
    multiplier spaces and are refused by the space constructors.
    """
    flags = mesh.boundary_vertex_flags
    all_boundary = flags[mesh.triangles].all(axis=1)
    offending = np.nonzero(all_boundary)[0].tolist()
    return ValidationReport(ok=not offending, offending=offending)


# ---------------------------------------------------------------------------
# plain-text mesh files: line 1 "V T", then V lines "x y", then T lines "i j k"

def read_mesh(path) -> Mesh:
    """Read a mesh file; conformity is validated, boundary is re-derived."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise MeshError("mesh file too short")
    nv, nt = int(tokens[0]), int(tokens[1])
    need = 2 + 2 * nv + 3 * nt
    if len(tokens) != need:
        raise MeshError(f"expected {need} tokens in mesh file, found {len(tokens)}")
    flat = tokens[2:]
    vertices = np.array(flat[:2 * nv], dtype=float).reshape(nv, 2)
    triangles = np.array(flat[2 * nv:], dtype=np.int64).reshape(nt, 3)
    return build_mesh(vertices, triangles)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices} {mesh.num_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


class PointLocator:
    """Locate query points in a mesh (nearest centroids, then barycentric test).

    Used to evaluate a finite element solution from one mesh at quadrature
    points of another (self-convergence reference).  Ties on shared edges
    resolve to the candidate triangle with the smallest index.
    """

    def __init__(self, mesh: Mesh, n_candidates: int = 12):
        from scipy.spatial import cKDTree

        self.mesh = mesh
        coords = mesh.coords()
        self._coords = coords
        self._tree = cKDTree(coords.mean(axis=1))
        self._n_candidates = min(n_candidates, mesh.num_triangles)
        # per-triangle affine inverse for barycentric coordinates
        d = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
        self._inv = np.linalg.inv(d)
        self._origin = coords[:, 0]

    def barycentric(self, tri_idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        rel = points - self._origin[tri_idx]
        st = np.einsum("tij,tj->ti", self._inv[tri_idx], rel)
        lam = np.empty((len(points), 3))
        lam[:, 1:] = st
        lam[:, 0] = 1.0 - st.sum(axis=1)
        return lam

    def locate(self, points: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
        """Return (triangle indices, barycentric coords) for (N, 2) points."""
        points = np.atleast_2d(points)
        _, cand = self._tree.query(points, k=self._n_candidates)
        cand = np.atleast_2d(cand)
        cand.sort(axis=1)  # prefer the smallest triangle index among hits
        found = np.full(len(points), -1, dtype=np.int64)
        lam_out = np.zeros((len(points), 3))
        pending = np.arange(len(points))
        for k in range(cand.shape[1]):
            if not pending.size:
                break
            tri = cand[pending, k]
            lam = self.barycentric(tri, points[pending])
            ok = lam.min(axis=1) >= -tol
            hit = pending[ok]
            found[hit] = tri[ok]
            lam_out[hit] = lam[ok]
            pending = pending[~ok]
        if pending.size:
            raise ValueError(f"{pending.size} points not located in mesh "
                             f"(first: {points[pending[0]]})")
        return found, lam_out
