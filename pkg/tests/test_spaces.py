import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from rmplate import mesh as msh
from rmplate import ref_element as ref
from rmplate import spaces


def two_interior_vertex_mesh():
    """Unit square fanned around two interior points; boundary vertex 1
    has exactly two interior edge-neighbours."""
    vertices = np.array([
        [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
        [0.35, 0.5], [0.65, 0.5],
    ])
    triangles = np.array([
        [0, 1, 4], [1, 5, 4], [1, 2, 5], [2, 3, 5], [3, 4, 5], [3, 0, 4],
    ])
    return msh.build_mesh(vertices, triangles)


# ---------------------------------------------------------------------------
# layout

def test_layout_counts_n1(setups):
    mesh, cls, layout, _ = setups[1]
    assert (layout.m, layout.n, layout.nb) == (1, 5, 4)
    assert layout.dim_deflection == 5
    assert layout.dim_rotation == 2


def test_layout_counts_n2(setups):
    _, _, layout, _ = setups[2]
    assert (layout.m, layout.n, layout.nb) == (5, 13, 16)


def test_layout_maps_are_consistent(setups):
    _, cls, layout, _ = setups[4]
    assert layout.n > layout.m
    np.testing.assert_array_equal(layout.interior_vertices, cls.interior)
    for r, v in enumerate(layout.interior_vertices):
        assert layout.vertex_to_interior[v] == r
    assert (layout.vertex_to_interior[cls.boundary] == -1).all()


def test_layout_rejects_invalid_mesh():
    mesh = msh.generate_uniform_diagonal(2)
    cls = msh.classify(mesh)
    with pytest.raises(msh.MeshError, match="all vertices on the boundary"):
        spaces.build_layout(mesh, cls)
    with pytest.raises(msh.MeshError):
        spaces.build_multiplier("standard", mesh, cls)


# ---------------------------------------------------------------------------
# multiplier construction

@pytest.mark.parametrize("kind", ["standard", "dual"])
def test_n1_single_basis_function_is_constant_one(setups, kind):
    mesh, _, _, mults = setups[1]
    mult = mults[kind]
    assert mult.dim == 1
    # distributes every boundary hat/dual onto the centroid function
    np.testing.assert_allclose(mult.coeffs.toarray(), np.ones((1, 5)))
    # pointwise value 1 at every quadrature point of every element
    w = mult.unmodified_coefficients(np.ones(1))
    table = mult.local_value_table()
    vals = np.einsum("qv,tv->tq", table, w[mesh.triangles])
    np.testing.assert_allclose(vals, 1.0, atol=1e-13)


def test_equal_weighting_splits_between_two_interior_neighbors():
    mesh = two_interior_vertex_mesh()
    cls = msh.classify(mesh)
    mult = spaces.build_multiplier("standard", mesh, cls)
    C = mult.coeffs.toarray()
    assert mult.dim == 2
    # boundary vertex 1 neighbours both interior vertices 4 and 5
    np.testing.assert_allclose(C[:, 1], [0.5, 0.5])
    # boundary vertex 0 only neighbours interior vertex 4
    np.testing.assert_allclose(C[:, 0], [1.0, 0.0])


@pytest.mark.parametrize("kind", ["standard", "dual"])
@pytest.mark.parametrize("n", [2, 4, 8])
def test_coefficient_invariants(setups, kind, n):
    mesh, cls, layout, mults = setups[n]
    C = mults[kind].coeffs.toarray()
    assert C.shape == (layout.m, layout.n)
    assert C.min() >= 0.0
    interior_set = set(layout.interior_vertices.tolist())
    for r, v in enumerate(layout.interior_vertices):
        assert C[r, v] == 1.0
        nonzero = np.nonzero(C[r])[0]
        for j in nonzero:
            if j == v:
                continue
            # only boundary edge-neighbours may receive weight
            assert j not in interior_set
            assert int(v) in cls.edge_neighbors[int(j)]
    # each boundary column distributes exactly one unit of weight
    np.testing.assert_allclose(C[:, cls.boundary].sum(axis=0), 1.0, atol=1e-14)
    # equal weighting: 1 / (number of interior neighbours of that boundary vertex)
    for j in cls.boundary:
        nbrs = [v for v in cls.edge_neighbors[int(j)] if v in interior_set]
        expect = 1.0 / len(nbrs)
        col = C[:, int(j)]
        np.testing.assert_allclose(col[col > 0], expect, atol=1e-14)


def test_custom_weighting_accepted_and_validated():
    mesh = two_interior_vertex_mesh()
    cls = msh.classify(mesh)
    weights = {int(j): {} for j in cls.boundary}
    interior_set = set(int(v) for v in cls.interior)
    for j in cls.boundary:
        nbrs = [v for v in cls.edge_neighbors[int(j)] if v in interior_set]
        share = 1.0 / len(nbrs)
        weights[int(j)] = {v: share for v in nbrs}
    weights[1] = {4: 0.3, 5: 0.7}
    mult = spaces.build_multiplier("dual", mesh, cls, weighting=weights)
    np.testing.assert_allclose(mult.coeffs.toarray()[:, 1], [0.3, 0.7])

    bad = {k: dict(v) for k, v in weights.items()}
    bad[1] = {4: -0.1, 5: 1.1}
    with pytest.raises(ValueError, match="negative"):
        spaces.build_multiplier("dual", mesh, cls, weighting=bad)
    bad[1] = {4: 0.3, 5: 0.3}
    with pytest.raises(ValueError, match="sum to 1"):
        spaces.build_multiplier("dual", mesh, cls, weighting=bad)
    bad[1] = {0: 0.5, 4: 0.25, 5: 0.25}
    with pytest.raises(ValueError, match="non-neighbouring"):
        spaces.build_multiplier("dual", mesh, cls, weighting=bad)


def test_unknown_kind_rejected(setups):
    mesh, cls, _, _ = setups[2]
    with pytest.raises(ValueError, match="kind"):
        spaces.build_multiplier("primal", mesh, cls)


@given(n=st.integers(1, 5), kind=st.sampled_from(["standard", "dual"]))
@settings(max_examples=10, deadline=None)
def test_dimension_matches_clamped_space(n, kind):
    mesh = msh.generate_crisscross(n)
    cls = msh.classify(mesh)
    layout = spaces.build_layout(mesh, cls)
    mult = spaces.build_multiplier(kind, mesh, cls)
    assert mult.dim == layout.m


# ---------------------------------------------------------------------------
# pointwise properties

@given(n=st.integers(1, 5), kind=st.sampled_from(["standard", "dual"]))
@settings(max_examples=10, deadline=None)
def test_partition_of_unity(n, kind):
    mesh = msh.generate_crisscross(n)
    cls = msh.classify(mesh)
    mult = spaces.build_multiplier(kind, mesh, cls)
    assert spaces.partition_of_unity_defect(mesh, mult) <= 1e-12


def test_standard_kind_is_continuous_across_edges(setups):
    mesh, _, _, mults = setups[4]
    assert spaces.edge_continuity_defect(mesh, mults["standard"]) <= 1e-12


def test_dual_kind_jump_detected(setups):
    # sanity of the diagnostic: dual bases are genuinely discontinuous
    mesh, _, _, mults = setups[4]
    assert spaces.edge_continuity_defect(mesh, mults["dual"]) > 1e-3


def test_dual_global_biorthogonality(setups):
    mesh, cls, layout, mults = setups[4]
    gram = spaces.multiplier_primal_gram(mesh, mults["dual"], layout).toarray()
    # oracle: one third of each interior vertex's patch area, accumulated
    # directly from the triangle list
    areas = ref.triangle_areas(mesh.coords())
    patch = np.zeros(mesh.num_vertices)
    for k, tri in enumerate(mesh.triangles):
        for v in tri:
            patch[v] += areas[k] / 3.0
    expected = np.diag(patch[layout.interior_vertices])
    np.testing.assert_allclose(gram, expected, atol=1e-14)


# ---------------------------------------------------------------------------
# approximation property

@pytest.mark.parametrize("kind", ["standard", "dual"])
def test_constants_reproduced(kind):
    meshes = [msh.generate_crisscross(n) for n in (2, 4, 8)]
    errs = spaces.best_approximation_errors(
        kind, meshes, lambda x, y: np.ones(np.shape(x)))
    assert max(errs) <= 1e-12


def test_smooth_probe_projection_first_order_standard():
    meshes = [msh.generate_crisscross(n) for n in (4, 8, 16, 32)]
    errs = spaces.best_approximation_errors(
        "standard", meshes, lambda x, y: 2.0 + np.sin(x + y))
    rate = np.log(errs[-2] / errs[-1]) / np.log(2.0)
    assert rate >= 0.9


def test_boundary_active_probe_errors_decrease_dual():
    meshes = [msh.generate_crisscross(n) for n in (4, 8, 16)]
    errs = spaces.best_approximation_errors(
        "dual", meshes, lambda x, y: np.asarray(x, dtype=float))
    assert errs[0] > errs[1] > errs[2]


def test_projection_of_function_in_span_is_exact(setups):
    # any multiplier coefficient vector must be reproduced with zero error
    mesh, _, layout, mults = setups[2]
    mult = mults["standard"]
    coef = np.linspace(0.5, 1.5, mult.dim)
    w = mult.unmodified_coefficients(coef)
    table = mult.local_value_table()

    tris = mesh.triangles
    locator = msh.PointLocator(mesh)

    def func(x, y):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        pts = np.column_stack([np.broadcast_to(x, shape).ravel(),
                               np.broadcast_to(y, shape).ravel()])
        tri, lam = locator.locate(pts)
        vals = np.einsum("pv,pv->p", w[tris[tri]], lam)
        return vals.reshape(shape)

    err = spaces.best_approximation_error(mesh, mult, func)
    assert err <= 1e-12
