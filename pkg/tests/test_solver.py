import numpy as np
import pytest

from rmplate import assembly as asm
from rmplate import solver as slv
from rmplate import spaces
from rmplate.mesh import generate_crisscross
from rmplate.solver import condensed_system, full_matrix, full_rhs


def unit_g(x, y):
    return np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))


@pytest.fixture(scope="module")
def mms_case(material):
    return asm.default_manufactured_case(material, 0.1)


# ---------------------------------------------------------------------------
# full path

def test_zero_loads_give_zero_solution(setups, material):
    mesh, _, layout, mults = setups[2]
    system = asm.assemble(mesh, layout, mults["dual"], material, 0.1, asm.Loads())
    for solve in (slv.solve_full, slv.solve_condensed):
        sol = solve(system)
        assert np.abs(sol.rotation).max() == 0.0
        assert np.abs(sol.deflection).max() == 0.0
        assert np.abs(sol.shear).max() == 0.0


def test_doubling_load_doubles_solution(setups, material):
    mesh, _, layout, mults = setups[3]
    s1 = asm.assemble(mesh, layout, mults["standard"], material, 0.1, asm.Loads(g=unit_g))
    s2 = asm.assemble(mesh, layout, mults["standard"], material, 0.1,
                      asm.Loads(g=lambda x, y: 2.0 * unit_g(x, y)))
    a, b = slv.solve_full(s1), slv.solve_full(s2)
    for x1, x2 in ((a.rotation, b.rotation), (a.deflection, b.deflection),
                   (a.shear, b.shear)):
        assert np.abs(x2 - 2.0 * x1).max() <= 1e-12 * max(np.abs(x2).max(), 1e-30)


@pytest.mark.parametrize("kind", ["standard", "dual"])
def test_full_residual_small(setups, material, mms_case, kind):
    mesh, _, layout, mults = setups[8]
    system = asm.assemble(mesh, layout, mults[kind], material, 0.1, mms_case.loads)
    sol = slv.solve_full(system)
    assert sol.residual <= 1e-10
    assert sol.solver_path == "full"


def test_refinement_reduces_errors(material, mms_case):
    results = {}
    for n in (4, 8):
        mesh = generate_crisscross(n)
        cls = __import__("rmplate").classify(mesh)
        layout = spaces.build_layout(mesh, cls)
        mult = spaces.build_multiplier("dual", mesh, cls)
        system = asm.assemble(mesh, layout, mult, material, 0.01, mms_case.loads)
        sol = slv.solve_full(system)
        results[n] = slv.error_norms(sol, mms_case.fields, mesh, layout, mult, 0.01)
    assert results[8].phi_h1 < results[4].phi_h1
    assert results[8].u_h1 < results[4].u_h1
    assert results[8].zeta_l2 < results[4].zeta_l2


# ---------------------------------------------------------------------------
# condensed path

@pytest.mark.parametrize("t", [0.1, 0.01, 1e-4])
def test_condensed_matches_full(setups, material, t):
    mesh, _, layout, mults = setups[8]
    case = asm.default_manufactured_case(material, t)
    system = asm.assemble(mesh, layout, mults["dual"], material, t, case.loads)
    full = slv.solve_full(system)
    cond = slv.solve_condensed(system)
    assert cond.solver_path == "condensed"
    for a, b in ((cond.rotation, full.rotation), (cond.deflection, full.deflection),
                 (cond.shear, full.shear)):
        assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(b)


def test_condensed_refuses_standard_kind(setups, material):
    mesh, _, layout, mults = setups[2]
    system = asm.assemble(mesh, layout, mults["standard"], material, 0.1, asm.Loads())
    with pytest.raises(ValueError, match="dual"):
        slv.solve_condensed(system)


def test_condensed_reduction_on_coarsest_mesh(setups, material, mms_case):
    # one interior vertex: 9 unknowns collapse to 7 after elimination
    mesh, _, layout, mults = setups[1]
    system = asm.assemble(mesh, layout, mults["dual"], material, 0.1, mms_case.loads)
    assert system.num_unknowns == 9
    D = system.rot_mult.toarray()
    np.testing.assert_allclose(D, np.eye(2) / 3.0, atol=1e-15)
    K_red, b_red, _ = condensed_system(system)
    assert K_red.shape == (7, 7)
    assert b_red.shape == (7,)
    sol = slv.solve_condensed(system)
    assert sol.residual <= 1e-9


def test_condensed_system_empirically_nonsingular(setups, material, mms_case):
    # the reduced matrix is nonsymmetric as assembled; record its spectrum
    # empirically instead of asserting definiteness
    for n in (2, 4):
        mesh, _, layout, mults = setups[n]
        system = asm.assemble(mesh, layout, mults["dual"], material, 0.1,
                              mms_case.loads)
        K_red, _, _ = condensed_system(system)
        dense = K_red.toarray()
        assert abs(dense - dense.T).max() > 1e-8  # genuinely nonsymmetric
        eigs = np.linalg.eigvals(dense)
        min_abs = np.abs(eigs).min()
        print(f"n={n}: reduced spectrum min|eig|={min_abs:.3e} "
              f"min Re={eigs.real.min():.3e} max Re={eigs.real.max():.3e}")
        assert min_abs > 1e-12


# ---------------------------------------------------------------------------
# error norms

def test_error_norms_consistent_for_representable_fields(setups, material, mms_case):
    # a discrete solution measured against its own field evaluation is exact
    mesh, _, layout, mults = setups[3]
    mult = mults["standard"]
    system = asm.assemble(mesh, layout, mult, material, 0.1, mms_case.loads)
    sol = slv.solve_full(system)
    fields = slv.discrete_fields(sol, mesh, layout, mult)
    err = slv.error_norms(sol, fields, mesh, layout, mult, 0.1)
    assert err.phi_h1 <= 1e-12
    assert err.u_h1 <= 1e-12
    assert err.zeta_l2 <= 1e-12


def test_zero_solution_reproduces_exact_deflection_norm(material, mms_case):
    # || u* ||_H1 = 1/126 for the default deflection on the unit square
    mesh = generate_crisscross(32)
    cls = __import__("rmplate").classify(mesh)
    layout = spaces.build_layout(mesh, cls)
    mult = spaces.build_multiplier("dual", mesh, cls)
    zero = slv.PlateSolution(rotation=np.zeros(2 * layout.m),
                             deflection=np.zeros(layout.dim_deflection),
                             shear=np.zeros(2 * layout.m),
                             solver_path="full", residual=0.0)
    err = slv.error_norms(zero, mms_case.fields, mesh, layout, mult, 0.1)
    assert err.u_h1 == pytest.approx(1 / 126, abs=1e-10)


def test_zeta_tl2_is_t_times_l2(setups, material, mms_case):
    mesh, _, layout, mults = setups[2]
    mult = mults["dual"]
    system = asm.assemble(mesh, layout, mult, material, 0.1, mms_case.loads)
    sol = slv.solve_full(system)
    err = slv.error_norms(sol, mms_case.fields, mesh, layout, mult, 0.1)
    assert err.zeta_tl2 == pytest.approx(0.1 * err.zeta_l2, rel=1e-14)


# ---------------------------------------------------------------------------
# projector diagnostics

def _fe_scalar_field(mesh, layout, mult, deflection):
    sol = slv.PlateSolution(rotation=np.zeros(2 * layout.m), deflection=deflection,
                            shear=np.zeros(2 * layout.m), solver_path="full",
                            residual=0.0)
    return slv.discrete_fields(sol, mesh, layout, mult)


def test_interpolant_fixes_clamped_p1_functions(setups):
    mesh, _, layout, mults = setups[3]
    rng = np.random.default_rng(11)
    p = rng.standard_normal(layout.m)
    fields = _fe_scalar_field(mesh, layout, mults["standard"],
                              np.concatenate([p, np.zeros(layout.nb)]))
    coeffs = slv.constraint_interpolant(mesh, layout, fields.u)
    np.testing.assert_allclose(coeffs[:layout.m], p, atol=1e-12)
    np.testing.assert_allclose(coeffs[layout.m:], 0.0, atol=1e-12)


def test_interpolant_matches_means_of_single_bubble(setups):
    mesh, _, layout, mults = setups[3]
    deflection = np.zeros(layout.dim_deflection)
    deflection[layout.m + 5] = 1.0
    fields = _fe_scalar_field(mesh, layout, mults["standard"], deflection)
    coeffs = slv.constraint_interpolant(mesh, layout, fields.u)
    # the P1 part of a bubble is small next to the bubble's unit peak
    assert np.abs(coeffs[:layout.m]).max() <= 0.5
    # its element means are matched exactly
    from rmplate.assembly import element_means
    from rmplate.ref_element import QUADRATURE, bubble_table, hat_table, triangle_areas
    areas = triangle_areas(mesh.coords())
    pv = np.zeros(mesh.num_vertices)
    pv[layout.interior_vertices] = coeffs[:layout.m]
    vals = (np.einsum("qv,tv->tq", hat_table(), pv[mesh.triangles])
            + coeffs[layout.m:, None] * bubble_table()[None, :])
    means = np.einsum("q,tq->t", QUADRATURE.weights, vals) * areas
    np.testing.assert_allclose(means, element_means(mesh, fields.u), atol=1e-12)


def test_fortin_identity_on_polynomial_samples(setups):
    mesh, _, layout, mults = setups[4]
    report = slv.fortin_diagnostics(mesh, layout, mults["standard"])
    assert report.identity_defect <= 1e-10
    assert report.mean_defect <= 1e-12
    assert set(report.per_sample) == {"x-rotation", "y-rotation", "rotation-only"}


def test_fortin_refuses_dual_kind(setups):
    mesh, _, layout, mults = setups[4]
    with pytest.raises(ValueError, match="standard"):
        slv.fortin_diagnostics(mesh, layout, mults["dual"])


# ---------------------------------------------------------------------------
# stability estimator

@pytest.mark.parametrize("kind", ["standard", "dual"])
def test_infsup_single_multiplier_value(setups, kind):
    # one interior vertex: the basis is the constant 1, the coupling is
    # (1/3) / (||1|| ||hat||) = sqrt(6)/3
    mesh, _, layout, mults = setups[1]
    beta = slv.infsup_constant(mesh, layout, mults[kind])
    assert beta == pytest.approx(np.sqrt(6) / 3, rel=1e-12)


@pytest.mark.parametrize("kind", ["standard", "dual"])
def test_infsup_uniform_over_refinement(kind):
    meshes = [generate_crisscross(n) for n in (2, 4, 8)]
    report = slv.infsup_estimate(meshes, kind)
    assert report.kind == kind
    assert min(report.values) > 1e-3
    assert report.min_over_max >= 0.5
    assert report.failures == []


def test_infsup_needs_two_meshes():
    with pytest.raises(ValueError, match="two meshes"):
        slv.infsup_estimate([generate_crisscross(2)], "dual")


# ---------------------------------------------------------------------------
# discrete field evaluation

def test_discrete_fields_match_nodal_values(setups, material, mms_case):
    mesh, _, layout, mults = setups[2]
    mult = mults["dual"]
    system = asm.assemble(mesh, layout, mult, material, 0.1, mms_case.loads)
    sol = slv.solve_full(system)
    fields = slv.discrete_fields(sol, mesh, layout, mult)
    # at interior vertices the deflection equals its hat coefficient
    # (bubbles vanish there) and the rotation components likewise
    for r, v in enumerate(layout.interior_vertices):
        x, y = mesh.vertices[v]
        assert fields.u(x, y) == pytest.approx(sol.deflection[r], abs=1e-13)
        phi = fields.phi(x, y)
        assert phi[0] == pytest.approx(sol.rotation[r], abs=1e-13)
        assert phi[1] == pytest.approx(sol.rotation[layout.m + r], abs=1e-13)
