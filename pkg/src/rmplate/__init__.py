"""Locking-free mixed finite elements for the clamped Reissner-Mindlin plate.

The discretization couples piecewise-linear rotations, a bubble-enriched
piecewise-linear deflection and a boundary-modified Lagrange multiplier for
the scaled shear stress.  Two multiplier flavours are provided: a standard
(continuous) one and a dual (biorthogonal, discontinuous) one; the latter
admits static condensation of the multiplier.
"""

from .assembly import (FieldSet, Loads, ManufacturedCase, Material, SaddleSystem,
                       assemble, build_manufactured_case, default_manufactured_case)
from .mesh import (Mesh, MeshError, PointLocator, ValidationReport,
                   VertexClassification, classify, generate_crisscross,
                   generate_uniform_diagonal, read_mesh,
                   validate_interior_vertex_assumption, write_mesh)
from .ref_element import (QUADRATURE, QuadratureRule, barycentric_integral,
                          eval_basis, reference_biorthogonality_check)
from .solver import (ErrorNorms, FortinReport, InfSupReport, PlateSolution,
                     discrete_fields, error_norms, fortin_diagnostics,
                     infsup_constant, infsup_estimate, solve_condensed, solve_full)
from .spaces import (DofLayout, MultiplierBasis, best_approximation_errors,
                     build_layout, build_multiplier, edge_continuity_defect,
                     partition_of_unity_defect)
from .study import (CSV_FIELDS, ConvergenceRecord, StudyConfig, eoc, read_csv,
                    run_convergence_study, run_verifications, write_csv)

__version__ = "0.1.0"
