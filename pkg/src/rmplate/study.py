"""Convergence studies, verification checks and CSV emission."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import ref_element as ref
from .assembly import (Loads, Material, assemble, coupling_blocks,
                       default_manufactured_case)
from .mesh import (Mesh, classify, generate_crisscross, generate_uniform_diagonal,
                   validate_interior_vertex_assumption)
from .solver import (discrete_fields, error_norms, fortin_diagnostics,
                     infsup_constant, solve_condensed, solve_full)
from .spaces import (best_approximation_errors, build_layout, build_multiplier,
                     edge_continuity_defect, partition_of_unity_defect)

MESH_FAMILIES = {
    "crisscross": generate_crisscross,
    "diagonal": generate_uniform_diagonal,
}

CSV_FIELDS = [
    "kind", "t", "n", "h",
    "err_phi_H1", "err_u_H1", "err_zeta_L2", "err_zeta_tL2",
    "eoc_phi", "eoc_u", "eoc_zeta_tL2",
    "beta_h", "solve_path", "wall_time",
]


@dataclass
class StudyConfig:
    mesh_family: str = "crisscross"
    levels: tuple = (4, 8, 16, 32)
    t_values: tuple = (0.1, 0.01, 1e-4)
    kinds: tuple = ("standard", "dual")
    paths: tuple = ("full",)
    mms: str = "default"
    out: str = "study.csv"
    E: float = 1.0
    nu: float = 0.3
    shear_correction: float = 5.0 / 6.0
    workers: int = 1

    def __post_init__(self):
        if self.mesh_family not in MESH_FAMILIES:
            raise ValueError(f"unknown mesh family {self.mesh_family!r}")
        levels = tuple(int(n) for n in self.levels)
        if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be nonempty and strictly increasing")
        object.__setattr__(self, "levels", levels)
        ts = tuple(float(t) for t in self.t_values)
        if not ts or any(not 0.0 < t < 1.0 for t in ts):
            raise ValueError("thickness values must lie in (0, 1)")
        object.__setattr__(self, "t_values", ts)
        for kind in self.kinds:
            if kind not in ("standard", "dual"):
                raise ValueError(f"unknown multiplier kind {kind!r}")
        for path in self.paths:
            if path not in ("full", "condensed"):
                raise ValueError(f"unknown solver path {path!r}")
        if self.mms not in ("default", "none"):
            raise ValueError("mms must be 'default' or 'none'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def material(self) -> Material:
        return Material(E=self.E, nu=self.nu, shear_correction=self.shear_correction)


@dataclass
class ConvergenceRecord:
    kind: str
    t: float
    n: int
    h: float
    err_phi_H1: float
    err_u_H1: float
    err_zeta_L2: float
    err_zeta_tL2: float
    eoc_phi: Optional[float]
    eoc_u: Optional[float]
    eoc_zeta_tL2: Optional[float]
    beta_h: float
    solve_path: str
    wall_time: float


@dataclass
class CaseFailure:
    kind: str
    t: float
    n: int
    solve_path: str
    message: str


def eoc(err_prev: float, err_cur: float, h_prev: float, h_cur: float) -> float:
    """log(e_prev / e_cur) / log(h_prev / h_cur)."""
    return math.log(err_prev / err_cur) / math.log(h_prev / h_cur)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(records, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_FIELDS) + "\n")
        for rec in records:
            fh.write(",".join(_fmt(getattr(rec, name)) for name in CSV_FIELDS) + "\n")


def read_csv(path) -> list[ConvergenceRecord]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header: {header}")
        records = []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            row = dict(zip(CSV_FIELDS, cells))
            records.append(ConvergenceRecord(
                kind=row["kind"], t=float(row["t"]), n=int(row["n"]), h=float(row["h"]),
                err_phi_H1=float(row["err_phi_H1"]), err_u_H1=float(row["err_u_H1"]),
                err_zeta_L2=float(row["err_zeta_L2"]), err_zeta_tL2=float(row["err_zeta_tL2"]),
                eoc_phi=float(row["eoc_phi"]) if row["eoc_phi"] else None,
                eoc_u=float(row["eoc_u"]) if row["eoc_u"] else None,
                eoc_zeta_tL2=float(row["eoc_zeta_tL2"]) if row["eoc_zeta_tL2"] else None,
                beta_h=float(row["beta_h"]), solve_path=row["solve_path"],
                wall_time=float(row["wall_time"]),
            ))
    return records


class _MeshContext:
    """Per-level meshes, layouts, multipliers and stability constants."""

    def __init__(self, config: StudyConfig):
        self.config = config
        generator = MESH_FAMILIES[config.mesh_family]
        self.meshes = {n: generator(n) for n in config.levels}
        self.classifications = {n: classify(mesh) for n, mesh in self.meshes.items()}
        self.layouts = {n: build_layout(self.meshes[n], self.classifications[n])
                        for n in config.levels}
        self.multipliers = {}
        self.betas = {}

    def multiplier(self, kind, n):
        key = (kind, n)
        if key not in self.multipliers:
            self.multipliers[key] = build_multiplier(
                kind, self.meshes[n], self.classifications[n])
        return self.multipliers[key]

    def beta(self, kind, n):
        key = (kind, n)
        if key not in self.betas:
            self.betas[key] = infsup_constant(
                self.meshes[n], self.layouts[n], self.multiplier(kind, n))
        return self.betas[key]


def _expand_paths(kind: str, paths) -> list[str]:
    if "full" in paths and "condensed" in paths:
        # condensation is only defined for the dual kind
        return ["full", "condensed"] if kind == "dual" else ["full"]
    return list(paths)


def _solve_case(ctx: _MeshContext, kind: str, t: float, n: int, path: str,
                loads: Loads, fields, material: Material):
    start = time.perf_counter()
    mesh = ctx.meshes[n]
    layout = ctx.layouts[n]
    mult = ctx.multiplier(kind, n)
    system = assemble(mesh, layout, mult, material, t, loads)
    solution = solve_condensed(system) if path == "condensed" else solve_full(system)
    norms = error_norms(solution, fields, mesh, layout, mult, t) if fields else None
    wall = time.perf_counter() - start
    return solution, norms, wall


def run_convergence_study(config: StudyConfig):
    """Execute every (kind, t, n, path) case; returns (records, failures).

    With mms="default" the errors are measured against the manufactured
    solution.  With mms="none" a uniform transverse load g = 1 is applied
    and each level is compared against the finest level's solution
    (evaluated at the coarse quadrature points); the finest level serves as
    the reference and emits no record.
    """
    ctx = _MeshContext(config)
    material = config.material()

    if config.mms == "default":
        cases = {t: default_manufactured_case(material, t) for t in config.t_values}
        records, failures = _run_mms(ctx, config, material, cases)
    else:
        records, failures = _run_self_convergence(ctx, config, material)

    records.sort(key=lambda r: (r.kind, r.t, r.n, r.solve_path))
    _attach_eoc(records)
    return records, failures


def _run_mms(ctx, config, material, cases):
    tasks = []
    for kind in config.kinds:
        for t in config.t_values:
            for path in _expand_paths(kind, config.paths):
                for n in config.levels:
                    tasks.append((kind, t, n, path))

    records, failures = [], []

    def run(task):
        kind, t, n, path = task
        case = cases[t]
        _, norms, wall = _solve_case(ctx, kind, t, n, path, case.loads,
                                     case.fields, material)
        return ConvergenceRecord(
            kind=kind, t=t, n=n, h=ctx.meshes[n].h,
            err_phi_H1=norms.phi_h1, err_u_H1=norms.u_h1,
            err_zeta_L2=norms.zeta_l2, err_zeta_tL2=norms.zeta_tl2,
            eoc_phi=None, eoc_u=None, eoc_zeta_tL2=None,
            beta_h=ctx.beta(kind, n), solve_path=path, wall_time=wall)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(lambda task: _guarded(run, task), tasks))
    else:
        outcomes = [_guarded(run, task) for task in tasks]
    for task, (rec, err) in zip(tasks, outcomes):
        if rec is not None:
            records.append(rec)
        else:
            failures.append(CaseFailure(kind=task[0], t=task[1], n=task[2],
                                        solve_path=task[3], message=err))
    return records, failures


def _guarded(fn, task):
    try:
        return fn(task), None
    except Exception as exc:  # propagate per-case, keep the study going
        return None, f"{type(exc).__name__}: {exc}"


def _run_self_convergence(ctx, config, material):
    records, failures = [], []
    loads = Loads(g=lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))))
    fine_n = config.levels[-1]
    if len(config.levels) < 2:
        raise ValueError("the uniform-load benchmark needs at least two levels")
    for kind in config.kinds:
        for t in config.t_values:
            for path in _expand_paths(kind, config.paths):
                try:
                    fine_solution, _, _ = _solve_case(
                        ctx, kind, t, fine_n, path, loads, None, material)
                    reference = discrete_fields(
                        fine_solution, ctx.meshes[fine_n], ctx.layouts[fine_n],
                        ctx.multiplier(kind, fine_n))
                except Exception as exc:
                    failures.append(CaseFailure(kind=kind, t=t, n=fine_n,
                                                solve_path=path,
                                                message=f"{type(exc).__name__}: {exc}"))
                    continue
                for n in config.levels[:-1]:
                    try:
                        _, norms, wall = _solve_case(ctx, kind, t, n, path,
                                                     loads, reference, material)
                    except Exception as exc:
                        failures.append(CaseFailure(kind=kind, t=t, n=n,
                                                    solve_path=path,
                                                    message=f"{type(exc).__name__}: {exc}"))
                        continue
                    records.append(ConvergenceRecord(
                        kind=kind, t=t, n=n, h=ctx.meshes[n].h,
                        err_phi_H1=norms.phi_h1, err_u_H1=norms.u_h1,
                        err_zeta_L2=norms.zeta_l2, err_zeta_tL2=norms.zeta_tl2,
                        eoc_phi=None, eoc_u=None, eoc_zeta_tL2=None,
                        beta_h=ctx.beta(kind, n), solve_path=path, wall_time=wall))
    return records, failures


def _attach_eoc(records) -> None:
    prev = {}
    for i, rec in enumerate(records):
        key = (rec.kind, rec.t, rec.solve_path)
        if key in prev:
            p = records[prev[key]]
            records[i] = replace(
                rec,
                eoc_phi=eoc(p.err_phi_H1, rec.err_phi_H1, p.h, rec.h),
                eoc_u=eoc(p.err_u_H1, rec.err_u_H1, p.h, rec.h),
                eoc_zeta_tL2=eoc(p.err_zeta_tL2, rec.err_zeta_tL2, p.h, rec.h),
            )
        prev[key] = i


# ---------------------------------------------------------------------------
# verification suite

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: {self.detail}"


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed or c.skipped for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def run_verifications(config: StudyConfig) -> VerificationReport:
    """Run the structural checks behind the discretization's guarantees."""
    report = VerificationReport()
    generator = MESH_FAMILIES[config.mesh_family]
    meshes = {n: generator(n) for n in config.levels}

    bad = {n: validate_interior_vertex_assumption(meshes[n]) for n in config.levels}
    offending = {n: rep.offending for n, rep in bad.items() if not rep.ok}
    if offending:
        report.checks.append(CheckResult(
            "mesh-validation", False,
            f"triangles with all vertices on the boundary: {offending}"))
        report.checks.append(CheckResult(
            "remaining-checks", False, "skipped: mesh validation failed", skipped=True))
        return report
    report.checks.append(CheckResult(
        "mesh-validation", True,
        f"every triangle has an interior vertex on levels {list(config.levels)}"))

    classifications = {n: classify(meshes[n]) for n in config.levels}
    layouts = {n: build_layout(meshes[n], classifications[n]) for n in config.levels}
    multipliers = {(kind, n): build_multiplier(kind, meshes[n], classifications[n])
                   for kind in config.kinds for n in config.levels}

    # dimension match between multiplier and clamped P1 spaces
    dims_ok = all(multipliers[kind, n].dim == layouts[n].m
                  for kind in config.kinds for n in config.levels)
    report.checks.append(CheckResult(
        "dimension-match", dims_ok,
        "multiplier dimension equals interior-vertex count on every level"))

    # partition of unity
    worst_pou = max(partition_of_unity_defect(meshes[n], multipliers[kind, n])
                    for kind in config.kinds for n in config.levels)
    report.checks.append(CheckResult(
        "partition-of-unity", worst_pou <= 1e-12,
        f"max |sum of basis - 1| = {worst_pou:.2e} (tol 1e-12)"))

    # biorthogonality: reference element and assembled coupling block
    ref_dev = ref.reference_biorthogonality_check()
    report.checks.append(CheckResult(
        "biorthogonality-reference", ref_dev <= 1e-14,
        f"reference-element deviation = {ref_dev:.2e} (tol 1e-14)"))
    if "dual" in config.kinds:
        worst_ratio = 0.0
        for n in config.levels:
            D = coupling_blocks(meshes[n], layouts[n], multipliers["dual", n])[0]
            diag_max = np.abs(D.diagonal()).max()
            off = D - sp.diags(D.diagonal())
            off_max = np.abs(off.toarray()).max() if off.nnz else 0.0
            worst_ratio = max(worst_ratio, off_max / diag_max)
        report.checks.append(CheckResult(
            "biorthogonality-assembled", worst_ratio <= 1e-13,
            f"max off-diagonal / max diagonal = {worst_ratio:.2e} (tol 1e-13)"))

    # continuity of the standard kind across interior edges
    if "standard" in config.kinds:
        worst_jump = max(edge_continuity_defect(meshes[n], multipliers["standard", n])
                         for n in config.levels)
        report.checks.append(CheckResult(
            "continuity-standard", worst_jump <= 1e-12,
            f"max interior-edge jump = {worst_jump:.2e} (tol 1e-12)"))

    # approximation property: constants exactly, smooth probes at rate >= 0.9
    mesh_seq = [meshes[n] for n in config.levels]
    hs = [m.h for m in mesh_seq]
    for kind in config.kinds:
        const_err = max(best_approximation_errors(
            kind, mesh_seq, lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y)))))
        report.checks.append(CheckResult(
            f"constants-reproduced-{kind}", const_err <= 1e-12,
            f"projection error of the constant 1 = {const_err:.2e} (tol 1e-12)"))
        if len(mesh_seq) >= 2:
            probes = {
                "smooth": lambda x, y: 2.0 + np.sin(x + y),
                "boundary-active": lambda x, y: np.asarray(x, dtype=float),
            }
            for label, probe in probes.items():
                errs = best_approximation_errors(kind, mesh_seq, probe)
                rate = eoc(errs[-2], errs[-1], hs[-2], hs[-1])
                report.checks.append(CheckResult(
                    f"approximation-{label}-{kind}", rate >= 0.9,
                    f"finest-transition EOC = {rate:.3f} (>= 0.9)"))

    # uniform stability constant
    for kind in config.kinds:
        betas = [infsup_constant(meshes[n], layouts[n], multipliers[kind, n])
                 for n in config.levels]
        ratio = min(betas) / max(betas)
        ok = ratio >= 0.5 and min(betas) > 1e-3
        report.checks.append(CheckResult(
            f"inf-sup-{kind}", ok,
            f"beta_h = {[f'{b:.4f}' for b in betas]}, min/max = {ratio:.3f} "
            "(>= 0.5, all > 1e-3)"))

    # constraint-preserving projector pair (standard kind)
    if "standard" in config.kinds:
        worst_id, worst_mean = 0.0, 0.0
        for n in config.levels:
            rep = fortin_diagnostics(meshes[n], layouts[n], multipliers["standard", n])
            worst_id = max(worst_id, rep.identity_defect)
            worst_mean = max(worst_mean, rep.mean_defect)
        report.checks.append(CheckResult(
            "fortin-identity", worst_id <= 1e-10,
            f"max identity defect = {worst_id:.2e} (tol 1e-10)"))
        report.checks.append(CheckResult(
            "fortin-element-means", worst_mean <= 1e-12,
            f"max element-mean defect = {worst_mean:.2e} (tol 1e-12)"))

    return report
