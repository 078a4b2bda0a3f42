"""Command-line driver: `rmplate study` and `rmplate verify`.

Both subcommands read an optional flat ``key = value`` config file; every
config key can be overridden by the flag of the same name.  Recognized
keys: mesh-family, mesh-n, t, kind, path, mms, out, E, nu, kappa, workers.
Exit code 0 means every case / check passed.
"""

from __future__ import annotations

import argparse
import sys

from .study import StudyConfig, run_convergence_study, run_verifications, write_csv

_KIND_CHOICES = {"std": ("standard",), "dual": ("dual",), "both": ("standard", "dual")}
_PATH_CHOICES = {"full": ("full",), "condensed": ("condensed",),
                 "both": ("full", "condensed")}


def load_config_file(path) -> dict:
    """Parse a flat `key = value` file; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _parse_int_list(text) -> tuple:
    return tuple(int(tok) for tok in str(text).split(",") if tok.strip())


def _parse_float_list(text) -> tuple:
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--mesh-family", choices=sorted(["crisscross", "diagonal"]))
    parser.add_argument("--mesh-n", help="comma-separated refinement levels, e.g. 4,8,16,32")
    parser.add_argument("--t", help="comma-separated thickness values in (0,1)")
    parser.add_argument("--kind", choices=sorted(_KIND_CHOICES))
    parser.add_argument("--path", choices=sorted(_PATH_CHOICES))
    parser.add_argument("--mms", choices=["default", "none"])
    parser.add_argument("--E", type=float, help="Young's modulus")
    parser.add_argument("--nu", type=float, help="Poisson ratio in (0, 0.5)")
    parser.add_argument("--kappa", type=float, help="shear correction factor")
    parser.add_argument("--workers", type=int, help="concurrent study cases")


def build_config(args: argparse.Namespace) -> StudyConfig:
    values = load_config_file(args.config) if args.config else {}
    for flag in ("mesh-family", "mesh-n", "t", "kind", "path", "mms",
                 "E", "nu", "kappa", "workers", "out"):
        attr = flag.replace("-", "_")
        cli_value = getattr(args, attr, None)
        if cli_value is not None:
            values[flag] = cli_value

    kwargs = {}
    if "mesh-family" in values:
        kwargs["mesh_family"] = values["mesh-family"]
    if "mesh-n" in values:
        kwargs["levels"] = _parse_int_list(values["mesh-n"])
    if "t" in values:
        kwargs["t_values"] = _parse_float_list(values["t"])
    if "kind" in values:
        kwargs["kinds"] = _KIND_CHOICES[values["kind"]]
    if "path" in values:
        kwargs["paths"] = _PATH_CHOICES[values["path"]]
    if "mms" in values:
        kwargs["mms"] = values["mms"]
    if "out" in values:
        kwargs["out"] = values["out"]
    if "E" in values:
        kwargs["E"] = float(values["E"])
    if "nu" in values:
        kwargs["nu"] = float(values["nu"])
    if "kappa" in values:
        kwargs["shear_correction"] = float(values["kappa"])
    if "workers" in values:
        kwargs["workers"] = int(values["workers"])
    return StudyConfig(**kwargs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rmplate",
        description="Convergence studies and verification checks for the "
                    "locking-free clamped plate discretizations")
    sub = parser.add_subparsers(dest="command", required=True)

    study_p = sub.add_parser("study", help="run a convergence study and write a CSV")
    _add_common_flags(study_p)
    study_p.add_argument("--out", help="output CSV path")

    verify_p = sub.add_parser("verify", help="run the verification checks")
    _add_common_flags(verify_p)

    args = parser.parse_args(argv)
    config = build_config(args)

    if args.command == "study":
        records, failures = run_convergence_study(config)
        write_csv(records, config.out)
        print(f"wrote {len(records)} records to {config.out}")
        for rec in records:
            eocs = ", ".join(
                f"{name}={val:.3f}" if val is not None else f"{name}=-"
                for name, val in (("eoc_phi", rec.eoc_phi), ("eoc_u", rec.eoc_u),
                                  ("eoc_zeta_tL2", rec.eoc_zeta_tL2)))
            print(f"  {rec.kind:8s} t={rec.t:<8g} n={rec.n:<3d} {rec.solve_path:9s} "
                  f"err_phi={rec.err_phi_H1:.3e} err_u={rec.err_u_H1:.3e} {eocs}")
        for failure in failures:
            print(f"  FAILED {failure.kind} t={failure.t} n={failure.n} "
                  f"{failure.solve_path}: {failure.message}", file=sys.stderr)
        return 1 if failures else 0

    report = run_verifications(config)
    for line in report.lines():
        print(line)
    print("all checks passed" if report.ok else "some checks FAILED")
    return 0 if report.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
