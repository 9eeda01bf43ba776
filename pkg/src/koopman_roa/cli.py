"""Command-line interface.

Exit status: 0 when the band is certified (or a non-certifying subcommand
succeeds), 2 when the band is empty, 1 on any error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bounds import BOUND_KINDS, write_bound_csv
from .config import load_config
from .errors import KoopmanError
from .pipeline import (
    Pipeline,
    bound_table,
    export_plot_grid,
    sweep,
    write_artifacts,
    write_coefficient_sequences,
    write_comparison_csv,
    write_eigenfunctions,
    write_json,
)
from . import analyticity as an
from .surrogate import box_grid

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2
COMMANDS = ("spectrum", "eigfn", "radius", "bounds", "certify", "surrogate", "validate", "sweep", "export")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopman-roa",
                                     description="Region-of-attraction certificates from Koopman eigenfunctions.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="configuration JSON file, or a bundled example name (example1, vdp)")
    common.add_argument("--out", help="output directory (default: the configuration's 'outputs')")
    common.add_argument("--bound", choices=BOUND_KINDS, help="override the truncation-error bound")
    common.add_argument("--seed", type=int, help="override the validation seed")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "eigenvalues of the linearization and the non-resonance check",
        "eigfn": "principal eigenfunction coefficients",
        "radius": "convergence radius estimate and the radii S, R",
        "bounds": "tail constants and truncation-error bounds",
        "certify": "full certificate with all artifacts",
        "surrogate": "surrogate-field comparison",
        "validate": "trajectory check of the certified band",
        "sweep": "certificates over a list of N or R values",
        "export": "plot data for the candidate and the band",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "sweep":
            p.add_argument("--axis", choices=("N", "R"), required=True)
            p.add_argument("--values", required=True, help="comma-separated sweep values")
    return parser


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.outputs or f"out/{cfg.name}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def run(args) -> int:
    cfg = load_config(args.config).with_overrides(args.bound, args.seed)
    p = Pipeline(cfg)
    out = _out_dir(args, cfg)
    say = (lambda *a: None) if args.quiet else print
    cmd = args.command

    if cmd == "spectrum":
        spec = p.spectrum()
        write_json(out / "spectrum.json", {
            "lambdas": [{"re": float(v.real), "im": float(v.imag)} for v in spec.lambdas],
            "groups": [list(g) for g in spec.groups], "lambda_m": spec.lambda_m,
            "nonresonant_to": spec.nonresonant_to, "min_gap": spec.min_gap})
        for v in spec.lambdas:
            say(f"lambda = {complex(v):.10g}")
        say(f"non-resonant to degree {spec.nonresonant_to}, min gap {spec.min_gap:.6g}")
        return EXIT_OK
    if cmd == "eigfn":
        write_eigenfunctions(out / "eigenfunctions.json", p)
        for s in p.eigenfunctions():
            say(f"eigenfunction for lambda = {s.lam:.6g}: {len(s.series)} terms to degree {s.series.cap}, "
                f"max block condition {s.max_cond:.3g}")
        return EXIT_OK
    if cmd == "radius":
        rad = p.radius()
        if rad.scan is not None:
            an.write_scan_csv(out / "radius_scan.csv", *rad.scan)
        say(f"rho = {[float(v) for v in rad.rho]}, S = {rad.S} ({rad.S_source}), R = {rad.R} ({rad.R_source})")
        return EXIT_OK
    if cmd == "bounds":
        write_coefficient_sequences(out / "coefficient_sequences.csv", p)
        write_bound_csv(out / "bound_sweep.csv", bound_table(p))
        for i, entry in enumerate(p.constants()):
            for name, c in entry.items():
                if c["value"] is not None:
                    say(f"eigenfunction {i}: {name} = {c['value']:.6g} ({c['source']})")
        for kind in BOUND_KINDS:
            try:
                for b in p.errors(kind=kind):
                    say(f"{kind}: {b.value:.6g}")
            except KoopmanError as exc:
                say(f"{kind}: unavailable ({exc})")
        return EXIT_OK
    if cmd == "sweep":
        values = [v for v in args.values.split(",") if v.strip()]
        res = sweep(cfg, args.axis, [float(v) for v in values], p)
        res.write_csv(out / f"sweep_{args.axis}.csv")
        for r in res.rows:
            say(f"{args.axis} = {r['value']}: {r['status']}, gamma1 = {r['gamma1']:.6g}, gamma2 = {r['gamma2']:.6g}")
        say(f"summary: {res.summary}")
        return EXIT_OK

    cert = p.certificate()
    code = EXIT_OK if cert.status == "certified" else EXIT_EMPTY if cert.status == "empty-band" else EXIT_ERROR
    if cmd == "certify":
        write_artifacts(p, out)
        say(p.summary().rstrip())
    elif cmd == "surrogate":
        s = p.surrogate()
        write_comparison_csv(out / "surrogate_comparison.csv", p.sys, s["field"],
                             box_grid(p.sys.n, cert.R, cfg.grid.surrogate))
        say(f"surrogate gamma1 = {s['gamma1']:.6g} (status {s['status']}); band gamma1 = {cert.gamma1:.6g}")
        say(f"exactness residual {s['exactness_residual']:.3g} (scale {s['exactness_scale']:.3g}), "
            f"spectrum mismatch {s['spectrum_mismatch']:.3g}")
    elif cmd == "validate":
        if cert.status != "certified":
            say(f"certificate status {cert.status}; nothing to validate")
            return code
        rep = p.validation()
        write_json(out / "validation.json", rep.to_dict())
        say(f"{rep.reached}/{rep.samples} sampled band points reached V~ < gamma1 "
            f"(status {rep.status}, min margin {rep.min_margin:.3g})")
        if rep.status != "ok":
            return EXIT_ERROR
    elif cmd == "export":
        files = export_plot_grid(p, out)
        say("wrote " + ", ".join(str(f) for f in files))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except KoopmanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
