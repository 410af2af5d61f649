"""Command-line entry point: ``heraldsim <verb> ...``.

Exit codes: 0 success, 1 error, 2 comparison failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import generalized_efficiency, wigner
from .errors import HeraldSimError
from .homodyne import read_quadrature_csv
from .pipeline import STAGES, PipelineConfig, compare_runs, run_curves, run_pipeline
from .tomography import ReconstructionReport, maxlik_reconstruct

log = logging.getLogger("heraldsim")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "stages", None) is not None:
        overrides["stages"] = [s.strip() for s in args.stages.split(",") if s.strip()]
    if overrides:
        config = replace(config, **overrides)
    return config


def cmd_run(args) -> int:
    config = _load_config(args)
    manifest = run_pipeline(config)
    for entry in manifest["points"]:
        values = entry.get("reconstructed") or entry.get("model")
        if values:
            print(
                f"point {entry['index']:03d} rate={entry['added_rate_khz']:.3f} kHz  "
                f"rho11={values['rho11']:.4f} |rho01|={values['rho01_mag']:.4f} eff={values['efficiency']:.4f}"
            )
    print(f"manifest: {Path(config.output_dir) / 'manifest.json'}")
    return 0


def cmd_curves(args) -> int:
    config = _load_config(args)
    run_curves(config)
    print(f"curves written to {Path(config.output_dir) / 'curves'}")
    return 0


def cmd_reconstruct(args) -> int:
    record = read_quadrature_csv(args.csv)
    report = maxlik_reconstruct(record, dim=args.dim, max_iter=args.max_iter, tol=args.tol, dilution=args.dilution)
    out = Path(args.out) if args.out else Path(args.csv).with_name(Path(args.csv).stem + ".report.json")
    report.write_json(out)
    rho = report.rho
    print(
        f"{report.iterations_run} iterations, converged={report.converged}; "
        f"rho00={rho[0, 0].real:.4f} rho11={rho[1, 1].real:.4f} |rho01|={abs(rho[0, 1]):.4f} "
        f"eff={generalized_efficiency(rho):.4f}"
    )
    print(f"report: {out}")
    return 0


def cmd_wigner(args) -> int:
    report = ReconstructionReport.read_json(args.report)
    axis = np.linspace(-args.extent, args.extent, args.points)
    grid = wigner(report.rho, axis, axis)
    out = Path(args.out) if args.out else Path(args.report).with_name(Path(args.report).stem + ".wigner.csv")
    grid.write_csv(out)
    if args.json:
        grid.write_json(out.with_suffix(".json"))
    print(f"W(0,0)={grid.at(0.0, 0.0):.5f}  integral={grid.integral():.6f}  boundary_warning={grid.boundary_warning}")
    print(f"wigner: {out}")
    return 0


def cmd_compare(args) -> int:
    report = compare_runs(args.manifest_a, args.manifest_b, tol=args.tol, sigmas=args.sigmas)
    print(report.format())
    return 0 if report.passed else 2


def cmd_default_config(args) -> int:
    sys.stdout.write(PipelineConfig().dump())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heraldsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def pipeline_args(p):
        p.add_argument("config", nargs="?", help="YAML config (defaults to the fitted experimental values)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="simulate -> sample -> reconstruct -> analyze")
    pipeline_args(p)
    p.add_argument("--stages", help=f"comma-separated subset of {','.join(STAGES)}")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("curves", help="model curves only (no sampling)")
    pipeline_args(p)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("reconstruct", help="MaxLik reconstruction of a theta,x CSV")
    p.add_argument("csv")
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--dilution", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("wigner", help="Wigner grid of a reconstruction report")
    p.add_argument("report")
    p.add_argument("--extent", type=float, default=4.0)
    p.add_argument("--points", type=int, default=121)
    p.add_argument("--json", action="store_true", help="also write a JSON grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("compare", help="compare two run manifests")
    p.add_argument("manifest_a")
    p.add_argument("manifest_b")
    p.add_argument("--tol", type=float, help="absolute tolerance on every quantity")
    p.add_argument("--sigmas", type=float, default=3.0, help="band width for seed-only differences")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("default-config", help="print the default YAML config")
    p.set_defaults(func=cmd_default_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (HeraldSimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
