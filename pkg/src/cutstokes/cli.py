"""Command line entry point: ``cutstokes {convergence,coriolis,solve}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .experiments import ConfigError, ExperimentError, load_config, run_convergence, run_coriolis, run_solve
from .geometry import MeshTooCoarseError


def _omega_list(text: str):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cutstokes", description="Unfitted divergence-free Stokes experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; missing keys take their defaults")
    common.add_argument("--output", help="output directory (overrides the config)")
    common.add_argument("--formulation", choices=("lagrange", "nitsche"), help="boundary treatment")

    p = sub.add_parser("convergence", parents=[common], help="mesh refinement study, writes errors.csv and rates.csv")
    p.add_argument("--sizes", help="comma-separated mesh sizes, e.g. 16,32,64")

    p = sub.add_parser("coriolis", parents=[common], help="rotation study, writes coriolis.csv")
    p.add_argument("--omega", type=_omega_list, help="comma-separated rotation rates")
    p.add_argument("--n", type=int, help="mesh size")

    p = sub.add_parser("solve", parents=[common], help="single solve with field output")
    p.add_argument("--n", type=int, default=32, help="mesh size (default 32)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        updates = {}
        if args.output:
            updates["output"] = args.output
        if args.formulation:
            updates["formulation"] = args.formulation
        if getattr(args, "sizes", None):
            updates["sizes"] = tuple(int(v) for v in args.sizes.split(","))
        if updates:
            cfg = cfg.with_updates(**updates)

        if args.command == "convergence":
            reports = run_convergence(cfg)
            rates = reports[-1].rates
            for key in ("e_u_H1", "e_u_L2", "e_p_interior", "e_p_extended", "e_lambda_L2Gamma"):
                last = f"{rates[key][-1]:.3f}" if rates.get(key) else "n/a"
                print(f"{key:18s} finest {getattr(reports[-1], key):.3e}  rate {last}")
        elif args.command == "coriolis":
            rows = run_coriolis(cfg, omegas=args.omega, n=args.n)
            for r in rows:
                print(f"omega {r.omega:10g}  |u_y| {r.uy_L2:.3e}  |u_x| {r.ux_L2:.3e}  max|u_y| on boundary {r.uy_max_gamma:.3e}")
        else:
            _, _, report = run_solve(cfg, args.n)
            print(
                f"n={args.n} h={report.h:.4f} e_u_H1={report.e_u_H1:.3e} div_max={report.div_max:.1e} "
                f"residual={report.residual:.1e}"
            )
        print(f"output written to {cfg.output}")
    except (ConfigError, ExperimentError, MeshTooCoarseError, ValueError, OSError) as exc:
        print("cutstokes: error: " + " ".join(str(exc).split()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
