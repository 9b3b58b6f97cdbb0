"""Command line front end.

    flexopt --nelx 100 --nely 100 --doc tx --dof ty --emax 1.2 --out runs/txty

Exit status: 0 when the run converged, 2 when it hit the iteration limit,
1 on any error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .driver import RunConfig, run
from .errors import ConfigurationError

logger = logging.getLogger("flexopt")

EXIT_CONVERGED = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2


def _degrees(text: str) -> list[str]:
    return [t for t in text.replace(" ", ",").split(",") if t]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", ",").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexopt", description="Topology optimization of flexures.")
    p.add_argument("--config", help="TOML configuration file; flags override its values")
    p.add_argument("--nelx", type=int)
    p.add_argument("--nely", type=int)
    p.add_argument("--nelz", type=int)
    p.add_argument("--doc", type=_degrees, help="degrees of constraint, e.g. tx or ty,rz")
    p.add_argument("--dof", type=_degrees, help="degrees of freedom, e.g. ty")
    p.add_argument("--emax", type=_floats, help="energy bound per DOF, e.g. 1.2 or 1.0,0.5")
    p.add_argument("--mode", choices=["base", "robust", "stress", "robust+stress"])
    p.add_argument("--eta", type=float)
    p.add_argument("--deta", type=float)
    p.add_argument("--radius", type=float, help="filter radius in elements")
    p.add_argument("--sigma-bar", type=float, help="allowable stress (absolute)")
    p.add_argument("--sigma-reference", help="report.json of a prior run to take the max stress from")
    p.add_argument("--sigma-fraction", type=float, help="fraction of the reference max stress")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    top = {"nelx": args.nelx, "nely": args.nely, "nelz": args.nelz, "doc": args.doc,
           "dof": args.dof, "emax": args.emax, "out": args.out, "threads": args.threads,
           "max_iter": args.max_iter}
    if args.radius is not None:
        top["radius"] = args.radius
    config = dataclasses.replace(config, **{k: v for k, v in top.items() if v is not None})
    var = {"mode": args.mode, "eta": args.eta, "deta": args.deta, "sigma_bar": args.sigma_bar,
           "sigma_reference": args.sigma_reference, "sigma_bar_fraction": args.sigma_fraction}
    if args.radius is not None and (args.mode or config.variant.mode) != "base":
        var["radius"] = args.radius
    variant = dataclasses.replace(config.variant, **{k: v for k, v in var.items() if v is not None})
    config = dataclasses.replace(config, variant=variant)
    # a lone emax value applies to every DOF
    if len(config.emax) == 1 and len(config.dof) > 1:
        config.emax = config.emax * len(config.dof)
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        config = config_from_args(args)
        result = run(config)
    except (ConfigurationError, ValueError, ArithmeticError, OSError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    t = result.termination
    logger.info("finished after %d iterations: %s, f=%.6g, Mnd=%.4f", result.iterations,
                t.reason, result.objective, result.mnd)
    if t.converged:
        return EXIT_CONVERGED
    return EXIT_MAX_ITER


if __name__ == "__main__":
    sys.exit(main())
