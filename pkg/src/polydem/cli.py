"""Command line: ``polydem check-mesh|solve|forces|convergence --config FILE``.

The log level is read from ``POLYDEM_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .cases import build_case_problem, build_mesh, run_case, run_convergence, run_forces
from .config import ConfigError, load_config
from .mesh import MeshError, cell_closure_defect

__all__ = ["main"]


def _check_mesh(cfg) -> int:
    mesh = build_mesh(cfg)
    defect = cell_closure_defect(mesh)
    print(f"dimension      {mesh.dim}")
    print(f"vertices       {mesh.n_vertices}")
    print(f"facets         {mesh.n_facets} ({len(mesh.boundary_facets)} on the boundary)")
    print(f"cells          {mesh.n_cells}")
    print(f"h              {mesh.h:.6g}")
    print(f"volume         {mesh.volume:.9g}")
    print(f"closure defect {float(np.max(defect)) if len(defect) else 0.0:.3e}")
    print(f"tags           {', '.join(mesh.tag_names)}")
    problem = build_case_problem(cfg)
    st = problem.recon.stats()
    print(f"stencils       {st['candidates']} candidates, {st['extrapolated']} of {st['interior_facets']} "
          f"interior facets extrapolated ({st['extrapolation_percent']:.2f}%)")
    return 0


def _solve(cfg) -> int:
    res = run_case(cfg)
    for name, path in res.artifacts.items():
        print(f"{name}: {path}")
    return res.status


def _forces(cfg, check: bool) -> int:
    res = run_forces(cfg)
    print(f"defect with correction    {res.summary['with_correction']:.3e}")
    print(f"defect without correction {res.summary['without_correction']:.3e}")
    for name, path in res.artifacts.items():
        print(f"{name}: {path}")
    return res.status if check else 0


def _convergence(cfg) -> int:
    res = run_convergence(cfg)
    print("L2 orders:     " + ", ".join(f"{o:.3f}" for o in res.summary["l2_orders"]))
    print("energy orders: " + ", ".join(f"{o:.3f}" for o in res.summary["energy_orders"]))
    for name, path in res.artifacts.items():
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polydem", description="Lowest-order polyhedral elasto-plasticity solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("check-mesh", "load a mesh and report geometry and stencil statistics"),
                       ("solve", "run the configured case"),
                       ("forces", "particle-force breakdown and identity check"),
                       ("convergence", "manufactured-solution convergence study")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML case file")
        if name == "forces":
            p.add_argument("--check", action="store_true", help="exit with status 1 if the identity defect exceeds 1e-9")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("POLYDEM_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "check-mesh":
            return _check_mesh(cfg)
        if args.command == "solve":
            return _solve(cfg)
        if args.command == "forces":
            return _forces(cfg, args.check)
        return _convergence(cfg)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
