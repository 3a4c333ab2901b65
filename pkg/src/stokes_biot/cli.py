"""Command line entry point ``sbl``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as sio
from .fem import DegenerateElementError
from .sparsela import FactorizationError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbl", description="Stokes-Biot solver with Nitsche coupling")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "advance a scenario and write fields and logs"),
                        ("convergence", "temporal convergence table"),
                        ("precond", "GMRES iteration counts with and without the splitting preconditioner"),
                        ("audit", "stability and equivalence checks as JSON")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", type=Path)
        s.add_argument("--mesh-h", type=float, dest="h")
        s.add_argument("--tau", type=float)
        s.add_argument("--scheme", choices=["monolithic", "algoA", "algoB", "preconditioned"])
        s.add_argument("--out-dir", type=Path, dest="out_dir")
        s.add_argument("--dump-matrix", action="store_true", dest="dump_matrix")
        s.add_argument("--tau-ref", type=float, dest="tau_ref")
        s.add_argument("--max-steps", type=int, dest="max_steps")
    return p


def _out_dir(cfg) -> Path:
    d = Path(cfg.output.get("outDir", "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = sio.read_config(args.config)
        cfg = cfg.with_overrides(h=args.h, tau=args.tau, scheme=args.scheme,
                                 out_dir=str(args.out_dir) if args.out_dir else None,
                                 dump_matrix=args.dump_matrix, tau_ref=args.tau_ref, max_steps=args.max_steps)
    except sio.ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_INVALID

    from . import audit, scenarios, schemes

    try:
        if args.command == "run":
            runner = scenarios.run_artery if cfg.scenario == "artery" else scenarios.run_reservoir
            res = runner(cfg)
            summary = {"steps": len(res["log"]), "finalTime": res["state"].t, "wallTime": res["wallTime"],
                       "outDir": str(_out_dir(cfg))}
            if "pressurePeak" in res:
                summary["pressurePeak"] = res["pressurePeak"]
            print(json.dumps(summary, indent=2))
        elif args.command == "convergence":
            rows = scenarios.run_convergence_study(cfg)
            path = _out_dir(cfg) / "convergence.csv"
            sio.write_table(rows, path, sio.table_metadata(cfg))
            print(path.read_text(), end="")
        elif args.command == "precond":
            rows = scenarios.run_preconditioner_study(cfg)
            path = _out_dir(cfg) / "precond.csv"
            sio.write_table(rows, path, sio.table_metadata(cfg))
            print(path.read_text(), end="")
        elif args.command == "audit":
            results = audit.run_audit(cfg, h=args.h)
            report = [r.to_dict() for r in results]
            print(json.dumps(report, indent=2))
    except (schemes.SolverFailure, FactorizationError, DegenerateElementError) as exc:
        where = ""
        if getattr(exc, "step", None) is not None:
            where = f" at step {exc.step}"
        if getattr(exc, "substep", None):
            where += f" ({exc.substep})"
        print(f"solver failure{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
