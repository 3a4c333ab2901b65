#!/usr/bin/env python3
"""Temporal convergence of the monolithic and two-step splitting schemes."""
import argparse
from pathlib import Path

from stokes_biot import io as sio
from stokes_biot import scenarios

ROOT = Path(__file__).resolve().parents[1]
KEYS = [("E_f", "rate_f"), ("E_p_a", "rate_a"), ("E_p_b", "rate_b"), ("E_p_c", "rate_c")]


def fmt(v):
    return f"{v:6.2f}" if isinstance(v, float) else " " * 6


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "artery_convergence.json")
    ap.add_argument("--tau-ref", type=float, default=None)
    ap.add_argument("--out", type=Path, default=Path("out/convergence/convergence.csv"))
    args = ap.parse_args()

    cfg = sio.read_config(args.config).with_overrides(tau_ref=args.tau_ref)
    rows = scenarios.run_convergence_study(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    sio.write_table(rows, args.out, sio.table_metadata(cfg))

    print(f"{'scheme':<11}{'tau':>9}" + "".join(f"{e:>11}{'rate':>7}" for e, _ in KEYS))
    for r in rows:
        print(f"{r['scheme']:<11}{r['tau']:9.3g}" + "".join(f"{r[e]:11.3e} {fmt(r[k])}" for e, k in KEYS))
    print(f"table written to {args.out}")


if __name__ == "__main__":
    main()
