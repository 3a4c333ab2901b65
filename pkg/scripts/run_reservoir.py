#!/usr/bin/env python3
"""Injection into the fractured reservoir on a truncated horizon."""
import argparse
from pathlib import Path

from stokes_biot import io as sio
from stokes_biot import scenarios

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "reservoir.json")
    ap.add_argument("--max-steps", type=int, default=None, help="0 runs the full horizon")
    ap.add_argument("--out-dir", default="out/reservoir")
    args = ap.parse_args()

    cfg = sio.read_config(args.config).with_overrides(out_dir=args.out_dir)
    if args.max_steps is not None:
        cfg.output["maxSteps"] = args.max_steps or None
    res = scenarios.run_reservoir(cfg)
    peak = res["pressurePeak"]
    print(f"{len(res['log'])} steps, t={res['state'].t:g} s, wall {res['wallTime']:.1f}s")
    print(f"fluid pressure peak {peak['value']:.4g} Pa at x={peak['x']:.2f} m "
          f"({peak['tipDistance']:.2f} m from the tip)")


if __name__ == "__main__":
    main()
