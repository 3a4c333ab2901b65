#!/usr/bin/env python3
"""Mean GMRES iterations with and without the splitting preconditioner."""
import argparse
from pathlib import Path

from stokes_biot import io as sio
from stokes_biot import scenarios

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", type=Path,
                    default=[ROOT / "configs" / "artery_precond.json", ROOT / "configs" / "reservoir.json"])
    ap.add_argument("--out-dir", type=Path, default=Path("out/precond"))
    args = ap.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.configs:
        cfg = sio.read_config(path)
        rows = scenarios.run_preconditioner_study(cfg)
        sio.write_table(rows, args.out_dir / f"{path.stem}.csv", sio.table_metadata(cfg))
        print(f"{cfg.scenario}:")
        for r in rows:
            flag = " (unconverged)" if r["unconverged"] or r["unconvergedPrec"] else ""
            print(f"  h={r['h']:<6g} tau={r['tau']:<7g} ndof={r['ndof']:<7d} "
                  f"GMRES {r['gmres']:7.1f}  preconditioned {r['gmresPrec']:5.1f}{flag}")


if __name__ == "__main__":
    main()
