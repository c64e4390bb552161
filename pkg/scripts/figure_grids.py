"""Cross-ratio grids for the three dependence configs, written as CSV for plotting.

    python3 scripts/figure_grids.py --out results
"""
import argparse
import sys
from pathlib import Path

from bcsfrail.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ("dependence_correlated", "dependence_shared_cause_specific", "dependence_correlated_cause_specific")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    for name in CONFIGS:
        target = Path(args.out) / f"cr_{name.removeprefix('dependence_')}.csv"
        code = cli(["cross-ratio", "--model", str(ROOT / "configs" / f"{name}.cfg"),
                    "--t1", "0.1:3:30", "--t2", "0.05,0.2,0.5,0.9,2", "--out", str(target)])
        if code:
            sys.exit(code)
        print(f"wrote {target}")


if __name__ == "__main__":
    main()
