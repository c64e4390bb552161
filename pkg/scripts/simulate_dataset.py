"""Write one simulated dataset CSV from a model config with a [simulation] section.

    python3 scripts/simulate_dataset.py configs/study_shared.cfg --n 300 --seed 1 --out data.csv
"""
import argparse

from bcsfrail.dataio import read_model_config, write_dataset_csv
from bcsfrail.simulation import generate_dataset, solve_monitoring_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p-cen", type=float)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    config = read_model_config(args.config)
    spec = config.spec()
    p_cen = args.p_cen if args.p_cen is not None else config.simulation.get("p_cen", 0.1)
    mu = solve_monitoring_rate(spec, p_cen)
    write_dataset_csv(generate_dataset(spec, mu, args.n, args.seed), args.out)
    print(f"wrote {args.n} pairs to {args.out} (monitoring rate {mu:.6g})")


if __name__ == "__main__":
    main()
