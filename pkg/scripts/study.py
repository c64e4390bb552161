"""Desk-scale reruns of the two simulation tables.

Presets:
  shared         exponential hazards (2.4, 5.8) and (3.5, 4.5), sigma 0.95
  cause-specific exponential hazards (7, 6) and (8.5, 10), sigma (0.95, 0.85)

Both use a common monitoring time calibrated to the requested joint-censoring
probability. The CSV is what the acceptance tests read back.

    python3 scripts/study.py shared --replicates 500 --seed 41 --out results/shared-n300.csv
    python3 scripts/study.py cause-specific --replicates 300 --seed 43 --out results/cause-specific-n300.csv
"""
import argparse
import time

from bcsfrail.dataio import atomic_write, summary_csv_text
from bcsfrail.estimation import FitOptions
from bcsfrail.frailty import Shared, SharedCauseSpecific, exponential_model
from bcsfrail.simulation import SimConfig, run_study

PRESETS = {
    "shared": exponential_model((2.4, 5.8), (3.5, 4.5), Shared(0.95)),
    "cause-specific": exponential_model((7.0, 6.0), (8.5, 10.0), SharedCauseSpecific((0.95, 0.85))),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset", choices=sorted(PRESETS))
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--replicates", type=int, default=500)
    ap.add_argument("--p-cen", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=41)
    ap.add_argument("--out")
    args = ap.parse_args()
    config = SimConfig(PRESETS[args.preset], args.p_cen, args.n, args.replicates, args.seed, FitOptions())
    start = time.perf_counter()

    def progress(r, res):
        if (r + 1) % 25 == 0:
            print(f"# {r + 1}/{args.replicates} done, {time.perf_counter() - start:.0f}s", flush=True)

    summary = run_study(config, progress)
    text = summary_csv_text(summary)
    print(text, end="")
    print(f"# mu={summary.mu_monitor:.6g} successes={summary.successes}/{summary.replicates} "
          f"se_unavailable={summary.se_unavailable} failed={summary.failed} "
          f"elapsed={time.perf_counter() - start:.0f}s")
    if args.out:
        atomic_write(args.out, text)


if __name__ == "__main__":
    main()
