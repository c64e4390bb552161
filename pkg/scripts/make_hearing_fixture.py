"""Build the synthetic hearing-loss fixture used by the dataset tests.

The (j1, j2) frequency table is the published one (796 pairs, three causes);
the ages are SYNTHETIC because the raw ages are not public. Never present this
file as the real data.

Both ears are inspected at one visit. Each row's age is drawn from a 6-80
month grid with weight P(cell | age) under a reference shared-frailty model,
so older children are more often affected.

The table is almost perfectly concordant (2 of 796 pairs have one ear
affected and the other not). Gamma-frailty fits approach that only as the
frailty variance grows without bound, so fits on this fixture drift to a
degenerate boundary. It is a parsing and CLI fixture, not a fitting benchmark.

    python3 scripts/make_hearing_fixture.py tests/data/hearing_synthetic.csv
"""
import sys

import numpy as np

from bcsfrail.dataio import write_dataset_csv
from bcsfrail.frailty import Shared, exponential_model
from bcsfrail.likelihood import Dataset, cell_tensor

# per-month cause rates roughly in proportion to the table's margins
REFERENCE = exponential_model((0.03, 0.002, 0.004), (0.03, 0.002, 0.004), Shared(1.0))
AGES = np.round(np.arange(60, 801) / 10.0, 1)

# (j1, j2) -> count; cells not listed are zero.
COUNTS = {
    (0, 0): 261, (0, 2): 1,
    (1, 1): 435, (1, 3): 7,
    (2, 0): 1, (2, 2): 28, (2, 3): 2,
    (3, 1): 7, (3, 2): 1, (3, 3): 53,
}


def build(seed=2024):
    rng = np.random.default_rng(seed)
    cells = [cell for cell, count in COUNTS.items() for _ in range(count)]
    order = rng.permutation(len(cells))
    j1 = np.array([cells[i][0] for i in order])
    j2 = np.array([cells[i][1] for i in order])
    weights = cell_tensor(REFERENCE, AGES, AGES)
    age = np.empty(len(cells))
    for i, (a, b) in enumerate(zip(j1, j2)):
        w = weights[:, a, b]
        age[i] = rng.choice(AGES, p=w / w.sum())
    return Dataset(age, age.copy(), j1, j2, L1=3, L2=3)


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/hearing_synthetic.csv"
    write_dataset_csv(build(), out)
    print(f"wrote {out}")
