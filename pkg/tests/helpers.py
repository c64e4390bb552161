"""Random model builders and stored-study access shared by the test modules."""
import csv
import importlib.util
from pathlib import Path

import numpy as np

from bcsfrail.frailty import (Correlated, CorrelatedCauseSpecific, ModelSpec, Shared,
                              SharedCauseSpecific)
from bcsfrail.hazards import HazardFamily, HazardSpec

ROOT = Path(__file__).resolve().parents[1]
FAMILIES = list(HazardFamily)
VARIANTS = ("shared", "correlated", "shared-cause-specific", "correlated-cause-specific")


def random_hazard(rng, family=None):
    family = family or FAMILIES[rng.integers(len(FAMILIES))]
    alpha = float(rng.uniform(0.2, 2.5))
    if family is HazardFamily.EXPONENTIAL:
        return HazardSpec(family, alpha)
    return HazardSpec(family, alpha, float(rng.uniform(0.6, 2.5)))


def random_correlated_triple(rng):
    s1, s2 = rng.uniform(0.2, 2.0, size=2)
    bound = min(s1 / s2, s2 / s1)
    return float(s1), float(s2), float(rng.uniform(0.05, 0.95) * bound)


def random_frailty(rng, variant, L):
    if variant == "shared":
        return Shared(float(rng.uniform(0.1, 2.0)))
    if variant == "correlated":
        return Correlated(*random_correlated_triple(rng))
    if variant == "shared-cause-specific":
        return SharedCauseSpecific(tuple(float(s) for s in rng.uniform(0.1, 2.0, size=L)))
    triples = [random_correlated_triple(rng) for _ in range(L)]
    return CorrelatedCauseSpecific(*(tuple(t[i] for t in triples) for i in range(3)))


def random_spec(rng, variant, L1=None, L2=None, family=None):
    if variant.endswith("cause-specific"):
        L1 = L2 = L1 or int(rng.integers(1, 4))
    else:
        L1 = L1 or int(rng.integers(1, 4))
        L2 = L2 or int(rng.integers(1, 4))
    hazards = (tuple(random_hazard(rng, family) for _ in range(L1)),
               tuple(random_hazard(rng, family) for _ in range(L2)))
    return ModelSpec(hazards, random_frailty(rng, variant, L1))


def _study_module():
    spec = importlib.util.spec_from_file_location("study_script", ROOT / "scripts" / "study.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def study_truth(preset):
    return _study_module().PRESETS[preset]


def shared_study_truth():
    return study_truth("shared")


# (preset, n, replicates, seed) of the studies whose summaries live in results/
STUDIES = {
    "shared-n300": ("shared", 300, 500, 41),
    "shared-n50": ("shared", 50, 500, 50),
    "cause-specific-n300": ("cause-specific", 300, 300, 43),
}


def study_summary(key, p_cen=0.1):
    """Per-parameter summary rows of a stored study, running it when no CSV exists."""
    path = ROOT / "results" / f"{key}.csv"
    if not path.exists():
        from bcsfrail.dataio import atomic_write, summary_csv_text
        from bcsfrail.simulation import SimConfig, run_study
        preset, n, reps, seed = STUDIES[key]
        atomic_write(path, summary_csv_text(run_study(SimConfig(study_truth(preset), p_cen, n, reps, seed))))
    with open(path, newline="") as fh:
        return {row["param"]: {k: float(v) for k, v in row.items() if k != "param"}
                for row in csv.DictReader(fh)}
