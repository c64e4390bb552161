"""Acceptance criteria, one verdict line per criterion.

Run with ``pytest tests/test_acceptance.py`` (the verdicts appear in the
terminal summary) or ``python3 tests/test_acceptance.py``. The two table-scale
studies are read from ``results/`` when present and recomputed otherwise;
regenerate them with ``scripts/study.py``.
"""
import math
from functools import lru_cache

import numpy as np
import pytest
from scipy import integrate

import conftest
from bcsfrail.estimation import Template, fit, likelihood_ratio_test
from bcsfrail.frailty import (Correlated, CorrelatedCauseSpecific, ModelSpec, Shared, SharedCauseSpecific,
                              cross_ratio, cross_ratio_numeric, exponential_model, joint_sub_density,
                              joint_sub_distribution, joint_survival, marginal_sub_distribution)
from bcsfrail.likelihood import raw_cell_matrix
from bcsfrail.simulation import (censoring_probability, generate_dataset, replicate_seeds,
                                 solve_monitoring_rate)

from helpers import FAMILIES, VARIANTS, random_hazard, random_spec, shared_study_truth, study_summary, study_truth


def verdict(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:>2}: {detail}"
    conftest.VERDICTS.append(line)
    print(line)
    assert ok, line


# 1 -------------------------------------------------------------------------

def test_c01_shared_cross_ratio_constant():
    rng = np.random.default_rng(101)
    worst_short = worst_quad = 0.0
    families = set()
    for _ in range(100):
        sigma = float(rng.uniform(0.1, 5.0))
        hazards = tuple(tuple(random_hazard(rng) for _ in range(2)) for _ in range(2))
        families.update(h.family for row in hazards for h in row)
        spec = ModelSpec(hazards, Shared(sigma))
        j1, j2 = (int(v) for v in rng.integers(1, 3, 2))
        t1, t2 = (float(v) for v in rng.uniform(0.05, 3.0, 2))
        target = 1.0 + sigma ** 2
        worst_short = max(worst_short, abs(cross_ratio(spec, j1, j2, t1, t2) - target))
        worst_quad = max(worst_quad, abs(cross_ratio_numeric(spec, j1, j2, t1, t2, rel_tol=1e-10) - target))
    ok = worst_short <= 1e-9 and worst_quad <= 1e-9 and families == set(FAMILIES)
    verdict(1, ok, f"max |CR - (1+sigma^2)| shortcut {worst_short:.2e}, tail quadrature {worst_quad:.2e} (<= 1e-9)")


# 2 -------------------------------------------------------------------------

@lru_cache(maxsize=None)
def partition_errors():
    """Worst |sum of raw cells - 1| per variant over 200 random specs."""
    rng = np.random.default_rng(202)
    worst = dict.fromkeys(VARIANTS, 0.0)
    for i in range(200):
        variant = VARIANTS[i % 4]
        L1 = int(rng.integers(1, 4))
        L2 = L1 if variant.endswith("cause-specific") else int(rng.integers(1, 4))
        spec = random_spec(rng, variant, L1, L2)
        x1, x2 = (float(v) for v in rng.uniform(0.05, 3.0, 2))
        worst[variant] = max(worst[variant], abs(raw_cell_matrix(spec, x1, x2).sum() - 1.0))
    return worst


@pytest.mark.slow
def test_c02_probability_partition():
    worst = partition_errors()
    verdict(2, max(worst.values()) <= 1e-8,
            "max |sum - 1| before renormalising: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# 3 -------------------------------------------------------------------------

@lru_cache(maxsize=None)
def finite_difference_error(variant):
    """Worst relative gap between the mixed difference of F and the density, 50 points."""
    rng = np.random.default_rng(303 + VARIANTS.index(variant))
    worst = 0.0
    for _ in range(50):
        spec = random_spec(rng, variant, 2, 2)
        j1, j2 = (int(v) for v in rng.integers(1, 3, 2))
        t1, t2 = (float(v) for v in rng.uniform(0.2, 2.0, 2))
        h1, h2 = 5e-4 * t1, 5e-4 * t2

        def F(a, b):
            return joint_sub_distribution(spec, j1, j2, a, b, rel_tol=1e-12)

        mixed = (F(t1 + h1, t2 + h2) - F(t1 + h1, t2 - h2) - F(t1 - h1, t2 + h2) + F(t1 - h1, t2 - h2)) / (4 * h1 * h2)
        density = float(joint_sub_density(spec, j1, j2, t1, t2))
        worst = max(worst, abs(mixed / density - 1.0))
    return worst


@pytest.mark.slow
def test_c03_density_matches_distribution():
    worst = {v: finite_difference_error(v) for v in VARIANTS}
    verdict(3, max(worst.values()) <= 1e-4,
            "max relative gap: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<= 1e-4)")


# 4 -------------------------------------------------------------------------

@pytest.mark.slow
def test_c04_shared_distribution_against_scipy():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(50):
        spec = random_spec(rng, "shared", 2, 2)
        j1, j2 = (int(v) for v in rng.integers(1, 3, 2))
        t1, t2 = (float(v) for v in rng.uniform(0.1, 2.0, 2))
        # u = t s^q removes the u^(gamma-1) endpoint singularity before scipy sees it
        q1, q2 = (max(1.0, 2.0 / min(h.gamma for h in row)) for row in spec.hazards)

        def integrand(s2, s1):
            u1, u2 = t1 * s1 ** q1, t2 * s2 ** q2
            jac = q1 * t1 * s1 ** (q1 - 1) * q2 * t2 * s2 ** (q2 - 1)
            return float(joint_sub_density(spec, j1, j2, u1, u2)) * jac

        ref, _ = integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=0.0, epsrel=1e-8)
        worst = max(worst, abs(joint_sub_distribution(spec, j1, j2, t1, t2) / ref - 1.0))
    verdict(4, worst <= 1e-6, f"max relative gap to scipy dblquad {worst:.1e} (<= 1e-6)")


# 5 -------------------------------------------------------------------------

@lru_cache(maxsize=None)
def collapse_error(kind):
    """Worst absolute gap between a one-cause cause-specific model and its plain counterpart."""
    rng = np.random.default_rng(505 + (kind == "correlated"))
    worst = 0.0
    for _ in range(50):
        hazards = ((random_hazard(rng),), (random_hazard(rng),))
        if kind == "shared":
            s = float(rng.uniform(0.1, 2.0))
            a, b = ModelSpec(hazards, Shared(s)), ModelSpec(hazards, SharedCauseSpecific((s,)))
        else:
            s1, s2 = (float(v) for v in rng.uniform(0.2, 2.0, 2))
            rho = float(rng.uniform(0.05, 0.95) * min(s1 / s2, s2 / s1))
            a, b = (ModelSpec(hazards, Correlated(s1, s2, rho)),
                    ModelSpec(hazards, CorrelatedCauseSpecific((s1,), (s2,), (rho,))))
        t1, t2 = (float(v) for v in rng.uniform(0.05, 3.0, 2))
        gaps = (joint_survival(a, t1, t2) - joint_survival(b, t1, t2),
                joint_sub_density(a, 1, 1, t1, t2) - joint_sub_density(b, 1, 1, t1, t2),
                joint_sub_distribution(a, 1, 1, t1, t2, rel_tol=1e-11)
                - joint_sub_distribution(b, 1, 1, t1, t2, rel_tol=1e-11))
        worst = max(worst, max(abs(float(g)) for g in gaps))
    return worst


def test_c05_one_cause_variants_collapse():
    shared, correlated = collapse_error("shared"), collapse_error("correlated")
    verdict(5, max(shared, correlated) <= 1e-8,
            f"max gap shared {shared:.1e}, correlated {correlated:.1e} (<= 1e-8)")


# 6 -------------------------------------------------------------------------

def test_c06_marginal_mass():
    spec = shared_study_truth()
    gaps = []
    for k, row in enumerate(spec.hazards, 1):
        total = sum(h.alpha for h in row)
        t = 40.0 / total
        for j, h in enumerate(row, 1):
            gaps.append(abs(marginal_sub_distribution(spec, k, j, t, rel_tol=1e-12) - h.alpha / total))
    sigma_sq = spec.frailty.sigma ** 2
    remaining = (1.0 + 40.0 * sigma_sq) ** (-1.0 / sigma_sq)
    verdict(6, max(gaps) <= 1e-5,
            f"max |F(t) - alpha/sum| at H0=40 is {max(gaps):.2e} (<= 1e-5); "
            f"survival still {remaining:.2e} there for sigma={spec.frailty.sigma}")


# 7 -------------------------------------------------------------------------

FIG_T1 = np.arange(1, 31) / 10.0
FIG_T2 = (0.05, 0.2, 0.5, 0.9, 2.0)
FIG_ALPHA = ((0.2, 0.25), (0.15, 0.1))
FIGURE_SPECS = {
    "correlated": exponential_model(*FIG_ALPHA, Correlated(0.95, 0.85, 0.8)),
    "shared-cause-specific": exponential_model(*FIG_ALPHA, SharedCauseSpecific((1.65, 0.45))),
    # rho exceeds min(s1/s2, s2/s1) for both causes; evaluated as stated
    "correlated-cause-specific": exponential_model(
        *FIG_ALPHA, CorrelatedCauseSpecific((1.2, 1.8), (0.8, 0.4), (0.7, 0.25)), check=False),
}
ABOVE_ONE = 1e-8  # larger than the tail quadrature error


@lru_cache(maxsize=None)
def figure_minima(variant):
    spec = FIGURE_SPECS[variant]
    pairs = [(1, 1)] if variant == "correlated" else [(1, 1), (1, 2), (2, 1), (2, 2)]
    return {pair: min(cross_ratio(spec, *pair, float(t1), float(t2)) for t1 in FIG_T1 for t2 in FIG_T2)
            for pair in pairs}


def test_c07_figure_grids_exceed_one():
    parts, ok = [], True
    for variant in FIGURE_SPECS:
        for pair, low in figure_minima(variant).items():
            above = low - 1.0 > ABOVE_ONE
            ok &= above
            parts.append(f"{variant} CR{pair[0]}{pair[1]} min {low:.6f}{'' if above else ' (not > 1)'}")
    verdict(7, ok, "; ".join(parts))


# 8 -------------------------------------------------------------------------

@pytest.mark.slow
def test_c08_shared_study():
    row = study_summary("shared-n300")["sigma"]
    bias_ok = -0.15 <= row["bias"] <= -0.05
    cp_ok = 0.92 <= row["cp"] <= 0.97
    sse_ok = abs(row["sse"] - 0.0842) <= 0.3 * 0.0842
    verdict(8, bias_ok and cp_ok and sse_ok,
            f"sigma bias {row['bias']:+.4f} (need [-0.15, -0.05]), CP {row['cp']:.3f} (need [0.92, 0.97]), "
            f"SSE {row['sse']:.4f} (need 0.0842 +- 30%)")


# 9 -------------------------------------------------------------------------

@pytest.mark.slow
def test_c09_cause_specific_study():
    rows = study_summary("cause-specific-n300")
    cps = {name: r["cp"] for name, r in rows.items()}
    sigma_bias = {name: r["bias"] for name, r in rows.items() if name.startswith("sigma")}
    ok = all(0.89 <= cp <= 0.97 for cp in cps.values()) and all(abs(b) <= 0.08 for b in sigma_bias.values())
    verdict(9, ok, f"CP range [{min(cps.values()):.3f}, {max(cps.values()):.3f}] (need [0.89, 0.97]); "
                   + ", ".join(f"{k} bias {v:+.4f}" for k, v in sigma_bias.items()) + " (need |bias| <= 0.08)")


# 10 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c10_censoring_calibration():
    parts, ok = [], True
    for preset in ("shared", "cause-specific"):
        spec = study_truth(preset)
        for i, p in enumerate((0.1, 0.2)):
            mu = solve_monitoring_rate(spec, p)
            recomputed = abs(censoring_probability(spec, mu) - p)
            n = 100_000
            data = generate_dataset(spec, mu, n, 1000 + 10 * i + (preset == "shared"))
            z = (np.mean((data.j1 == 0) & (data.j2 == 0)) - p) / math.sqrt(p * (1 - p) / n)
            ok &= recomputed <= 1e-6 and abs(z) <= 3
            parts.append(f"{preset} p={p}: |g(mu)-p| {recomputed:.1e}, z {z:+.2f}")
    verdict(10, ok, "; ".join(parts))


# 11 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c11_estimation_recovery():
    spec = shared_study_truth()
    template = Template.from_spec(spec)
    truth = template.values_of(spec)
    mu = solve_monitoring_rate(spec, 0.1)
    within = np.zeros(len(truth))
    with_se = 0
    for child in replicate_seeds(1111, 50):
        res = fit(generate_dataset(spec, mu, 1000, child), template)
        if res.se is not None:
            with_se += 1
            within += np.abs(res.estimates - truth) <= 3 * res.se
    share = within / 50
    ok = np.all(share >= 0.9) and with_se >= 0.95 * 50
    verdict(11, ok, "within 3 SE: " + ", ".join(f"{n} {s:.2f}" for n, s in zip(template.names, share))
            + f" (need >= 0.90); SE available {with_se}/50 (need >= 48)")


# 12 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c12_likelihood_ratio_test_size():
    truth = exponential_model((2.4, 5.8), (3.5, 4.5), Correlated(0.8, 0.8, 0.5))
    full_t, tied_t = Template.from_spec(truth), Template.from_spec(truth, tie_sigmas=True)
    mu = solve_monitoring_rate(truth, 0.1)
    rejections = unconverged = 0
    for child in replicate_seeds(1212, 200):
        data = generate_dataset(truth, mu, 300, child)
        tied = fit(data, tied_t)
        full = fit(data, full_t, init=tied.model)  # the restricted optimum is a point of the full space
        unconverged += not (tied.converged and full.converged)
        rejections += likelihood_ratio_test(full, tied, 1).p_value < 0.05
    rate = rejections / 200
    verdict(12, 0.02 <= rate <= 0.09,
            f"rejection rate {rate:.3f} over 200 replicates (need [0.02, 0.09]); {unconverged} with a fit flagged "
            "not converged")


# 13 ------------------------------------------------------------------------

@pytest.mark.slow
def test_c13_correlated_cause_specific_evaluation():
    variant = "correlated-cause-specific"
    partition = partition_errors()[variant]
    fd = finite_difference_error(variant)
    collapse = collapse_error("correlated")
    minima = figure_minima(variant)
    figure_ok = all(v - 1.0 > ABOVE_ONE for v in minima.values())
    ok = partition <= 1e-8 and fd <= 1e-4 and collapse <= 1e-8 and figure_ok
    verdict(13, ok, f"partition {partition:.1e}, density gap {fd:.1e}, collapse {collapse:.1e}, figure grid minima "
            + ", ".join(f"CR{a}{b} {v:.6f}" for (a, b), v in minima.items()))


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
