import math

import numpy as np
import pytest
from scipy import integrate

from bcsfrail.errors import CalibrationError, ParameterError, StudyError
from bcsfrail.estimation import FitOptions, Template
from bcsfrail.frailty import Shared, exponential_model, marginal_sub_distribution
from bcsfrail.simulation import (BRACKET, Z_95, SimConfig, censoring_probability, generate_dataset, replicate_seeds,
                                 run_study, solve_monitoring_rate, z_value)

from helpers import shared_study_truth, study_summary, study_truth

SHARED = shared_study_truth()
SMALL = exponential_model((1.0,), (1.5,), Shared(0.6))


def test_censoring_probability_increases_with_rate():
    mus = np.geomspace(1e-3, 1e3, 25)
    g = [censoring_probability(SHARED, mu) for mu in mus]
    assert np.all(np.diff(g) > 0)


def test_censoring_probability_limits():
    assert 0.0 <= censoring_probability(SHARED, BRACKET[0]) <= 0.01
    assert 0.99 <= censoring_probability(SHARED, BRACKET[1]) <= 1.0


def test_censoring_probability_against_quadrature():
    mu = 0.8
    ref, _ = integrate.quad(lambda x: mu * math.exp(-mu * x) * (1 + 0.95 ** 2 * (8.2 + 8.0) * x) ** (-1 / 0.95 ** 2),
                            0, np.inf, epsabs=1e-14, epsrel=1e-12)
    assert censoring_probability(SHARED, mu) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("preset", ["shared", "cause-specific"])
@pytest.mark.parametrize("p_cen", [0.1, 0.2])
def test_calibrated_rate_reproduces_target(preset, p_cen):
    spec = study_truth(preset)
    mu = solve_monitoring_rate(spec, p_cen)
    assert abs(censoring_probability(spec, mu) - p_cen) <= 1e-6


def test_calibration_rejects_bad_targets():
    with pytest.raises(ParameterError):
        solve_monitoring_rate(SHARED, 1.0)
    with pytest.raises(CalibrationError, match="attainable range"):
        solve_monitoring_rate(exponential_model((1.0,), (1.5,), Shared(5.0)), 0.01)
    # one ulp below 1 is still attainable
    assert solve_monitoring_rate(SMALL, 0.9999999999999999) > 1e6


def test_generation_is_deterministic():
    a = generate_dataset(SHARED, 0.6, 500, 12)
    b = generate_dataset(SHARED, 0.6, 500, 12)
    c = generate_dataset(SHARED, 0.6, 500, 13)
    for name in ("x1", "x2", "j1", "j2"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.j1, c.j1)
    np.testing.assert_array_equal(a.x1, a.x2)


def test_joint_censoring_frequency_matches_target():
    p = 0.1
    mu = solve_monitoring_rate(SHARED, p)
    n = 100_000
    data = generate_dataset(SHARED, mu, n, 2024)
    freq = np.mean((data.j1 == 0) & (data.j2 == 0))
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_first_cause_frequencies_match_marginal_integrals():
    mu = solve_monitoring_rate(SHARED, 0.1)
    n = 100_000
    data = generate_dataset(SHARED, mu, n, 7)
    for j in (1, 2):
        expected, _ = integrate.quad(lambda x: marginal_sub_distribution(SHARED, 1, j, x) * mu * math.exp(-mu * x),
                                     0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
        freq = np.mean(data.j1 == j)
        assert abs(freq - expected) <= 3 * math.sqrt(expected * (1 - expected) / n), (j, freq, expected)


def test_replicate_seeds_are_stable():
    a = [s.generate_state(2).tolist() for s in replicate_seeds(5, 4)]
    b = [s.generate_state(2).tolist() for s in replicate_seeds(5, 6)[:4]]
    assert a == b


def test_config_validation():
    for kw in ({"p_cen": 0.0}, {"p_cen": 1.0}, {"n": 1}, {"replicates": 0}, {"confidence": 1.0}):
        args = dict(true_model=SMALL, p_cen=0.1, n=50, replicates=2)
        args.update(kw)
        with pytest.raises(ParameterError):
            SimConfig(**args)


def test_z_value():
    assert z_value(0.95) == Z_95
    assert z_value(0.9) == pytest.approx(1.6448536, abs=1e-6)


def test_single_replicate_convention():
    s = run_study(SimConfig(SMALL, 0.1, 200, 1, seed=3))
    est = s.estimates[0]
    for i, p in enumerate(s.params):
        assert p.sse == 0.0 and p.single_replicate
        assert p.bias == est[i] - p.truth


def test_study_is_reproducible_and_consistent():
    cfg = SimConfig(SMALL, 0.1, 80, 4, seed=9)
    a, b = run_study(cfg), run_study(cfg)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    assert [p.bias for p in a.params] == [p.bias for p in b.params]
    usable = np.all(np.isfinite(a.estimates), axis=1)
    assert a.successes == usable.sum()
    for i, p in enumerate(a.params):
        assert p.bias == np.mean(a.estimates[usable, i]) - p.truth
        assert p.sse >= 0 and p.ase >= 0 and 0 <= p.cp <= 1


def test_study_with_no_converged_replicate_raises():
    cfg = SimConfig(SMALL, 0.1, 50, 2, fit_options=FitOptions(max_iterations=1, restarts=0))
    with pytest.raises(StudyError):
        run_study(cfg)


def test_study_accepts_restricted_template():
    tpl = Template.from_spec(SMALL, fixed={"sigma": 0.6})
    s = run_study(SimConfig(SMALL, 0.1, 100, 2, seed=1, template=tpl))
    assert [p.name for p in s.params] == ["alpha1.1", "alpha2.1"]


@pytest.mark.slow
def test_larger_samples_bring_sse_and_ase_together():
    small, large = study_summary("shared-n50")["sigma"], study_summary("shared-n300")["sigma"]
    assert abs(large["sse"] - large["ase"]) / large["sse"] < abs(small["sse"] - small["ase"]) / small["sse"]
    assert abs(large["cp"] - 0.95) <= abs(small["cp"] - 0.95)
