"""Simulation protocol: monitoring-rate calibration, data generation, studies.

Pairs share one exponential monitoring time X (x1 = x2 = X).  The observed
cell (j1, j2) at X is drawn from the model's cell probabilities.  A study
repeats generate-then-fit and summarises each parameter by Bias, SSE, ASE and
CP.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import CalibrationError, FrailtyError, ParameterError, StudyError
from .estimation import FitOptions, FitResult, Template, default_init, fit
from .frailty import ModelSpec, joint_survival
from .likelihood import Dataset, cell_tensor

Z_95 = 1.959964
BRACKET = (1e-6, 1e6)


def censoring_probability(spec: ModelSpec, mu: float, rel_tol: float = 1e-10) -> float:
    """P[T1 > X, T2 > X] for X ~ Exponential(rate mu)."""
    def integrand(x):
        return np.exp(np.log(mu) - mu * x) * joint_survival(spec, x, x)

    # the integrand lives on the scale 1/mu; rescale so the map sees O(1) times
    scaled = quadrature.integrate_semi_infinite(lambda v: integrand(v / mu) / mu, 0.0,
                                                rel_tol=rel_tol, abs_tol=1e-15)
    return scaled.value


def solve_monitoring_rate(spec: ModelSpec, p_cen: float, tol: float = 1e-12) -> float:
    """Monitoring rate mu whose joint-censoring probability equals ``p_cen``."""
    if not 0.0 < p_cen < 1.0:
        raise ParameterError(f"p_cen must lie in (0, 1), got {p_cen!r}")
    # g is monotone in log(mu); work there so the bracket width is meaningful and
    # the endpoint checks see exactly the values the root finder will see
    def excess(lm):
        return censoring_probability(spec, math.exp(lm)) - p_cen

    lo, hi = (math.log(b) for b in BRACKET)
    f_lo, f_hi = excess(lo), excess(hi)
    grow = 0
    while (f_lo > 0 or f_hi < 0) and grow < 12:
        if f_lo > 0:
            lo -= math.log(100.0)
            f_lo = excess(lo)
        if f_hi < 0:
            hi += math.log(100.0)
            f_hi = excess(hi)
        grow += 1
    if not f_lo <= 0 <= f_hi:
        raise CalibrationError(
            f"p_cen={p_cen!r} is outside the attainable range [{f_lo + p_cen:.6g}, {f_hi + p_cen:.6g}] "
            f"for mu in [{math.exp(lo):g}, {math.exp(hi):g}]")
    return math.exp(quadrature.find_root(excess, (lo, hi), tol=tol))


def generate_dataset(spec: ModelSpec, mu_monitor: float, n: int, seed) -> Dataset:
    """n pairs with common monitoring time X ~ Exponential(rate mu_monitor)."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.exponential(1.0 / mu_monitor, size=n)
    x = np.maximum(x, np.finfo(float).tiny)
    cells = cell_tensor(spec, x, x).reshape(n, -1)
    cum = np.cumsum(cells, axis=1)
    draw = rng.random(n)[:, None] * cum[:, -1:]
    flat = np.minimum((draw >= cum).sum(axis=1), cells.shape[1] - 1)
    j1, j2 = np.divmod(flat, spec.L2 + 1)
    return Dataset(x, x.copy(), j1, j2, spec.L1, spec.L2)


@dataclass(frozen=True)
class SimConfig:
    true_model: ModelSpec
    p_cen: float
    n: int
    replicates: int
    seed: int = 0
    fit_options: FitOptions = field(default_factory=FitOptions)
    confidence: float = 0.95
    template: Template | None = None

    def __post_init__(self):
        if not 0.0 < self.p_cen < 1.0:
            raise ParameterError("p_cen must lie in (0, 1)")
        if self.n < 2:
            raise ParameterError("n must be >= 2")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ParameterError("confidence must lie in (0, 1)")

    def resolved_template(self) -> Template:
        return self.template if self.template is not None else Template.from_spec(self.true_model)


@dataclass(frozen=True)
class ParamSummary:
    name: str
    truth: float
    bias: float
    sse: float
    ase: float
    cp: float
    n_estimates: int
    n_se: int
    single_replicate: bool = False


@dataclass
class SimSummary:
    params: list
    mu_monitor: float
    replicates: int
    successes: int
    not_converged: int
    se_unavailable: int
    failed: int
    estimates: np.ndarray
    standard_errors: np.ndarray
    elapsed: float = 0.0

    def row(self, name) -> ParamSummary:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


def z_value(confidence: float) -> float:
    if confidence == 0.95:
        return Z_95
    from scipy.stats import norm
    return float(norm.ppf(0.5 + confidence / 2.0))


def replicate_seeds(seed: int, replicates: int):
    """Independent child seeds; replicate r always receives the same stream."""
    return np.random.SeedSequence(seed).spawn(replicates)


def run_replicate(config: SimConfig, mu: float, child, template: Template):
    data = generate_dataset(config.true_model, mu, config.n, child)
    init = default_init(template, data)
    return fit(data, template, init, config.fit_options)


def run_study(config: SimConfig, progress=None) -> SimSummary:
    """Repeat generate-and-fit; summarise Bias, SSE, ASE and CP per parameter."""
    start = time.perf_counter()
    template = config.resolved_template()
    names = template.names
    truth = template.values_of(config.true_model)
    mu = solve_monitoring_rate(config.true_model, config.p_cen)
    est = np.full((config.replicates, len(names)), np.nan)
    ses = np.full((config.replicates, len(names)), np.nan)
    converged = np.zeros(config.replicates, dtype=bool)
    failed = 0
    for r, child in enumerate(replicate_seeds(config.seed, config.replicates)):
        try:
            res: FitResult = run_replicate(config, mu, child, template)
        except FrailtyError:
            failed += 1
            continue
        converged[r] = res.converged
        if res.converged:
            est[r] = res.estimates
            if res.se is not None:
                ses[r] = res.se
        if progress is not None:
            progress(r, res)
    usable = converged
    if not usable.any():
        raise StudyError(f"no replicate converged ({failed} raised errors, {config.replicates - failed} did not converge)")
    z = z_value(config.confidence)
    rows = []
    for i, name in enumerate(names):
        e = est[usable, i]
        s = ses[usable, i]
        have_se = np.isfinite(s)
        sse = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
        ase = float(np.mean(s[have_se])) if have_se.any() else float("nan")
        cover = np.abs(e[have_se] - truth[i]) <= z * s[have_se]
        cp = float(np.mean(cover)) if have_se.any() else float("nan")
        rows.append(ParamSummary(name, float(truth[i]), float(np.mean(e) - truth[i]), sse, ase, cp,
                                 int(e.size), int(have_se.sum()), single_replicate=e.size == 1))
    se_missing = int(np.sum(usable & ~np.all(np.isfinite(ses), axis=1)))
    return SimSummary(rows, mu, config.replicates, int(usable.sum()),
                      int(config.replicates - failed - usable.sum()), se_missing, failed,
                      est, ses, time.perf_counter() - start)
