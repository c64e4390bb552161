"""Maximum likelihood fitting, Hessian standard errors, AIC and LR tests.

A :class:`Template` fixes the shape of a model (hazard families, frailty
variant, cause counts) and which parameters are free, tied or held fixed.
Free parameters are optimised on an unconstrained scale: log for positive
quantities and, for each correlation, the logit of ``c`` in
``rho = c * min(sigma1/sigma2, sigma2/sigma1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import FrailtyError, IntegrityError, ParameterError
from .frailty import (FRAILTY_TAGS, Correlated, CorrelatedCauseSpecific, ModelSpec, Shared,
                      SharedCauseSpecific)
from .hazards import HazardFamily, HazardSpec, gamma_q
from .likelihood import Dataset, check_compatible, log_likelihood_terms

PENALTY = 1e300
COND_LIMIT = 1e12


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 4000
    tolerance: float = 1e-6
    restarts: int = 1
    fd_step: float = 1e-4
    seed: int = 0
    nodes: int | None = None

    def __post_init__(self):
        for name in ("max_iterations", "tolerance", "fd_step"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.restarts < 0:
            raise ParameterError("restarts must be >= 0")
        if self.nodes is not None and self.nodes < 2:
            raise ParameterError("nodes must be >= 2")


@dataclass(frozen=True)
class ParamVector:
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).copy())
        if len(self.names) != len(self.values):
            raise ParameterError("names and values differ in length")

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class Template:
    """Model shape plus the free/tied/fixed status of every parameter."""

    families: tuple
    frailty: str
    tie_shapes: bool = False
    tie_sigmas: bool = False
    fixed: tuple = ()

    def __post_init__(self):
        fams = tuple(tuple(HazardFamily.parse(f) if not isinstance(f, HazardFamily) else f for f in row)
                     for row in self.families)
        object.__setattr__(self, "families", fams)
        if self.frailty not in FRAILTY_TAGS:
            raise ParameterError(f"unknown frailty model {self.frailty!r}")
        if self.frailty.endswith("cause-specific") and len(fams[0]) != len(fams[1]):
            raise ParameterError("cause-specific frailty needs L1 == L2")
        if self.tie_sigmas and self.frailty not in ("correlated", "correlated-cause-specific"):
            raise ParameterError("tie_sigmas applies to correlated frailty models only")
        fixed = tuple((str(k), float(v)) for k, v in (self.fixed.items() if isinstance(self.fixed, dict) else self.fixed))
        object.__setattr__(self, "fixed", fixed)
        unknown = [k for k, _ in fixed if k not in self.names_all and k not in self._targets()]
        if unknown:
            raise ParameterError(f"cannot fix unknown parameter(s) {', '.join(unknown)}")

    @classmethod
    def from_spec(cls, spec: ModelSpec, **kw) -> "Template":
        return cls(tuple(tuple(h.family for h in row) for row in spec.hazards), spec.frailty.tag, **kw)

    @property
    def L1(self):
        return len(self.families[0])

    @property
    def L2(self):
        return len(self.families[1])

    # parameter bookkeeping ---------------------------------------------------

    @property
    def names_all(self) -> list:
        names = []
        for k, row in enumerate(self.families, 1):
            for j, fam in enumerate(row, 1):
                if fam is not HazardFamily.EXPONENTIAL:
                    names.append(f"gamma{k}.{j}")
                names.append(f"alpha{k}.{j}")
        if self.frailty == "shared":
            names.append("sigma")
        elif self.frailty == "correlated":
            names += ["sigma1", "sigma2", "rho"]
        elif self.frailty == "shared-cause-specific":
            names += [f"sigma.{j}" for j in range(1, self.L1 + 1)]
        else:
            for j in range(1, self.L1 + 1):
                names += [f"sigma1.{j}", f"sigma2.{j}", f"rho.{j}"]
        return names

    def alias(self, name: str) -> str:
        """Name of the free (or fixed) parameter that ``name`` takes its value from."""
        if self.tie_shapes and name.startswith("gamma"):
            return name.split(".")[0]
        if self.tie_sigmas and name.startswith("sigma"):
            if self.frailty == "correlated":
                return "sigma"
            return "sigma." + name.split(".")[1]
        return name

    def _targets(self):
        out = []
        for name in self.names_all:
            a = self.alias(name)
            if a not in out:
                out.append(a)
        return out

    @property
    def fixed_values(self) -> dict:
        return dict(self.fixed)

    @property
    def names(self) -> list:
        """Free parameter names in packing order."""
        fixed = self.fixed_values
        return [a for a in self._targets() if a not in fixed]

    @property
    def n_params(self) -> int:
        return len(self.names)

    def kind(self, name: str) -> str:
        return "rho" if name.startswith("rho") else "positive"

    def _sigma_partner(self, rho_name):
        if rho_name == "rho":
            return self.alias("sigma1"), self.alias("sigma2")
        j = rho_name.split(".")[1]
        return self.alias(f"sigma1.{j}"), self.alias(f"sigma2.{j}")

    # conversions -----------------------------------------------------------

    def full_values(self, free: dict) -> dict:
        values = dict(self.fixed_values)
        values.update(free)
        return {name: values[self.alias(name)] for name in self.names_all}

    def build(self, values, check=True) -> ModelSpec:
        """ModelSpec from a ParamVector, a dict of free values or a free-value vector."""
        if isinstance(values, ParamVector):
            values = values.as_dict()
        elif not isinstance(values, dict):
            values = dict(zip(self.names, np.asarray(values, dtype=float).tolist()))
        full = self.full_values(values)
        hazards = []
        for k, row in enumerate(self.families, 1):
            hz = []
            for j, fam in enumerate(row, 1):
                gamma = 1.0 if fam is HazardFamily.EXPONENTIAL else full[f"gamma{k}.{j}"]
                hz.append(HazardSpec(fam, full[f"alpha{k}.{j}"], gamma))
            hazards.append(tuple(hz))
        L = self.L1
        if self.frailty == "shared":
            frailty = Shared(full["sigma"])
        elif self.frailty == "correlated":
            frailty = Correlated(full["sigma1"], full["sigma2"], full["rho"])
        elif self.frailty == "shared-cause-specific":
            frailty = SharedCauseSpecific(tuple(full[f"sigma.{j}"] for j in range(1, L + 1)))
        else:
            frailty = CorrelatedCauseSpecific(tuple(full[f"sigma1.{j}"] for j in range(1, L + 1)),
                                              tuple(full[f"sigma2.{j}"] for j in range(1, L + 1)),
                                              tuple(full[f"rho.{j}"] for j in range(1, L + 1)))
        return ModelSpec(tuple(hazards), frailty, check=check)

    def values_of(self, spec: ModelSpec) -> np.ndarray:
        """Free-parameter vector of a ModelSpec with this template's shape."""
        full = {}
        for k, row in enumerate(spec.hazards, 1):
            for j, h in enumerate(row, 1):
                full[f"gamma{k}.{j}"] = h.gamma
                full[f"alpha{k}.{j}"] = h.alpha
        fr = spec.frailty.values()
        full.update(fr)
        if self.frailty == "correlated" and self.tie_sigmas:
            full["sigma"] = fr["sigma1"]
        for j in range(1, self.L1 + 1):
            if f"sigma1.{j}" in fr and self.tie_sigmas:
                full[f"sigma.{j}"] = fr[f"sigma1.{j}"]
        if self.tie_shapes:
            for k in (1, 2):
                if f"gamma{k}.1" in full:
                    full[f"gamma{k}"] = full[f"gamma{k}.1"]
        return np.array([full[n] for n in self.names])

    def pack(self, spec: ModelSpec) -> ParamVector:
        return ParamVector(self.names, self.values_of(spec))

    def to_unconstrained(self, values) -> np.ndarray:
        """Map free natural-scale values to R^p."""
        values = np.asarray(values.values if isinstance(values, ParamVector) else values, dtype=float)
        named = dict(zip(self.names, values.tolist()))
        full = dict(self.fixed_values)
        full.update(named)
        z = np.empty(len(values))
        for i, name in enumerate(self.names):
            v = named[name]
            if self.kind(name) == "positive":
                if not (math.isfinite(v) and v > 0):
                    raise ParameterError(f"{name} must be > 0 (got {v!r})")
                z[i] = math.log(v)
            else:
                s1, s2 = (full[n] for n in self._sigma_partner(name))
                bound = min(s1 / s2, s2 / s1)
                c = v / bound
                if not 0.0 < c < 1.0:
                    raise ParameterError(f"{name}={v!r} violates 0 < rho < {bound:.6g}")
                z[i] = math.log(c) - math.log1p(-c)
        return z

    def from_unconstrained(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.empty(len(z))
        full = dict(self.fixed_values)
        for i, name in enumerate(self.names):
            if self.kind(name) == "positive":
                out[i] = math.exp(z[i])
                full[name] = out[i]
        for i, name in enumerate(self.names):
            if self.kind(name) == "rho":
                s1, s2 = (full[n] for n in self._sigma_partner(name))
                c = 1.0 / (1.0 + math.exp(-z[i])) if z[i] >= 0 else math.exp(z[i]) / (1.0 + math.exp(z[i]))
                out[i] = c * min(s1 / s2, s2 / s1)
        return out


def transform_to_unconstrained(template: Template, params) -> np.ndarray:
    return template.to_unconstrained(params)


def transform_from_unconstrained(template: Template, z) -> ParamVector:
    return ParamVector(template.names, template.from_unconstrained(z))


def default_init(template: Template, data: Dataset) -> ParamVector:
    """Crude-rate scales, unit shapes, unit frailty sds, rho at half its bound."""
    values = {}
    exposure = (float(np.sum(data.x1)), float(np.sum(data.x2)))
    for k, (row, causes) in enumerate(zip(template.families, (data.j1, data.j2)), 1):
        for j in range(1, len(row) + 1):
            events = int(np.sum(causes == j))
            values[f"alpha{k}.{j}"] = max(events, 0.5) / exposure[k - 1]
    init = []
    for name in template.names:
        if name in values:
            init.append(values[name])
        elif name.startswith("rho"):
            init.append(math.nan)
        else:
            init.append(1.0)
    out = np.array(init)
    # rho depends on the sigma values just chosen
    full = dict(template.fixed_values)
    full.update(zip(template.names, out.tolist()))
    for i, name in enumerate(template.names):
        if name.startswith("rho"):
            s1, s2 = (full[n] for n in template._sigma_partner(name))
            out[i] = 0.5 * min(s1 / s2, s2 / s1)
    return ParamVector(template.names, out)


@dataclass
class FitResult:
    names: list
    estimates: np.ndarray
    se: np.ndarray | None
    loglik: float
    aic: float
    converged: bool
    iterations: int
    evaluations: int
    underflow_warnings: int
    hessian_pd: bool
    n_params: int
    model: ModelSpec | None = None
    hessian: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)
    template: Template | None = None

    @property
    def mle(self) -> ParamVector:
        return ParamVector(self.names, self.estimates)


def aic(fit_or_loglik, n_params=None) -> float:
    """-2 loglik + 2 p."""
    if isinstance(fit_or_loglik, FitResult):
        return -2.0 * fit_or_loglik.loglik + 2.0 * fit_or_loglik.n_params
    return -2.0 * float(fit_or_loglik) + 2.0 * n_params


class _Objective:
    def __init__(self, template, data, nodes):
        self.template = template
        self.data = data
        self.nodes = nodes
        self.calls = 0

    def natural(self, theta):
        """-loglik at natural-scale free values; ParameterError outside the domain."""
        spec = self.template.build(theta)
        self.calls += 1
        return -log_likelihood_terms(spec, self.data, self.nodes).total

    def __call__(self, z):
        # the simplex probes extreme points; overflow there becomes the penalty, not a warning
        try:
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                val = self.natural(self.template.from_unconstrained(z))
        except (FrailtyError, OverflowError, FloatingPointError):
            return PENALTY
        return val if math.isfinite(val) else PENALTY


def fit(data: Dataset, template: Template, init=None, options: FitOptions | None = None) -> FitResult:
    """Maximise the log-likelihood by Nelder-Mead with jittered restarts."""
    options = options or FitOptions()
    if len(data) == 0:
        raise ParameterError("cannot fit an empty dataset")
    if init is None:
        init = default_init(template, data)
    elif isinstance(init, ModelSpec):
        init = template.pack(init)
    elif isinstance(init, dict):
        init = ParamVector(template.names, [init[n] for n in template.names])
    check_compatible(template.build(init), data)
    objective = _Objective(template, data, options.nodes)
    z0 = template.to_unconstrained(init)
    f0 = objective(z0)
    rng = np.random.default_rng(options.seed)
    diagnostics = []
    if template.frailty == "correlated-cause-specific":
        diagnostics.append("advisory: correlated cause-specific fits often fail to converge")

    def run(start):
        res = optimize.minimize(objective, start, method="Nelder-Mead",
                                options={"maxiter": options.max_iterations, "maxfev": 4 * options.max_iterations,
                                         "xatol": options.tolerance, "fatol": options.tolerance,
                                         "adaptive": len(start) > 6})
        diameter = float(np.max(np.abs(res.final_simplex[0] - res.final_simplex[0][0])))
        return res, diameter

    best, best_diam = run(z0)
    iterations = int(best.nit)
    last, last_diam = best, best_diam
    for _ in range(options.restarts):
        start = _jitter(template, best.x, rng)
        last, last_diam = run(start)
        iterations += int(last.nit)
        if last.fun < best.fun:
            best, best_diam = last, last_diam
    stable_tol = max(options.tolerance, 1e-8 * abs(best.fun)) * 10.0
    improved = best.fun <= f0
    converged = (best.fun < PENALTY and best_diam < options.tolerance * 10.0
                 and abs(last.fun - best.fun) <= stable_tol and improved)
    if not improved:
        diagnostics.append("no restart improved on the initial value")
    if best_diam >= options.tolerance * 10.0:
        diagnostics.append(f"simplex diameter {best_diam:.3g} above tolerance")
    if abs(last.fun - best.fun) > stable_tol:
        diagnostics.append(f"final restart ended {last.fun - best.fun:.3g} above the best value")

    theta = template.from_unconstrained(best.x)
    spec = template.build(theta)
    terms = log_likelihood_terms(spec, data, options.nodes)
    loglik = terms.total
    if terms.floored.size:
        diagnostics.append(f"{terms.floored.size} observation probabilities floored at 1e-300")
    se, pd, hess = None, False, None
    try:
        se, pd, hess = hessian_standard_errors(template, theta, data, options.fd_step, options.nodes)
    except FrailtyError as exc:
        diagnostics.append(f"hessian failed: {exc}")
    if not pd:
        diagnostics.append("hessian not positive definite or ill-conditioned; standard errors unavailable")
    p = template.n_params
    return FitResult(list(template.names), theta, se, loglik, -2.0 * loglik + 2.0 * p, bool(converged),
                     iterations, objective.calls, int(terms.floored.size), pd, p, spec, hess,
                     diagnostics, template)


def _jitter(template, z, rng):
    """Multiplicative +-20% jitter of positive parameters; rho factor jittered likewise."""
    theta = template.from_unconstrained(z)
    factors = rng.uniform(0.8, 1.2, size=len(theta))
    out = z.copy()
    for i, name in enumerate(template.names):
        if template.kind(name) == "positive":
            out[i] = z[i] + math.log(factors[i])
        else:
            c = 1.0 / (1.0 + math.exp(-z[i]))
            c = min(max(c * factors[i], 1e-6), 1 - 1e-6)
            out[i] = math.log(c) - math.log1p(-c)
    return out


def numerical_hessian(fun, theta, steps, admissible=None):
    """Central-difference Hessian of ``fun`` at ``theta``.

    ``admissible(point)`` rejects stencil points outside the parameter space;
    the step of the offending coordinate is halved until all points pass.
    """
    theta = np.asarray(theta, dtype=float)
    steps = np.asarray(steps, dtype=float).copy()
    p = len(theta)
    if admissible is not None:
        for i in range(p):
            for _ in range(60):
                ok = True
                for j in range(p):
                    for si in (1, -1):
                        for sj in (1, -1):
                            x = theta.copy()
                            x[i] += si * steps[i]
                            x[j] += sj * steps[j]
                            ok &= admissible(x)
                if ok:
                    break
                steps[i] *= 0.5
    f0 = fun(theta)
    hess = np.empty((p, p))
    cache = {}

    def at(offsets):
        key = tuple(offsets)
        if key not in cache:
            x = theta.copy()
            for idx, sign in offsets:
                x[idx] += sign * steps[idx]
            cache[key] = fun(x)
        return cache[key]

    for i in range(p):
        hess[i, i] = (at([(i, 1)]) - 2.0 * f0 + at([(i, -1)])) / steps[i] ** 2
        for j in range(i):
            val = (at([(i, 1), (j, 1)]) - at([(i, 1), (j, -1)]) - at([(i, -1), (j, 1)])
                   + at([(i, -1), (j, -1)])) / (4.0 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = val
    return hess


def standard_errors_from_hessian(hess):
    """(se, pd) from the Hessian of the negative log-likelihood."""
    if not np.all(np.isfinite(hess)):
        return None, False
    try:
        np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        return None, False
    if np.linalg.cond(hess) > COND_LIMIT:
        return None, False
    cov = np.linalg.inv(hess)
    diag = np.diag(cov)
    if np.any(diag <= 0):
        return None, False
    return np.sqrt(diag), True


def hessian_standard_errors(template: Template, theta, data: Dataset, fd_step: float = 1e-4,
                            nodes: int | None = None):
    """Standard errors on the natural scale from a finite-difference Hessian.

    Returns ``(se, pd, hessian)``; ``se`` is None when the Hessian is not
    positive definite or its condition number exceeds 1e12.
    """
    theta = np.asarray(theta.values if isinstance(theta, ParamVector) else theta, dtype=float)
    objective = _Objective(template, data, nodes)
    steps = fd_step * np.maximum(np.abs(theta), 1e-2)

    def admissible(x):
        try:
            template.build(x)
        except ParameterError:
            return False
        return True

    hess = numerical_hessian(objective.natural, theta, steps, admissible)
    se, pd = standard_errors_from_hessian(hess)
    return se, pd, hess


@dataclass(frozen=True)
class LRTResult:
    statistic: float
    df: int
    p_value: float


def chi2_sf(x, df):
    """Upper tail of the chi-square distribution."""
    if x <= 0:
        return 1.0
    return float(gamma_q(df / 2.0, x / 2.0))


def likelihood_ratio_test(full: FitResult, restricted: FitResult, df: int) -> LRTResult:
    """2 (loglik_full - loglik_restricted) against chi-square(df)."""
    if df < 1:
        raise ParameterError("df must be >= 1")
    stat = 2.0 * (full.loglik - restricted.loglik)
    if stat < -1e-6:
        raise IntegrityError(f"restricted fit beats the full fit by {-stat / 2:.3g} in loglik; "
                             "models not nested or a fit did not converge")
    stat = max(stat, 0.0)
    return LRTResult(stat, int(df), chi2_sf(stat, df))
