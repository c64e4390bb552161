"""Parametric cause-specific baseline hazards h(t) = a(gamma, alpha) t^(gamma-1) b(t).

Every function here is vectorised over ``t``.  Internally hazards are handled
as log-rates so that products of extreme factors never overflow; the public
:func:`hazard_rate` and :func:`cumulative_hazard` raise
:class:`~bcsfrail.errors.DomainOverflowError` instead of returning ``inf``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainOverflowError, ParameterError

EXP_LIMIT = 700.0
_FPMIN = 1e-300
_EPS = 1e-15


class HazardFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    GAMMA = "gamma"
    LOGLOGISTIC = "loglogistic"
    WEIBULL_GOMPERTZ = "weibull-gompertz"

    @classmethod
    def parse(cls, name: str) -> "HazardFamily":
        try:
            return cls(name.strip().lower())
        except ValueError:
            known = ", ".join(f.value for f in cls)
            raise ParameterError(f"unknown hazard family {name!r} (expected one of {known})") from None


@dataclass(frozen=True)
class HazardSpec:
    """One baseline hazard: family tag, shape ``gamma`` and scale ``alpha``.

    ``alpha`` is in inverse time units.  Exponential hazards keep ``gamma``
    at 1; anything else is reported by :func:`validate_hazard_params`.
    """

    family: HazardFamily
    alpha: float
    gamma: float = 1.0

    def __post_init__(self):
        if not isinstance(self.family, HazardFamily):
            object.__setattr__(self, "family", HazardFamily.parse(str(self.family)))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def exponential(cls, alpha):
        return cls(HazardFamily.EXPONENTIAL, alpha, 1.0)

    @classmethod
    def weibull(cls, gamma, alpha):
        return cls(HazardFamily.WEIBULL, alpha, gamma)

    def replace(self, **changes) -> "HazardSpec":
        fields = {"family": self.family, "alpha": self.alpha, "gamma": self.gamma}
        fields.update(changes)
        return HazardSpec(**fields)


@dataclass(frozen=True)
class Violation:
    field: str
    bound: str

    def __str__(self):
        return f"{self.field}: {self.bound}"


def validate_hazard_params(spec: HazardSpec) -> list[Violation]:
    """Return the list of constraint violations; an empty list means valid."""
    problems = []
    for name in ("gamma", "alpha"):
        value = getattr(spec, name)
        if not math.isfinite(value):
            problems.append(Violation(name, "must be finite"))
        elif value <= 0:
            problems.append(Violation(name, "must be > 0"))
    if spec.family is HazardFamily.EXPONENTIAL and math.isfinite(spec.gamma) and spec.gamma != 1.0:
        problems.append(Violation("gamma", "fixed to 1 for exponential"))
    return problems


def check_hazard(spec: HazardSpec) -> None:
    problems = validate_hazard_params(spec)
    if problems:
        raise ParameterError(f"invalid {spec.family.value} hazard: " + "; ".join(map(str, problems)))


# ---------------------------------------------------------------------------
# regularized upper incomplete gamma Q(a, x)


def _gamma_p_series(a, x, max_iter=100_000):
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = np.ones(a.shape, dtype=bool)
    for _ in range(max_iter):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active &= np.abs(term) >= np.abs(total) * _EPS
        if not active.any():
            break
    return total * np.exp(-x + a * np.log(x) - special.gammaln(a))


def _log_gamma_q_cf(a, x):
    return -x + a * np.log(x) - special.gammaln(a) + _log_cf_tail(a, x)


def _log_cf_tail(a, x, max_iter=100_000):
    """log of the continued-fraction factor of Q(a, x); about -log x for large x."""
    # modified Lentz evaluation
    b = x + 1.0 - a
    c = np.full(a.shape, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(a.shape, dtype=bool)
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = b + an / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = np.where(active, d * c, 1.0)
        h = h * delta
        active &= np.abs(delta - 1.0) >= _EPS
        if not active.any():
            break
    return np.log(h)


def log_gamma_q(a, x):
    """log Q(a, x) by series (x < a + 1) or continued fraction (otherwise)."""
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    out = np.zeros(a.shape)
    series = (x > 0) & (x < a + 1.0)
    frac = x >= a + 1.0
    if series.any():
        out[series] = np.log1p(-_gamma_p_series(a[series], x[series]))
    if frac.any():
        out[frac] = _log_gamma_q_cf(a[frac], x[frac])
    return out[()] if out.ndim == 0 else out


def gamma_q(a, x):
    return np.exp(log_gamma_q(a, x))


# ---------------------------------------------------------------------------
# hazard functions


def scale_factor(spec: HazardSpec) -> float:
    """The a(gamma, alpha) prefactor of the family."""
    g, al = spec.gamma, spec.alpha
    fam = spec.family
    if fam is HazardFamily.EXPONENTIAL:
        return al
    if fam is HazardFamily.GAMMA:
        return al**g / math.gamma(g)
    return g * al**g


def log_hazard(spec: HazardSpec, t):
    """log h(t); finite for every finite t > 0 (never overflows)."""
    t = np.asarray(t, dtype=float)
    g, al = spec.gamma, spec.alpha
    fam = spec.family
    if fam is HazardFamily.EXPONENTIAL:
        return np.full(t.shape, math.log(al))[()]
    logt = np.log(t)
    if fam is HazardFamily.WEIBULL:
        return math.log(g) + g * math.log(al) + (g - 1.0) * logt
    if fam is HazardFamily.GAMMA:
        x = al * t
        frac = x >= g + 1.0
        out = np.empty(np.shape(x))
        # in the continued-fraction regime the e^-x and power factors cancel exactly
        if np.any(frac):
            out[frac] = -logt[frac] - _log_cf_tail(np.full(np.count_nonzero(frac), g), x[frac])
        near = ~frac
        if np.any(near):
            out[near] = (g * math.log(al) + (g - 1.0) * logt[near] - x[near] - special.gammaln(g)
                         - log_gamma_q(g, x[near]))
        return out[()]
    if fam is HazardFamily.LOGLOGISTIC:
        lx = g * (math.log(al) + logt)
        return math.log(g) + g * math.log(al) + (g - 1.0) * logt - np.logaddexp(0.0, lx)
    if fam is HazardFamily.WEIBULL_GOMPERTZ:
        return math.log(g) + g * math.log(al) + (g - 1.0) * logt + al * t
    raise ParameterError(f"unsupported family {fam}")


def hazard_rate(spec: HazardSpec, t):
    """h(t) for t > 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ParameterError("hazard_rate needs t > 0")
    lh = log_hazard(spec, t_arr)
    if np.any(np.asarray(lh) > EXP_LIMIT):
        bad = t_arr[np.asarray(lh) > EXP_LIMIT] if t_arr.ndim else t_arr
        raise DomainOverflowError(f"hazard overflows at t={np.ravel(bad)[0]!r}", t=float(np.ravel(bad)[0]))
    return np.exp(lh)


def _cumhaz(spec: HazardSpec, t):
    """H(t) without overflow checks; may return inf."""
    t = np.asarray(t, dtype=float)
    g, al = spec.gamma, spec.alpha
    fam = spec.family
    x = al * t
    if fam is HazardFamily.EXPONENTIAL:
        return x
    if fam is HazardFamily.WEIBULL:
        return x**g
    if fam is HazardFamily.LOGLOGISTIC:
        with np.errstate(divide="ignore"):
            return np.logaddexp(0.0, g * np.log(x))[()]
    if fam is HazardFamily.GAMMA:
        return -log_gamma_q(g, x)
    if fam is HazardFamily.WEIBULL_GOMPERTZ:
        # gamma * int_0^x v^(g-1) e^v dv = x^g 1F1(g; g+1; x)
        with np.errstate(over="ignore"):
            out = x**g * special.hyp1f1(g, g + 1.0, np.minimum(x, EXP_LIMIT + 10.0))
        return np.where(x > EXP_LIMIT, np.inf, out)[()]
    raise ParameterError(f"unsupported family {fam}")


def cumulative_hazard(spec: HazardSpec, t):
    """H(t) = int_0^t h(u) du for t >= 0."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ParameterError("cumulative_hazard needs t >= 0")
    if spec.family is HazardFamily.WEIBULL_GOMPERTZ and np.any(spec.alpha * t_arr > EXP_LIMIT):
        bad = float(np.max(t_arr))
        raise DomainOverflowError(f"cumulative hazard exponent exceeds {EXP_LIMIT} at t={bad!r}", t=bad)
    out = _cumhaz(spec, t_arr)
    if not np.all(np.isfinite(out)):
        bad = float(np.ravel(t_arr)[~np.isfinite(np.ravel(out))][0]) if t_arr.ndim else float(t_arr)
        raise DomainOverflowError(f"cumulative hazard overflows at t={bad!r}", t=bad)
    return out


def proportional_weights(specs) -> np.ndarray | None:
    """Weights pi_j with h_j = pi_j * sum(h) when the hazards are proportional.

    Returns ``None`` when no such factorisation holds.  Proportionality holds
    when all hazards share the family and shape, and (for families whose
    b(t) depends on alpha) the scale as well.
    """
    specs = list(specs)
    if len(specs) == 1:
        return np.ones(1)
    first = specs[0]

    def kind(s):
        return HazardFamily.WEIBULL if s.family is HazardFamily.EXPONENTIAL else s.family

    if any(kind(s) is not kind(first) or s.gamma != first.gamma for s in specs):
        return None
    if kind(first) is HazardFamily.WEIBULL:
        scale = np.array([s.alpha**s.gamma for s in specs])
        return scale / scale.sum()
    if any(s.alpha != first.alpha for s in specs):
        return None
    return np.full(len(specs), 1.0 / len(specs))
