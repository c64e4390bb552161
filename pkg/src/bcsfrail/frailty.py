"""Gamma frailty dependence models for a pair of competing-risks failure times.

All four variants share one piece of algebra.  Writing H1 (length L1) and H2
(length L2) for the cause-specific cumulative baseline hazards of the two
individuals, each variant supplies

* ``log S``: the joint survival,
* ``g1[j] = -dlog S/dH1[j]`` and ``g2[j] = -dlog S/dH2[j]``,
* ``E[j1, j2] = -dg1[j1]/dH2[j2]``, stored as a common part plus a
  per-cause diagonal part.

The joint sub-density is then ``h1[j1] h2[j2] S (g1[j1] g2[j2] + E[j1, j2])``,
the marginal sub-density is ``h_k[j] S g_k[j]`` with the other coordinate at 0,
and the tail integrals entering the cross ratio are ``h S g``, so that the
cross ratio equals ``1 + E / (g1 g2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from . import quadrature
from .errors import ParameterError, UnstablePointError
from .hazards import EXP_LIMIT, HazardSpec, _cumhaz, check_hazard, log_hazard, validate_hazard_params

DENSITY_TOL = 1e-8
TAIL_TOL = 1e-6
TAIL_S_MAX = 1.0 - 1e-12
LOG_TAIL_FAR = 30.0
UNSTABLE_FLOOR = 1e-300


class Kernel(NamedTuple):
    log_s: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    e_common: np.ndarray
    e_diag: np.ndarray | None

    def k_entry(self, j1, j2):
        """g1[j1] g2[j2] + E[j1, j2] for fixed 0-based cause indices."""
        out = self.g1[..., j1] * self.g2[..., j2] + self.e_common
        if self.e_diag is not None and j1 == j2:
            out = out + self.e_diag[..., j1]
        return out

    def k_rows(self, j1, j2):
        """Like :meth:`k_entry` with one cause pair per leading-axis row."""
        rows = np.arange(len(j1))
        g1 = np.moveaxis(self.g1, -1, 1)[rows, j1]
        g2 = np.moveaxis(self.g2, -1, 1)[rows, j2]
        out = g1 * g2 + self.e_common
        if self.e_diag is not None:
            diag = np.moveaxis(self.e_diag, -1, 1)[rows, j1]
            same = (j1 == j2).reshape((-1,) + (1,) * (diag.ndim - 1))
            out = out + np.where(same, diag, 0.0)
        return out

    def k_matrix(self):
        """All K entries, shape (..., L1, L2)."""
        out = self.g1[..., :, None] * self.g2[..., None, :] + self.e_common[..., None, None]
        if self.e_diag is not None:
            out = out + self.e_diag[..., :, None] * np.eye(self.e_diag.shape[-1])
        return out


def _block(s1sq, s2sq, rho_term, h1, h2):
    """Correlated-Gamma pieces for one frailty pair; returns log S, g1, g2, E."""
    a = rho_term
    b1 = 1.0 / s1sq - a
    b2 = 1.0 / s2sq - a
    with np.errstate(invalid="ignore"):
        la = np.log1p(s1sq * h1 + s2sq * h2)
        lb1 = np.log1p(s1sq * h1)
        lb2 = np.log1p(s2sq * h2)
        log_s = -a * la - b1 * lb1 - b2 * lb2
        inv_a = np.exp(-la)
        g1 = s1sq * (a * inv_a + b1 * np.exp(-lb1))
        g2 = s2sq * (a * inv_a + b2 * np.exp(-lb2))
        e = s1sq * s2sq * a * inv_a * inv_a
    return log_s, g1, g2, e


@dataclass(frozen=True)
class Shared:
    """One Gamma frailty with mean 1 and variance sigma^2 common to the pair."""

    sigma: float
    tag = "shared"

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))

    def validate(self, l1, l2):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            return ["sigma must be > 0"]
        return []

    def kernel(self, h1, h2):
        s2 = self.sigma**2
        tot = h1.sum(axis=-1) + h2.sum(axis=-1)
        lc = np.log1p(s2 * tot)
        inv_c = 1.0 / (1.0 + s2 * tot)
        g1 = np.broadcast_to(inv_c[..., None], h1.shape)
        g2 = np.broadcast_to(inv_c[..., None], h2.shape)
        return Kernel(-lc / s2, g1, g2, s2 * inv_c * inv_c, None)

    def values(self):
        return {"sigma": self.sigma}


@dataclass(frozen=True)
class Correlated:
    """Correlated Gamma frailties with sd sigma1, sigma2 and correlation rho."""

    sigma1: float
    sigma2: float
    rho: float
    tag = "correlated"

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "rho"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def validate(self, l1, l2):
        return _correlated_problems(self.sigma1, self.sigma2, self.rho, "")

    def kernel(self, h1, h2):
        s1sq, s2sq = self.sigma1**2, self.sigma2**2
        a = self.rho / (self.sigma1 * self.sigma2)
        log_s, g1, g2, e = _block(s1sq, s2sq, a, h1.sum(axis=-1), h2.sum(axis=-1))
        return Kernel(log_s, np.broadcast_to(g1[..., None], h1.shape),
                      np.broadcast_to(g2[..., None], h2.shape), e, None)

    def values(self):
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "rho": self.rho}


@dataclass(frozen=True)
class SharedCauseSpecific:
    """A separate shared Gamma frailty per cause, independent across causes."""

    sigmas: tuple
    tag = "shared-cause-specific"

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in np.atleast_1d(self.sigmas)))

    def validate(self, l1, l2):
        problems = []
        if l1 != l2:
            problems.append(f"cause-specific frailty needs L1 == L2 (got {l1}, {l2})")
        if len(self.sigmas) != l1:
            problems.append(f"expected {l1} sigmas, got {len(self.sigmas)}")
        for j, s in enumerate(self.sigmas, 1):
            if not (math.isfinite(s) and s > 0):
                problems.append(f"sigma.{j} must be > 0")
        return problems

    def kernel(self, h1, h2):
        s2 = np.asarray(self.sigmas) ** 2
        x = s2 * (h1 + h2)
        inv_c = 1.0 / (1.0 + x)
        log_s = (np.log1p(x) @ (-1.0 / s2)) if x.ndim else -np.sum(np.log1p(x) / s2)
        return Kernel(log_s, inv_c, inv_c, np.zeros(log_s.shape), s2 * inv_c * inv_c)

    def values(self):
        return {f"sigma.{j}": s for j, s in enumerate(self.sigmas, 1)}


@dataclass(frozen=True)
class CorrelatedCauseSpecific:
    """Per-cause correlated Gamma frailty pairs, independent across causes."""

    sigma1: tuple
    sigma2: tuple
    rho: tuple
    tag = "correlated-cause-specific"

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "rho"):
            object.__setattr__(self, name, tuple(float(s) for s in np.atleast_1d(getattr(self, name))))

    def validate(self, l1, l2):
        problems = []
        if l1 != l2:
            problems.append(f"cause-specific frailty needs L1 == L2 (got {l1}, {l2})")
        if not len(self.sigma1) == len(self.sigma2) == len(self.rho) == l1:
            problems.append(f"expected {l1} (sigma1, sigma2, rho) triples")
            return problems
        for j, (s1, s2, r) in enumerate(zip(self.sigma1, self.sigma2, self.rho), 1):
            problems += _correlated_problems(s1, s2, r, f".{j}")
        return problems

    def kernel(self, h1, h2):
        s1 = np.asarray(self.sigma1)
        s2 = np.asarray(self.sigma2)
        a = np.asarray(self.rho) / (s1 * s2)
        log_s, g1, g2, e = _block(s1**2, s2**2, a, h1, h2)
        return Kernel(log_s.sum(axis=-1), g1, g2, np.zeros(log_s.shape[:-1]), e)

    def values(self):
        out = {}
        for j in range(len(self.rho)):
            out[f"sigma1.{j + 1}"] = self.sigma1[j]
            out[f"sigma2.{j + 1}"] = self.sigma2[j]
            out[f"rho.{j + 1}"] = self.rho[j]
        return out


FrailtySpec = Union[Shared, Correlated, SharedCauseSpecific, CorrelatedCauseSpecific]
FRAILTY_TAGS = {cls.tag: cls for cls in (Shared, Correlated, SharedCauseSpecific, CorrelatedCauseSpecific)}


def _correlated_problems(s1, s2, rho, suffix):
    problems = []
    for name, s in (("sigma1", s1), ("sigma2", s2)):
        if not (math.isfinite(s) and s > 0):
            problems.append(f"{name}{suffix} must be > 0")
    if problems:
        return problems
    bound = min(s1 / s2, s2 / s1)
    if not (math.isfinite(rho) and 0 < rho < bound):
        problems.append(f"rho{suffix} must satisfy 0 < rho < min(sigma1/sigma2, sigma2/sigma1) = {bound:.6g} (got {rho!r})")
    return problems


@dataclass(frozen=True)
class ReparamCorrelated:
    kappa0: float
    kappa1: float
    kappa2: float
    mu1: float
    mu2: float


def correlated_reparam(sigma1, sigma2, rho) -> ReparamCorrelated:
    """Rates of the three independent Gamma components behind a correlated pair."""
    problems = _correlated_problems(sigma1, sigma2, rho, "")
    if problems:
        raise ParameterError("; ".join(problems))
    k0 = rho / (sigma1 * sigma2)
    mu1 = 1.0 / sigma1**2
    mu2 = 1.0 / sigma2**2
    return ReparamCorrelated(k0, mu1 - k0, mu2 - k0, mu1, mu2)


def correlated_from_reparam(r: ReparamCorrelated):
    """Inverse of :func:`correlated_reparam`; returns (sigma1, sigma2, rho)."""
    mu1 = r.kappa0 + r.kappa1
    mu2 = r.kappa0 + r.kappa2
    return 1.0 / math.sqrt(mu1), 1.0 / math.sqrt(mu2), r.kappa0 / math.sqrt(mu1 * mu2)


@dataclass(frozen=True)
class ModelSpec:
    """Hazard table plus frailty model.

    ``hazards[k][j]`` is the baseline hazard of individual ``k`` (0 or 1) for
    cause ``j`` (0-based).  Construction validates every constraint unless
    ``check=False``, which exists for exploring parameter values outside the
    admissible region (the resulting object may not describe a probability
    model).
    """

    hazards: tuple
    frailty: FrailtySpec
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        hz = tuple(tuple(row) for row in self.hazards)
        if len(hz) != 2 or not all(hz):
            raise ParameterError("hazards must list at least one cause for each of two individuals")
        object.__setattr__(self, "hazards", hz)
        if self.check:
            problems = self.validate()
            if problems:
                raise ParameterError("invalid model: " + "; ".join(problems))

    @property
    def L1(self):
        return len(self.hazards[0])

    @property
    def L2(self):
        return len(self.hazards[1])

    def validate(self) -> list[str]:
        problems = []
        for k, row in enumerate(self.hazards, 1):
            for j, h in enumerate(row, 1):
                problems += [f"hazard ({k},{j}) {v}" for v in validate_hazard_params(h)]
        problems += self.frailty.validate(self.L1, self.L2)
        return problems

    def replace(self, hazards=None, frailty=None, check=None) -> "ModelSpec":
        return ModelSpec(self.hazards if hazards is None else hazards,
                         self.frailty if frailty is None else frailty,
                         self.check if check is None else check)

    # vectorised building blocks --------------------------------------------

    def cumhaz(self, k, t):
        """Cause-specific cumulative hazards of individual k at t, shape t.shape + (L_k,)."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.broadcast_to(_cumhaz(h, t), t.shape) for h in self.hazards[k]], axis=-1)

    def log_hazards(self, k, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.broadcast_to(log_hazard(h, t), t.shape) for h in self.hazards[k]], axis=-1)

    def kernel(self, t1, t2) -> Kernel:
        t1, t2 = np.broadcast_arrays(np.asarray(t1, dtype=float), np.asarray(t2, dtype=float))
        return self.frailty.kernel(self.cumhaz(0, t1), self.cumhaz(1, t2))

    def min_shape(self, k):
        return min(h.gamma for h in self.hazards[k])


def _cause(spec, k, j):
    n = spec.L1 if k == 0 else spec.L2
    if not (isinstance(j, (int, np.integer)) and 1 <= j <= n):
        raise ParameterError(f"cause index {j!r} out of range 1..{n} for individual {k + 1}")
    return int(j) - 1


def _times(t, strict):
    t = np.asarray(t, dtype=float)
    if strict and np.any(t <= 0):
        raise ParameterError("densities are defined for t > 0 only")
    if np.any(t < 0):
        raise ParameterError("times must be >= 0")
    return t


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


# public operations -----------------------------------------------------------


def joint_survival(spec: ModelSpec, t1, t2):
    """S(t1, t2) = P[T1 > t1, T2 > t2]."""
    t1, t2 = _times(t1, False), _times(t2, False)
    return _scalar(np.exp(spec.kernel(t1, t2).log_s))


def marginal_survival(spec: ModelSpec, k: int, t):
    """S^(k)(t) for individual k in {1, 2}."""
    t = _times(t, False)
    zero = np.zeros(t.shape)
    args = (t, zero) if k == 1 else (zero, t)
    return joint_survival(spec, *args)


def joint_sub_density(spec: ModelSpec, j1: int, j2: int, t1, t2):
    """f_{j1 j2}(t1, t2) for causes j1, j2 (1-based)."""
    c1, c2 = _cause(spec, 0, j1), _cause(spec, 1, j2)
    t1, t2 = np.broadcast_arrays(_times(t1, True), _times(t2, True))
    return _scalar(_density(spec, c1, c2, t1, t2))


def _density(spec, c1, c2, t1, t2):
    ker = spec.kernel(t1, t2)
    lh1 = spec.log_hazards(0, t1)[..., c1]
    lh2 = spec.log_hazards(1, t2)[..., c2]
    return np.exp(lh1 + lh2 + ker.log_s) * ker.k_entry(c1, c2)


def _power_map(t, q):
    """u = t s^q with Jacobian; removes the t^(gamma-1) endpoint singularity."""
    def mapping(s):
        u = t * s**q
        return u, q * t * s ** (q - 1.0)
    return mapping


def _shape_power(spec, k):
    g = spec.min_shape(k)
    return min(1.0 / g, 50.0) if g < 1.0 else 1.0


def joint_sub_distribution(spec: ModelSpec, j1: int, j2: int, t1: float, t2: float,
                           rel_tol: float = DENSITY_TOL) -> float:
    """F_{j1 j2}(t1, t2) by adaptive 2D quadrature of the sub-density."""
    c1, c2 = _cause(spec, 0, j1), _cause(spec, 1, j2)
    t1, t2 = float(_times(t1, False)), float(_times(t2, False))
    if t1 == 0.0 or t2 == 0.0:
        return 0.0
    m1 = _power_map(t1, _shape_power(spec, 0))
    m2 = _power_map(t2, _shape_power(spec, 1))

    def integrand(s1, s2):
        u1, w1 = m1(s1)
        u2, w2 = m2(s2)
        return _density(spec, c1, c2, u1, u2) * w1 * w2

    return quadrature.integrate_2d(integrand, ((0.0, 1.0), (0.0, 1.0)), rel_tol=rel_tol).value


def marginal_sub_density(spec: ModelSpec, k: int, j: int, t):
    c = _cause(spec, k - 1, j)
    t = _times(t, True)
    return _scalar(_marginal_density(spec, k, c, t))


def _marginal_density(spec, k, c, t):
    zero = np.zeros(np.shape(t))
    args = (t, zero) if k == 1 else (zero, t)
    ker = spec.kernel(*args)
    g = ker.g1 if k == 1 else ker.g2
    return np.exp(spec.log_hazards(k - 1, t)[..., c] + ker.log_s) * g[..., c]


def marginal_sub_distribution(spec: ModelSpec, k: int, j: int, t: float,
                              rel_tol: float = DENSITY_TOL) -> float:
    """F_j^(k)(t) = P[T_k <= t, J_k = j] by adaptive quadrature."""
    c = _cause(spec, k - 1, j)
    t = float(_times(t, False))
    if t == 0.0:
        return 0.0
    mapping = _power_map(t, _shape_power(spec, k - 1))

    def integrand(s):
        u, w = mapping(s)
        return _marginal_density(spec, k, c, u) * w

    return quadrature.integrate_1d(integrand, 0.0, 1.0, rel_tol=rel_tol).value


def cross_ratio(spec: ModelSpec, j1: int, j2: int, t1: float, t2: float,
                rel_tol: float = TAIL_TOL) -> float:
    """Cross-ratio function CR_{j1 j2}(t1, t2).

    The shared model returns 1 + sigma^2 directly.  Other models divide
    S * f_{j1 j2} by the two tail integrals of the sub-density, which are
    evaluated numerically.
    """
    if isinstance(spec.frailty, Shared):
        _cause(spec, 0, j1), _cause(spec, 1, j2), _times(t1, True), _times(t2, True)
        return 1.0 + spec.frailty.sigma**2
    return cross_ratio_numeric(spec, j1, j2, t1, t2, rel_tol)


def cross_ratio_numeric(spec: ModelSpec, j1: int, j2: int, t1: float, t2: float,
                        rel_tol: float = TAIL_TOL) -> float:
    """Cross-ratio from semi-infinite tail quadrature, for any frailty model."""
    c1, c2 = _cause(spec, 0, j1), _cause(spec, 1, j2)
    t1, t2 = float(_times(t1, True)), float(_times(t2, True))
    numerator = float(joint_survival(spec, t1, t2)) * float(_density(spec, c1, c2, np.array(t1), np.array(t2)))

    def tail_first(u):
        u = np.asarray(u, dtype=float)
        ker = spec.kernel(u, np.full(u.shape, t2))
        lh1 = spec.log_hazards(0, u)
        lh2 = spec.log_hazards(1, np.full(u.shape, t2))[..., c2]
        k = ker.k_matrix()[..., :, c2]
        return (np.exp(lh1 + (lh2 + ker.log_s)[..., None]) * k).sum(axis=-1)

    def tail_second(u):
        u = np.asarray(u, dtype=float)
        ker = spec.kernel(np.full(u.shape, t1), u)
        lh1 = spec.log_hazards(0, np.full(u.shape, t1))[..., c1]
        lh2 = spec.log_hazards(1, u)
        k = ker.k_matrix()[..., c1, :]
        return (np.exp(lh2 + (lh1 + ker.log_s)[..., None]) * k).sum(axis=-1)

    def rest_first(u_far):
        ker = spec.kernel(u_far, t2)
        return math.exp(float(spec.log_hazards(1, t2)[c2] + ker.log_s)) * float(ker.g2[c2])

    def rest_second(u_far):
        ker = spec.kernel(t1, u_far)
        return math.exp(float(spec.log_hazards(0, t1)[c1] + ker.log_s)) * float(ker.g1[c1])

    first = _log_time_tail(tail_first, t1, rel_tol, rest_first)
    second = _log_time_tail(tail_second, t2, rel_tol, rest_second)
    denominator = first * second
    if not denominator > UNSTABLE_FLOOR:
        raise UnstablePointError(f"cross-ratio tails vanish at (t1, t2) = ({t1!r}, {t2!r}): product {denominator:.3g}")
    return numerator / denominator


def _log_time_tail(f, t, rel_tol, remainder):
    """int_t^inf f(u) du with u = t e^y on y in [0, EXP_LIMIT], plus remainder(U).

    Heavy frailty turns power-law hazards into tails decaying like a small
    power of u, and log-logistic ones into tails decaying like a power of
    log u, so a direct u = t + s/(1-s) map misses visible mass.  In log time
    power decay becomes exponential; what is left beyond U = t e^EXP_LIMIT
    comes from the survival identity via ``remainder``.
    """
    def g(y):
        u = t * np.exp(np.asarray(y, dtype=float))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val = f(u) * u
        return np.where(~np.isfinite(val) & (y > LOG_TAIL_FAR), 0.0, val)

    # y = s/(1-s) keeps panels dense near y = 0, where light tails live
    body = quadrature.integrate_semi_infinite(g, 0.0, rel_tol=rel_tol, abs_tol=0.0,
                                              s_max=EXP_LIMIT / (EXP_LIMIT + 1.0)).value
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        rest = float(remainder(t * math.exp(EXP_LIMIT)))
    return body + (rest if math.isfinite(rest) else 0.0)


def cross_ratio_closed_form(spec: ModelSpec, j1: int, j2: int, t1, t2):
    """1 + E / (g1 g2) evaluated directly from the frailty algebra."""
    c1, c2 = _cause(spec, 0, j1), _cause(spec, 1, j2)
    ker = spec.kernel(_times(t1, True), _times(t2, True))
    g = ker.g1[..., c1] * ker.g2[..., c2]
    return _scalar(ker.k_entry(c1, c2) / g)


def model_from_table(hazards, frailty, check=True) -> ModelSpec:
    """Build a ModelSpec, validating each HazardSpec eagerly."""
    if check:
        for row in hazards:
            for h in row:
                check_hazard(h)
    return ModelSpec(tuple(tuple(r) for r in hazards), frailty, check=check)


def exponential_model(alpha1, alpha2, frailty, check=True) -> ModelSpec:
    return ModelSpec((tuple(HazardSpec.exponential(a) for a in alpha1),
                      tuple(HazardSpec.exponential(a) for a in alpha2)), frailty, check=check)
