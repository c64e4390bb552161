"""Current status observations, cell probabilities and the log-likelihood.

An observation is ``(x1, x2, j1, j2)`` where ``x_k`` is the monitoring time of
individual ``k`` and ``j_k`` the observed cause (0 means still alive at
``x_k``).  Its likelihood contribution is the probability of the matching
cell of the (L1 + 1) x (L2 + 1) table at ``(x1, x2)``.

Two evaluation routes exist:

* the scalar route (:func:`pair_likelihood`, :func:`cell_probability_matrix`)
  uses adaptive quadrature and the textbook case formulas, e.g.
  ``F_{j2}^(2)(x2) - sum_j F_{j j2}(x1, x2)`` for a censored first member;
* the batch route (:func:`cell_tensor`, :func:`log_likelihood`) uses
  fixed Gauss-Legendre rules on a hazard-adapted grid and integrates the
  single-censored cells directly as
  ``int_0^x2 h2[j2](u) S(x1, u) g2[j2](x1, u) du``, which never subtracts.

When each individual's cause hazards are proportional and the frailty is
common to all causes, every cell has a closed form and no quadrature runs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import IntegrityError, ParameterError
from .frailty import (Correlated, ModelSpec, Shared, joint_sub_distribution, joint_survival,
                      marginal_sub_distribution)
from .hazards import HazardFamily, proportional_weights

PROB_FLOOR = 1e-300
NEGATIVE_BAND = 1e-8
RENORMALISE_BAND = 1e-8
INTEGRITY_BAND = 1e-6
SMOOTH_NODES = 16
DEFAULT_NODES = 24
MAX_NODES = 192
AGREE_REL = 1e-8
AGREE_ABS = 1e-14


def default_nodes(spec: ModelSpec) -> int:
    """Gauss nodes per axis: fewer when every shape is an integer (analytic integrands)."""
    return SMOOTH_NODES if _integer_shapes(spec) else DEFAULT_NODES


@dataclass(frozen=True)
class Observation:
    x1: float
    x2: float
    j1: int
    j2: int

    def __post_init__(self):
        for name in ("x1", "x2"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive and finite (got {v!r})")
            object.__setattr__(self, name, v)
        for name in ("j1", "j2"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ParameterError(f"{name} must be a nonnegative integer (got {v!r})")
            object.__setattr__(self, name, int(v))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented set of independent observations."""

    x1: np.ndarray
    x2: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    L1: int
    L2: int

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=float)
        x2 = np.asarray(self.x2, dtype=float)
        j1 = np.asarray(self.j1, dtype=np.int64)
        j2 = np.asarray(self.j2, dtype=np.int64)
        if not (x1.shape == x2.shape == j1.shape == j2.shape) or x1.ndim != 1:
            raise ParameterError("dataset columns must be 1-d arrays of equal length")
        if np.any(~np.isfinite(x1) | (x1 <= 0)) or np.any(~np.isfinite(x2) | (x2 <= 0)):
            raise ParameterError("monitoring times must be positive and finite")
        if np.any((j1 < 0) | (j1 > self.L1)) or np.any((j2 < 0) | (j2 > self.L2)):
            raise ParameterError(f"cause indices must lie in 0..L (L1={self.L1}, L2={self.L2})")
        for name, v in (("x1", x1), ("x2", x2), ("j1", j1), ("j2", j2)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_observations(cls, observations, L1=None, L2=None) -> "Dataset":
        obs = list(observations)
        j1 = [o.j1 for o in obs]
        j2 = [o.j2 for o in obs]
        L1 = max(j1, default=0) if L1 is None else L1
        L2 = max(j2, default=0) if L2 is None else L2
        return cls([o.x1 for o in obs], [o.x2 for o in obs], j1, j2, max(L1, 1), max(L2, 1))

    def __len__(self):
        return len(self.x1)

    def __iter__(self):
        for i in range(len(self)):
            yield Observation(self.x1[i], self.x2[i], int(self.j1[i]), int(self.j2[i]))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.L1, self.L2) == (other.L1, other.L2) and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in ("x1", "x2", "j1", "j2"))

    def subset(self, index) -> "Dataset":
        return Dataset(self.x1[index], self.x2[index], self.j1[index], self.j2[index], self.L1, self.L2)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.x1, other.x1]), np.concatenate([self.x2, other.x2]),
                       np.concatenate([self.j1, other.j1]), np.concatenate([self.j2, other.j2]),
                       max(self.L1, other.L1), max(self.L2, other.L2))

    def cell_counts(self) -> np.ndarray:
        counts = np.zeros((self.L1 + 1, self.L2 + 1), dtype=np.int64)
        np.add.at(counts, (self.j1, self.j2), 1)
        return counts


def check_compatible(spec: ModelSpec, data: Dataset):
    if data.L1 > spec.L1 or data.L2 > spec.L2:
        raise ParameterError(f"dataset has causes up to ({data.L1}, {data.L2}) but the model has ({spec.L1}, {spec.L2})")


# scalar route ------------------------------------------------------------------


def _clamp(value, what):
    if value < -NEGATIVE_BAND:
        raise IntegrityError(f"{what} is negative ({value:.3g}); model formulas are inconsistent")
    return min(max(value, 0.0), 1.0)


def pair_likelihood(spec: ModelSpec, obs: Observation) -> float:
    """Probability of the observed cell, computed by adaptive quadrature."""
    if obs.j1 > spec.L1 or obs.j2 > spec.L2:
        raise ParameterError(f"observation causes ({obs.j1}, {obs.j2}) exceed model causes ({spec.L1}, {spec.L2})")
    x1, x2, j1, j2 = obs.x1, obs.x2, obs.j1, obs.j2
    if j1 == 0 and j2 == 0:
        return float(joint_survival(spec, x1, x2))
    if j1 >= 1 and j2 >= 1:
        return _clamp(joint_sub_distribution(spec, j1, j2, x1, x2), "joint sub-distribution")
    if j1 == 0:
        value = marginal_sub_distribution(spec, 2, j2, x2) - sum(
            joint_sub_distribution(spec, j, j2, x1, x2) for j in range(1, spec.L1 + 1))
    else:
        value = marginal_sub_distribution(spec, 1, j1, x1) - sum(
            joint_sub_distribution(spec, j1, j, x1, x2) for j in range(1, spec.L2 + 1))
    return _clamp(value, "single-censoring probability")


def raw_cell_matrix(spec: ModelSpec, x1: float, x2: float) -> np.ndarray:
    """Cell probabilities before any renormalisation."""
    out = np.empty((spec.L1 + 1, spec.L2 + 1))
    joint = np.zeros((spec.L1 + 1, spec.L2 + 1))
    for j1 in range(1, spec.L1 + 1):
        for j2 in range(1, spec.L2 + 1):
            joint[j1, j2] = joint_sub_distribution(spec, j1, j2, x1, x2)
    out[1:, 1:] = joint[1:, 1:]
    out[0, 0] = joint_survival(spec, x1, x2)
    for j2 in range(1, spec.L2 + 1):
        out[0, j2] = marginal_sub_distribution(spec, 2, j2, x2) - joint[1:, j2].sum()
    for j1 in range(1, spec.L1 + 1):
        out[j1, 0] = marginal_sub_distribution(spec, 1, j1, x1) - joint[j1, 1:].sum()
    return out


def cell_probability_matrix(spec: ModelSpec, x1: float, x2: float) -> np.ndarray:
    """(L1 + 1) x (L2 + 1) matrix of cell probabilities at monitoring times (x1, x2)."""
    if not (x1 > 0 and x2 > 0):
        raise ParameterError("monitoring times must be positive")
    return _finalise(raw_cell_matrix(spec, x1, x2))


def _finalise(cells):
    low = cells.min()
    if low < -NEGATIVE_BAND:
        raise IntegrityError(f"cell probability {low:.3g} is negative")
    cells = np.clip(cells, 0.0, None)
    total = cells.sum()
    if abs(total - 1.0) > INTEGRITY_BAND:
        raise IntegrityError(f"cell probabilities sum to {total!r}")
    if abs(total - 1.0) > RENORMALISE_BAND:
        warnings.warn(f"cell probabilities sum to {total!r}; renormalising", RuntimeWarning, stacklevel=3)
    return cells / total


# batch route -----------------------------------------------------------------


@lru_cache(maxsize=16)
def _legendre(m):
    nodes, weights = np.polynomial.legendre.leggauss(m)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _axis_grid(spec: ModelSpec, k: int, x: np.ndarray, m: int):
    """Nodes u (n, m) in (0, x) and weights for int_0^x f(u) du.

    The map u = expm1(r log1p(beta x)) / beta with r = s^q spreads nodes
    evenly in the cumulative hazard scale, so rapid decay beyond the first
    few multiples of 1/beta does not starve the rule; q > 1 flattens the
    t^(gamma - 1) endpoint behaviour for shapes below 1.
    """
    s, w = _legendre(m)
    q = _grid_power(spec, k)
    r = s**q
    dr = q * s ** (q - 1.0) * w
    sig2 = _max_sigma_sq(spec)
    beta = (1.0 + sig2) * spec.cumhaz(k, x).sum(axis=-1) / x
    bx = beta * x
    c = np.log1p(bx)
    linear = bx < 1e-8
    safe_beta = np.where(linear, 1.0, beta)
    u = np.where(linear[:, None], x[:, None] * r[None, :], np.expm1(c[:, None] * r[None, :]) / safe_beta[:, None])
    jac = np.where(linear[:, None], x[:, None], c[:, None] * (1.0 + safe_beta[:, None] * u) / safe_beta[:, None])
    u = np.minimum(u, x[:, None])
    return u, jac * dr[None, :]


def _grid_power(spec, k):
    """Exponent q of the s -> s^q node map.

    A non-integer shape gamma leaves a u^(gamma - 1) factor that Gauss rules
    resolve poorly; after the map it becomes s^(q gamma - 1), and q gamma >= 2
    pushes the rough part into higher derivatives.
    """
    if _integer_shapes(spec):
        return 1.0
    return min(max(1.0, 2.0 / spec.min_shape(k)), 50.0)


def _integer_shapes(spec):
    return all(float(h.gamma).is_integer() for row in spec.hazards for h in row)


def _linear_hazards(spec):
    return all(h.family is HazardFamily.EXPONENTIAL for row in spec.hazards for h in row)


def _max_sigma_sq(spec):
    vals = [v for name, v in spec.frailty.values().items() if name.startswith("sigma")]
    return float(max(vals)) ** 2 if vals else 0.0


def _closed_weights(spec: ModelSpec):
    if not isinstance(spec.frailty, (Shared, Correlated)):
        return None
    p1 = proportional_weights(spec.hazards[0])
    p2 = proportional_weights(spec.hazards[1])
    if p1 is None or p2 is None:
        return None
    return p1, p2


def _survivals(spec, x1, x2):
    zero = np.zeros_like(x1)
    s12 = np.exp(spec.kernel(x1, x2).log_s)
    s1 = np.exp(spec.kernel(x1, zero).log_s)
    s2 = np.exp(spec.kernel(zero, x2).log_s)
    return s1, s2, s12


def _single_censored(spec, k, x_event, x_other, m):
    """P[T_k <= x_k, J_k = j, T_k' > x_k'] for every j, shape (n, L_k)."""
    u, w = _axis_grid(spec, k, x_event, m)
    other = np.broadcast_to(x_other[:, None], u.shape)
    args = (u, other) if k == 0 else (other, u)
    ker = spec.kernel(*args)
    g = ker.g1 if k == 0 else ker.g2
    dens = np.exp(spec.log_hazards(k, u) + ker.log_s[..., None]) * g
    return np.einsum("nmj,nm->nj", dens, w)


def _both_failed(spec, x1, x2, m, pairs=None):
    """F_{j1 j2}(x1, x2) on a tensor Gauss grid; all pairs (n, L1, L2) or chosen pairs (n,)."""
    u1, w1 = _axis_grid(spec, 0, x1, m)
    u2, w2 = _axis_grid(spec, 1, x2, m)
    m1, m2 = u1.shape[1], u2.shape[1]
    h1 = spec.cumhaz(0, u1)[:, :, None, :]
    h2 = spec.cumhaz(1, u2)[:, None, :, :]
    ker = spec.frailty.kernel(np.broadcast_to(h1, (len(x1), m1, m2, spec.L1)),
                              np.broadcast_to(h2, (len(x1), m1, m2, spec.L2)))
    lh1 = spec.log_hazards(0, u1)
    lh2 = spec.log_hazards(1, u2)
    weight = w1[:, :, None] * w2[:, None, :] * np.exp(ker.log_s)
    if pairs is None:
        dens = np.exp(lh1[:, :, None, :, None] + lh2[:, None, :, None, :]) * ker.k_matrix()
        return np.einsum("nabij,nab->nij", dens, weight)
    c1, c2 = pairs
    idx = np.arange(len(x1))
    hz = np.exp(lh1[idx, :, c1][:, :, None] + lh2[idx, :, c2][:, None, :])
    kk = ker.k_rows(c1, c2)
    return np.einsum("nab,nab->n", hz * kk, weight)


def cell_tensor(spec: ModelSpec, x1, x2, nodes: int | None = None, normalise: bool = True) -> np.ndarray:
    """Cell probabilities for many monitoring-time pairs, shape (n, L1 + 1, L2 + 1)."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    x1, x2 = np.broadcast_arrays(x1, x2)
    nodes = nodes or default_nodes(spec)
    n = len(x1)
    out = np.empty((n, spec.L1 + 1, spec.L2 + 1))
    s1, s2, s12 = _survivals(spec, x1, x2)
    out[:, 0, 0] = s12
    closed = _closed_weights(spec)
    if closed is not None:
        p1, p2 = closed
        both = 1.0 - s1 - s2 + s12
        out[:, 1:, 1:] = both[:, None, None] * p1[None, :, None] * p2[None, None, :]
        out[:, 1:, 0] = (s2 - s12)[:, None] * p1[None, :]
        out[:, 0, 1:] = (s1 - s12)[:, None] * p2[None, :]
    else:
        def compute(idx, m):
            cells = np.empty((idx.size, spec.L1 + 1, spec.L2 + 1))
            cells[:, 0, 0] = s12[idx]
            cells[:, 1:, 0] = _single_censored(spec, 0, x1[idx], x2[idx], 2 * m)
            cells[:, 0, 1:] = _single_censored(spec, 1, x2[idx], x1[idx], 2 * m)
            cells[:, 1:, 1:] = _both_failed(spec, x1[idx], x2[idx], m)
            return cells

        out[:] = _checked(spec, compute, lambda i: raw_cell_matrix(spec, float(x1[i]), float(x2[i])), n, nodes)
    if normalise:
        low = out.min()
        if low < -NEGATIVE_BAND:
            raise IntegrityError(f"cell probability {low:.3g} is negative")
        out = np.clip(out, 0.0, None)
        total = out.sum(axis=(1, 2))
        worst = np.max(np.abs(total - 1.0))
        if worst > INTEGRITY_BAND:
            raise IntegrityError(f"cell probabilities sum to {total[np.argmax(np.abs(total - 1.0))]!r}")
        out /= total[:, None, None]
    return out


@dataclass(frozen=True)
class LikelihoodTerms:
    log_terms: np.ndarray
    floored: np.ndarray

    @property
    def total(self) -> float:
        return float(self.log_terms.sum())


def observed_probabilities(spec: ModelSpec, data: Dataset, nodes: int | None = None) -> np.ndarray:
    """Probability of each observation's own cell (batch route, no renormalisation)."""
    check_compatible(spec, data)
    nodes = nodes or default_nodes(spec)
    x1, x2, j1, j2 = data.x1, data.x2, data.j1, data.j2
    probs = np.empty(len(data))
    s1, s2, s12 = _survivals(spec, x1, x2)
    closed = _closed_weights(spec)
    cen = (j1 == 0) & (j2 == 0)
    probs[cen] = s12[cen]
    if closed is not None:
        p1 = np.concatenate([[0.0], closed[0]])
        p2 = np.concatenate([[0.0], closed[1]])
        both = (j1 > 0) & (j2 > 0)
        probs[both] = (-np.expm1(np.log(s1[both] + s2[both] - s12[both]))) * p1[j1[both]] * p2[j2[both]]
        first = (j1 > 0) & (j2 == 0)
        probs[first] = (s2[first] - s12[first]) * p1[j1[first]]
        second = (j1 == 0) & (j2 > 0)
        probs[second] = (s1[second] - s12[second]) * p2[j2[second]]
        return probs
    rest = np.flatnonzero(~cen)

    def compute(idx, m):
        return _own_cells(spec, x1[rest[idx]], x2[rest[idx]], j1[rest[idx]], j2[rest[idx]], m)

    def fallback(i):
        k = rest[i]
        return pair_likelihood(spec, Observation(x1[k], x2[k], int(j1[k]), int(j2[k])))

    if rest.size:
        probs[rest] = _checked(spec, compute, fallback, rest.size, nodes)
    return probs


def _own_cells(spec, x1, x2, j1, j2, m):
    """Quadrature probability of each observation's own (non-censored) cell."""
    probs = np.empty(len(x1))
    first = np.flatnonzero((j1 > 0) & (j2 == 0))
    if first.size:
        vals = _single_censored(spec, 0, x1[first], x2[first], 2 * m)
        probs[first] = vals[np.arange(first.size), j1[first] - 1]
    second = np.flatnonzero((j1 == 0) & (j2 > 0))
    if second.size:
        vals = _single_censored(spec, 1, x2[second], x1[second], 2 * m)
        probs[second] = vals[np.arange(second.size), j2[second] - 1]
    both = np.flatnonzero((j1 > 0) & (j2 > 0))
    for chunk in np.array_split(both, max(1, both.size // 256)):
        if chunk.size:
            probs[chunk] = _both_failed(spec, x1[chunk], x2[chunk], m, pairs=(j1[chunk] - 1, j2[chunk] - 1))
    return probs


def _checked(spec, compute, fallback, n, m):
    """Run ``compute(index, nodes)`` with a node-doubling accuracy check.

    Exponential hazards make the grid map exact in the cumulative-hazard
    scale, so one rule suffices.  Otherwise two rules are compared; rows that
    disagree are recomputed with twice the nodes until they settle, and rows
    still unsettled at MAX_NODES go to the adaptive scalar route.
    """
    everything = np.arange(n)
    if _linear_hazards(spec):
        return compute(everything, m)
    m_fine = m + m // 2
    out = compute(everything, m_fine)
    previous = compute(everything, m)
    pending = everything[_unsettled(previous, out)]
    while pending.size and m_fine < MAX_NODES:
        m_fine *= 2
        fresh = compute(pending, m_fine)
        unsettled = _unsettled(out[pending], fresh)
        out[pending] = fresh
        pending = pending[unsettled]
    for i in pending:
        out[i] = fallback(i)
    return out


def _unsettled(coarse, fine):
    gap = np.abs(coarse - fine) - (AGREE_REL * np.abs(fine) + AGREE_ABS)
    return gap.reshape(len(fine), -1).max(axis=1) > 0


def log_likelihood_terms(spec: ModelSpec, data: Dataset, nodes: int | None = None) -> LikelihoodTerms:
    """Per-observation log-likelihood with the underflow floor applied."""
    if len(data) == 0:
        raise ParameterError("log-likelihood needs a nonempty dataset")
    probs = observed_probabilities(spec, data, nodes)
    bad = np.flatnonzero(~(probs >= -NEGATIVE_BAND))
    if bad.size:
        raise IntegrityError(f"observation {int(bad[0])} has probability {probs[bad[0]]!r}")
    floored = np.flatnonzero(probs < PROB_FLOOR)
    probs = np.minimum(np.maximum(probs, PROB_FLOOR), 1.0)
    return LikelihoodTerms(np.log(probs), floored)


def log_likelihood(spec: ModelSpec, data: Dataset, nodes: int | None = None) -> float:
    """Sum of log cell probabilities over the dataset."""
    terms = log_likelihood_terms(spec, data, nodes).log_terms
    # exactly rounded, so the value does not depend on observation order
    return math.fsum(terms)
