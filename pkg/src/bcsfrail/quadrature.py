"""Adaptive Gauss-Kronrod integration and bracketed root finding.

Integrands are called with numpy arrays of abscissae and must return an
array of the same shape (a scalar return is broadcast).  Panels are refined
in batches so each round costs one integrand call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BracketError, QuadratureError

MAX_SUBDIVISIONS = 2000
ABS_FLOOR = 1e-14

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_KWEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[1:14:2] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    evaluations: int


def _call(f, x):
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape)
    return y


def _kronrod(f, lo, hi):
    """Apply the 7/15 pair to every panel [lo_i, hi_i] with one call to f."""
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = centre[:, None] + half[:, None] * _NODES[None, :]
    y = _call(f, x)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise QuadratureError(f"integrand is not finite at x={bad!r}")
    kron = half * (y @ _KWEIGHTS)
    gauss = half * (y @ _GWEIGHTS)
    # QUADPACK-style error scaling
    mean = kron / np.where(half == 0, 1.0, 2.0 * half)
    resasc = np.abs(half) * (np.abs(y - mean[:, None]) @ _KWEIGHTS)
    resabs = np.abs(half) * (np.abs(y) @ _KWEIGHTS)
    err = np.abs(kron - gauss)
    safe = np.where(resasc > 0, resasc, 1.0)
    scaled = np.where(resasc > 0, resasc * np.minimum(1.0, (200.0 * err / safe) ** 1.5), err)
    floor = 50.0 * np.finfo(float).eps * resabs
    return kron, np.maximum(scaled, floor)


def integrate_1d(f: Callable, lo: float, hi: float, rel_tol: float = 1e-8,
                 abs_tol: float = ABS_FLOOR, max_subdivisions: int = MAX_SUBDIVISIONS) -> QuadResult:
    """Integrate f over [lo, hi] to within max(rel_tol*|I|, abs_tol)."""
    if not lo < hi:
        if lo == hi:
            return QuadResult(0.0, 0.0, 0)
        raise ValueError("integrate_1d needs lo < hi")
    a = np.array([float(lo)])
    b = np.array([float(hi)])
    vals, errs = _kronrod(f, a, b)
    evaluations = 15
    while True:
        total = float(vals.sum())
        total_err = float(errs.sum())
        tol = max(rel_tol * abs(total), abs_tol)
        if total_err <= tol:
            return QuadResult(total, total_err, evaluations)
        # split panels above their share of the tolerance, but leave those far
        # below the worst panel alone so endpoint singularities stay cheap
        share = np.maximum(tol * (b - a) / (hi - lo), 0.01 * errs.max())
        split = errs > share
        if not split.any():
            split = errs >= errs.max()
        n_after = len(a) + int(split.sum())
        if n_after > max_subdivisions:
            raise QuadratureError(
                f"no convergence after {len(a)} subdivisions (estimate {total_err:.3g} > tolerance {tol:.3g})",
                value=total, error_estimate=total_err)
        mid = 0.5 * (a[split] + b[split])
        new_a = np.concatenate([a[split], mid])
        new_b = np.concatenate([mid, b[split]])
        new_vals, new_errs = _kronrod(f, new_a, new_b)
        evaluations += 15 * len(new_a)
        keep = ~split
        a = np.concatenate([a[keep], new_a])
        b = np.concatenate([b[keep], new_b])
        vals = np.concatenate([vals[keep], new_vals])
        errs = np.concatenate([errs[keep], new_errs])


def integrate_semi_infinite(f: Callable, lo: float = 0.0, rel_tol: float = 1e-8,
                            abs_tol: float = ABS_FLOOR, s_max: float = 1.0) -> QuadResult:
    """Integrate f over [lo, inf) via u = lo + s/(1-s).

    ``s_max < 1`` truncates the mapped interval, which keeps the integrand
    away from the singular endpoint when f decays only algebraically.
    """
    def mapped(s):
        one_minus = 1.0 - s
        u = lo + s / one_minus
        return _call(f, u) / (one_minus * one_minus)

    return integrate_1d(mapped, 0.0, s_max, rel_tol=rel_tol, abs_tol=abs_tol)


def integrate_2d(f: Callable, rect, rel_tol: float = 1e-8, abs_tol: float = ABS_FLOOR) -> QuadResult:
    """Iterated integral of f(u1, u2) over a rectangle.

    ``rect`` is ``(t1, t2)`` for (0, t1) x (0, t2) or ``((lo1, hi1), (lo2, hi2))``.
    The inner integrals (over u2) for all outer abscissae of a refinement
    round are refined together, each to a tenth of the requested tolerance;
    the reported error adds that share to the outer estimate.
    """
    (lo1, hi1), (lo2, hi2) = _rect(rect)
    inner_tol = 0.1 * rel_tol
    evaluations = 0

    def outer(u1):
        nonlocal evaluations
        flat = np.ravel(u1)
        try:
            values, count = _integrate_many(lambda owner, u2: f(flat[owner][:, None], u2),
                                            len(flat), lo2, hi2, inner_tol, 0.1 * abs_tol)
        except QuadratureError as exc:
            raise QuadratureError(f"inner axis (u2): {exc}", exc.value, exc.error_estimate, axis="u2") from exc
        evaluations += count
        return values.reshape(np.shape(u1))

    try:
        res = integrate_1d(outer, lo1, hi1, rel_tol=0.9 * rel_tol, abs_tol=abs_tol)
    except QuadratureError as exc:
        if exc.axis is not None:
            raise
        raise QuadratureError(f"outer axis (u1): {exc}", exc.value, exc.error_estimate, axis="u1") from exc
    err = res.error_estimate + inner_tol * abs(res.value)
    return QuadResult(res.value, err, evaluations)


def _integrate_many(g, count, lo, hi, rel_tol, abs_tol, max_subdivisions=MAX_SUBDIVISIONS):
    """Integrate ``count`` functions over [lo, hi] at once.

    ``g(owner, x)`` evaluates function ``owner[i]`` at the row ``x[i]``.  Each
    function is refined until its own error meets its own tolerance.
    """
    owner = np.arange(count)
    a = np.full(count, float(lo))
    b = np.full(count, float(hi))
    vals, errs = _kronrod(lambda x: g(owner, x), a, b)
    evaluations = 15 * count
    done_val = np.zeros(count)
    done_err = np.zeros(count)
    while True:
        tot_val = done_val + np.bincount(owner, vals, minlength=count)
        tot_err = done_err + np.bincount(owner, errs, minlength=count)
        tol = np.maximum(rel_tol * np.abs(tot_val), abs_tol)
        ok = tot_err <= tol
        if ok.all() or owner.size == 0:
            return tot_val, evaluations
        live = ~ok[owner]
        worst = np.full(count, -1.0)
        np.maximum.at(worst, owner, np.where(live, errs, -1.0))
        share = np.maximum(tol[owner] * (b - a) / (hi - lo), 0.01 * worst[owner])
        split = live & (errs > share)
        # a function whose error is spread below every share still gets its worst panel split
        stuck = ~ok & (np.bincount(owner, split, minlength=count) == 0)
        if stuck.any():
            split |= stuck[owner] & (errs >= worst[owner])
        settled = ~live
        np.add.at(done_val, owner[settled], vals[settled])
        np.add.at(done_err, owner[settled], errs[settled])
        keep = live & ~split
        panels = np.bincount(owner[live], minlength=count) + np.bincount(owner[split], minlength=count)
        if panels.max() > max_subdivisions:
            i = int(np.argmax(panels))
            raise QuadratureError(
                f"no convergence after {max_subdivisions} subdivisions (estimate {tot_err[i]:.3g} > tolerance {tol[i]:.3g})",
                value=float(tot_val[i]), error_estimate=float(tot_err[i]))
        mid = 0.5 * (a[split] + b[split])
        new_owner = np.concatenate([owner[split], owner[split]])
        new_a = np.concatenate([a[split], mid])
        new_b = np.concatenate([mid, b[split]])
        new_vals, new_errs = _kronrod(lambda x: g(new_owner, x), new_a, new_b)
        evaluations += 15 * len(new_a)
        owner = np.concatenate([owner[keep], new_owner])
        a = np.concatenate([a[keep], new_a])
        b = np.concatenate([b[keep], new_b])
        vals = np.concatenate([vals[keep], new_vals])
        errs = np.concatenate([errs[keep], new_errs])


def _rect(rect):
    first, second = rect
    if np.ndim(first) == 0:
        return (0.0, float(first)), (0.0, float(second))
    return (float(first[0]), float(first[1])), (float(second[0]), float(second[1]))


def find_root(f: Callable[[float], float], bracket, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Root of f inside ``bracket`` by secant steps safeguarded with bisection."""
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = float(f(lo)), float(f(hi))
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.copysign(1.0, flo) == math.copysign(1.0, fhi):
        raise BracketError(f"f has the same sign at both ends of [{lo!r}, {hi!r}] ({flo:.3g}, {fhi:.3g})")
    for _ in range(max_iter):
        width = hi - lo
        x = hi - fhi * (hi - lo) / (fhi - flo)
        # fall back to bisection when the secant lands near or past an end
        if not (lo + 0.05 * width < x < hi - 0.05 * width):
            x = 0.5 * (lo + hi)
        fx = float(f(x))
        if abs(fx) <= tol:
            return x
        if math.copysign(1.0, fx) == math.copysign(1.0, flo):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        if hi - lo <= tol:
            return 0.5 * (lo + hi)
    return 0.5 * (lo + hi)
