"""Brute-force frailty expectations, independent of the package's kernel algebra.

Every variant is written as independent unit-rate Gamma components Y_c with
shapes kappa_c, and frailties eps_{k,j} = sum_c A_k[j, c] Y_c.  Conditional
on the frailties the pair is independent with hazards eps_{k,j} h_{k,j}, so
S, f and the cross-ratio tails are expectations of
  eps-products * exp(-sum_c s_c Y_c),   s_c = sum_{k,j} A_k[j, c] H_{k,j}.
Each one-dimensional expectation E[Y^m exp(-sY)] is integrated against the
Gamma density with scipy.integrate.quad.
"""
import math

import numpy as np
from scipy import integrate, stats

from bcsfrail.frailty import Correlated, CorrelatedCauseSpecific, Shared, SharedCauseSpecific
from bcsfrail.hazards import cumulative_hazard, hazard_rate


def components(frailty, L1, L2):
    """Return (kappa, A1, A2)."""
    if isinstance(frailty, Shared):
        k = 1 / frailty.sigma**2
        return np.array([k]), np.full((L1, 1), 1 / k), np.full((L2, 1), 1 / k)
    if isinstance(frailty, Correlated):
        s1, s2, r = frailty.sigma1, frailty.sigma2, frailty.rho
        k0 = r / (s1 * s2)
        mu1, mu2 = 1 / s1**2, 1 / s2**2
        kappa = np.array([k0, mu1 - k0, mu2 - k0])
        return (kappa, np.tile([1 / mu1, 1 / mu1, 0.0], (L1, 1)), np.tile([1 / mu2, 0.0, 1 / mu2], (L2, 1)))
    if isinstance(frailty, SharedCauseSpecific):
        kappa = 1 / np.asarray(frailty.sigmas) ** 2
        A = np.diag(1 / kappa)
        return kappa, A, A.copy()
    if isinstance(frailty, CorrelatedCauseSpecific):
        L = len(frailty.sigma1)
        kappa = np.zeros(3 * L)
        A1, A2 = np.zeros((L, 3 * L)), np.zeros((L, 3 * L))
        for j in range(L):
            s1, s2, r = frailty.sigma1[j], frailty.sigma2[j], frailty.rho[j]
            k0 = r / (s1 * s2)
            mu1, mu2 = 1 / s1**2, 1 / s2**2
            kappa[3 * j:3 * j + 3] = (k0, mu1 - k0, mu2 - k0)
            A1[j, 3 * j], A1[j, 3 * j + 1] = 1 / mu1, 1 / mu1
            A2[j, 3 * j], A2[j, 3 * j + 2] = 1 / mu2, 1 / mu2
        return kappa, A1, A2
    raise TypeError(frailty)


def _moment(kappa, m, s):
    pdf = stats.gamma(kappa).pdf
    f = lambda y: y**m * math.exp(-s * y) * pdf(y)
    # split at the mode region; the density may be singular at 0 when kappa < 1
    edge = max(1.0, kappa)
    a, _ = integrate.quad(f, 0, edge, epsabs=0, epsrel=1e-11, limit=400)
    b, _ = integrate.quad(f, edge, np.inf, epsabs=0, epsrel=1e-11, limit=400)
    return a + b


class Oracle:
    def __init__(self, spec):
        self.spec = spec
        self.kappa, self.A1, self.A2 = components(spec.frailty, spec.L1, spec.L2)

    def _H(self, k, t):
        return np.array([float(cumulative_hazard(h, t)) for h in self.spec.hazards[k]])

    def _h(self, k, j, t):
        return float(hazard_rate(self.spec.hazards[k][j - 1], t))

    def _slopes(self, t1, t2):
        return self._H(0, t1) @ self.A1 + self._H(1, t2) @ self.A2

    def _expect(self, t1, t2, w1=None, w2=None):
        """E[(w1.Y)(w2.Y) exp(-s.Y)], dropping absent linear factors."""
        s = self._slopes(t1, t2)
        n = len(self.kappa)
        M0 = [_moment(self.kappa[c], 0, s[c]) for c in range(n)]
        if w1 is None and w2 is None:
            return math.prod(M0)
        M1 = [_moment(self.kappa[c], 1, s[c]) for c in range(n)]
        if w2 is None or w1 is None:
            w = w1 if w2 is None else w2
            return sum(w[c] * M1[c] * math.prod(M0[:c] + M0[c + 1:]) for c in range(n) if w[c])
        M2 = [_moment(self.kappa[c], 2, s[c]) for c in range(n)]
        total = 0.0
        for c in range(n):
            for d in range(n):
                if not (w1[c] and w2[d]):
                    continue
                if c == d:
                    part = M2[c] * math.prod(M0[:c] + M0[c + 1:])
                else:
                    rest = [M0[e] for e in range(n) if e not in (c, d)]
                    part = M1[c] * M1[d] * math.prod(rest)
                total += w1[c] * w2[d] * part
        return total

    def survival(self, t1, t2):
        return self._expect(t1, t2)

    def density(self, j1, j2, t1, t2):
        return self._h(0, j1, t1) * self._h(1, j2, t2) * self._expect(t1, t2, self.A1[j1 - 1], self.A2[j2 - 1])

    def tail_first(self, j1, t1, t2):
        """-dS/dt1 restricted to cause j1: density of T1 at t1 with J1=j1 and T2 > t2."""
        return self._h(0, j1, t1) * self._expect(t1, t2, w1=self.A1[j1 - 1])

    def tail_second(self, j2, t1, t2):
        return self._h(1, j2, t2) * self._expect(t1, t2, w2=self.A2[j2 - 1])


def sample_cells(spec, x1, x2, n, rng):
    """Current-status cells by drawing frailties and latent failure times directly.

    Only exponential and Weibull hazards (closed-form inverse cumulative hazard).
    Returns an (L1+1, L2+1) count matrix.
    """
    kappa, A1, A2 = components(spec.frailty, spec.L1, spec.L2)
    Y = rng.gamma(kappa, 1.0, size=(n, len(kappa)))
    counts = np.zeros((spec.L1 + 1, spec.L2 + 1), dtype=np.int64)
    causes = []
    for hazards, A, x in ((spec.hazards[0], A1, x1), (spec.hazards[1], A2, x2)):
        eps = Y @ A.T
        # T_j solves eps_j H_j(T) = E_j, with H_j(t) = (alpha_j t)^gamma_j
        E = rng.exponential(size=eps.shape)
        alpha = np.array([h.alpha for h in hazards])
        gamma = np.array([h.gamma for h in hazards])
        T = (E / eps) ** (1 / gamma) / alpha
        first = T.argmin(axis=1)
        failed = T.min(axis=1) <= x
        causes.append(np.where(failed, first + 1, 0))
    np.add.at(counts, (causes[0], causes[1]), 1)
    return counts
