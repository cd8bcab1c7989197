"""Moments of (P_T, I_T) from the cumulant recursion.

``P_T = exp(rho Z_{lam T} - lam T kappa(rho))`` and ``I_T`` is the integrated
variance.  Mixed moments ``E[P_T^l (I_T - E I_T)^k]`` factor into an
exponential prefactor and a polynomial recursion ``H_{l,k}`` driven by the
cumulant derivatives at ``l rho``.  The recursion and the alternating
binomial sums that centre ``P_T`` are carried out in mpmath at ``dps``
decimal digits so that cancellation never reaches double precision.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass

import mpmath as mp

from .model import DomainError, ModelParams, alpha, require_valid

__all__ = [
    "MomentTable",
    "SecondOrderMoments",
    "moment_table",
    "expected_integrated_variance",
    "h_general",
    "alpha_power_integral",
    "mixed_power_moment",
    "central_mixed_moment",
    "second_order_moments",
    "clear_cache",
]

DEFAULT_DPS = 40

# mpmath keeps its working precision in one process-wide context, so every
# precision-scoped block is serialized
_MP_LOCK = threading.RLock()


@contextmanager
def _prec(dps):
    with _MP_LOCK, mp.workdps(dps):
        yield


def expected_integrated_variance(params: ModelParams, T: float) -> float:
    """E[I_T] = alpha_{0,T} (sigma0^2 - kappa'(0)) + kappa'(0) T."""
    k1 = params.cumulant.deriv(1, 0.0)
    return alpha(params.lam, 0.0, T) * (params.sigma0_sq - k1) + k1 * T


def _mp_alpha(lam, t):
    return -mp.expm1(-lam * t) / lam


def alpha_power_integral(i: int, lam, T, dps: int = DEFAULT_DPS):
    """int_0^T alpha_{s,T}^i ds as an mpf.

    Substituting v = alpha_{s,T} gives int_0^{alpha_{0,T}} v^i / (1 - lam v) dv.
    For lam T < 1 the geometric expansion of 1/(1 - lam v) is a positive
    series; otherwise the finite binomial identity is used, which only
    cancels mildly once lam T is of order one.
    """
    with _prec(dps + 10):
        lam = mp.mpf(lam)
        T = mp.mpf(T)
        if i == 0:
            return +T
        a0 = _mp_alpha(lam, T)
        if lam * T < 1:
            q = lam * a0  # = 1 - exp(-lam T) < 0.64
            term = a0 ** (i + 1)
            total = mp.mpf(0)
            m = 0
            eps = mp.mpf(10) ** (-(dps + 8))
            while True:
                add = term / (i + m + 1)
                total += add
                if add < eps * total:
                    break
                term *= q
                m += 1
            return total
        s = T
        for j in range(1, i + 1):
            s += mp.binomial(i, j) * (-1) ** j * _mp_alpha(lam, j * T) / j
        return s / lam ** i


def _recursion(kd, f_T, lam, integrals, k):
    # H_h = f H_{h-1} + lam sum_i C(h-1, i-1) H_{h-i} kappa^{(i)} J_i
    H = [mp.mpf(1)]
    for h in range(1, k + 1):
        acc = f_T * H[h - 1]
        for i in range(1, h + 1):
            acc += lam * mp.binomial(h - 1, i - 1) * H[h - i] * kd[i] * integrals[i]
        H.append(acc)
    return H


def h_general(ell, k, f_T, c, d, params: ModelParams, T, dps: int = DEFAULT_DPS):
    """Generic recursion H_{ell,0..k} with kernel (c alpha_{s,T} + d).

    Returns a list of floats.  ``c = 1, d = 0`` with
    ``f_T = kappa'(0)(alpha_{0,T} - T)`` gives the centred integrated
    variance moments; ``c = 0, d = |rho|`` gives the P-moment bound sequence.
    """
    if not max(c, d) > 0:
        raise ValueError("need max(c, d) > 0")
    return [float(v) for v in _h_general_mp(ell, k, f_T, c, d, params, T, dps)]


def _h_general_mp(ell, k, f_T, c, d, params, T, dps):
    cm = params.cumulant
    theta = ell * params.rho
    if theta >= cm.kappa_hat:
        raise DomainError(f"moment of order {ell} of P_T does not exist (ell*rho >= kappa_hat)")
    with _prec(dps):
        lam = mp.mpf(params.lam)
        th = mp.mpf(theta)
        kd = [None] + [cm.deriv(i, th) for i in range(1, k + 1)]
        c = mp.mpf(c)
        d = mp.mpf(d)
        ints = [mp.mpf(T)]
        for i in range(1, k + 1):
            if c == 0:
                ints.append(d ** i * T)
            else:
                # int (c alpha + d)^i ds = sum_j C(i,j) c^j d^{i-j} int alpha^j ds
                ints.append(
                    mp.fsum(
                        mp.binomial(i, j) * c ** j * d ** (i - j) * alpha_power_integral(j, lam, T, dps)
                        for j in range(i + 1)
                    )
                )
        return _recursion(kd, mp.mpf(f_T), lam, ints, k)


class MomentTable:
    """Lazily filled table of H_{l,k} for one (params, T) pair.

    Rows are extended on demand under a lock; reads of finished rows are
    lock free since rows are only ever appended.
    """

    def __init__(self, params: ModelParams, expiry: float, dps: int = DEFAULT_DPS):
        require_valid(params)
        if not expiry > 0:
            raise ValueError("expiry must be positive")
        self.params = params
        self.expiry = float(expiry)
        self.dps = dps
        self.e_it = expected_integrated_variance(params, expiry)
        self._rows = {}
        self._api = {}  # cached alpha power integrals
        self._lock = _MP_LOCK  # shared with the precision lock to keep one lock order
        with _prec(dps):
            lam = mp.mpf(params.lam)
            T = mp.mpf(expiry)
            cm = params.cumulant
            self._lam = lam
            self._T = T
            self._k1 = cm.deriv(1, mp.mpf(0))
            self._f = self._k1 * (_mp_alpha(lam, T) - T)
            self._krho = cm.kappa(mp.mpf(params.rho))

    # -- internals -------------------------------------------------------
    def _alpha_int(self, i):
        v = self._api.get(i)
        if v is None:
            v = alpha_power_integral(i, self._lam, self._T, self.dps)
            self._api[i] = v
        return v

    def _row(self, ell, k):
        row = self._rows.get(ell)
        if row is not None and len(row) > k:
            return row
        with self._lock:
            row = self._rows.get(ell)
            if row is not None and len(row) > k:
                return row
            cm = self.params.cumulant
            theta = ell * self.params.rho
            if theta >= cm.kappa_hat:
                raise DomainError(
                    f"E[P_T^{ell}] is infinite: {ell}*rho = {theta:g} >= kappa_hat = {cm.kappa_hat:g}"
                )
            kmax = max(k, 2 * (len(row) if row else 0), 4)
            with _prec(self.dps):
                th = mp.mpf(theta)
                kd = [None] + [cm.deriv(i, th) for i in range(1, kmax + 1)]
                ints = [self._T] + [self._alpha_int(i) for i in range(1, kmax + 1)]
                new = _recursion(kd, self._f, self._lam, ints, kmax)
            self._rows[ell] = new
            return new

    def _prefactor(self, ell):
        cm = self.params.cumulant
        with _prec(self.dps):
            e = self._lam * self._T * (cm.kappa(mp.mpf(ell * self.params.rho)) - ell * self._krho)
            return mp.exp(e)

    # -- public ----------------------------------------------------------
    def h(self, ell: int, k: int):
        """H_{ell,k} as an mpf."""
        return self._row(ell, k)[k]

    def mixed_power_moment_mp(self, ell, k):
        with _prec(self.dps):
            return self._prefactor(ell) * self.h(ell, k)

    def mixed_power_moment(self, ell: int, k: int) -> float:
        """E[P_T^ell (I_T - E I_T)^k]."""
        return float(self.mixed_power_moment_mp(ell, k))

    def central_mixed_moment_mp(self, n, k):
        if not 0 <= k <= n:
            raise ValueError("need 0 <= k <= n")
        m = n - k
        if m >= 1 and self.params.rho == 0:
            return mp.mpf(0)
        with _prec(self.dps):
            terms = [
                mp.binomial(m, ell) * (-1) ** (m - ell) * self.mixed_power_moment_mp(ell, k)
                for ell in range(m + 1)
            ]
            return mp.fsum(terms)

    def central_mixed_moment(self, n: int, k: int) -> float:
        """E[(P_T - 1)^{n-k} (I_T - E I_T)^k]."""
        return float(self.central_mixed_moment_mp(n, k))

    def variance_moment(self, k: int) -> float:
        """E[(I_T - E I_T)^k]."""
        return float(self.h(0, k))


_CACHE = {}
_CACHE_LOCK = threading.Lock()


def moment_table(params: ModelParams, T: float, dps: int = DEFAULT_DPS) -> MomentTable:
    """Shared, content-addressed MomentTable for (params, T)."""
    key = (params, float(T), dps)
    tab = _CACHE.get(key)
    if tab is None:
        with _CACHE_LOCK:
            tab = _CACHE.get(key)
            if tab is None:
                tab = MomentTable(params, T, dps)
                if len(_CACHE) > 4096:
                    _CACHE.clear()
                _CACHE[key] = tab
    return tab


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def mixed_power_moment(ell, k, params, T) -> float:
    return moment_table(params, T).mixed_power_moment(ell, k)


def central_mixed_moment(n, k, params, T) -> float:
    return moment_table(params, T).central_mixed_moment(n, k)


@dataclass(frozen=True)
class SecondOrderMoments:
    var_i: float
    m2_p: float
    cov_pi: float


def second_order_moments(params: ModelParams, T: float) -> SecondOrderMoments:
    """Closed-form Var(I_T), E[(P_T-1)^2] and E[(P_T-1)(I_T-E I_T)]."""
    cm = params.cumulant
    lam = params.lam
    x = lam * T
    k2 = cm.deriv(2, 0.0)
    # x - 3/2 + 2e^{-x} - e^{-2x}/2 written with expm1
    shape = x + 2 * math.expm1(-x) - 0.5 * math.expm1(-2 * x)
    var_i = k2 / lam ** 2 * shape
    rho = params.rho
    if rho == 0:
        return SecondOrderMoments(var_i, 0.0, 0.0)
    m2_p = math.expm1(x * (cm.kappa(2 * rho) - 2 * cm.kappa(rho)))
    cov = (cm.deriv(1, rho) - cm.deriv(1, 0.0)) * (T - alpha(lam, 0.0, T))
    return SecondOrderMoments(var_i, m2_p, cov)
