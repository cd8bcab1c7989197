"""Computable bounds on the Taylor remainder.

The remainder of the order-N expansion is controlled by sup-norms of the
(N+1)-th partial derivatives of the Black-Scholes put over the region the
random expansion points can reach, times moment factors of
(P_T - 1, I_T - E I_T).  Sup-norms are found numerically (log grid scan plus
local refinement); moment factors come from the moment engine.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .bsderiv import eval_partial
from .model import PHI, DomainError, ModelParams, OptionSpec, require_valid
from .moments import expected_integrated_variance, h_general, moment_table

__all__ = [
    "SupSearch",
    "BoundReport",
    "AsymptoticCoefficients",
    "sup_derivative_bound",
    "sup_search",
    "gn_bound",
    "gn_sequence",
    "remainder_bound",
    "asymptotic_coefficients",
    "gamma_f_sequence",
    "gamma_g_sequence",
    "ig_f_sequence",
    "ig_g_sequence",
    "UNRELIABLE_T",
]

SAFETY = 1.05
UNRELIABLE_T = 0.05
_BOUNDARY_FRAC = 0.01


@dataclass
class SupSearch:
    key: Tuple[int, int]
    value: float  # safety factor included
    raw_max: float
    argmax: Tuple[float, float]
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    boundary_ok: bool


def _x_support(params: ModelParams, T):
    """Range of (1-u) S0 + u S0 P_T, u in [0,1], as (lo, hi); None = open end."""
    s0, rho = params.s0, params.rho
    if rho == 0:
        return s0, s0
    edge = s0 * math.exp(-params.lam * T * params.cumulant.kappa(rho))
    if rho < 0:  # P_T <= exp(-lam T kappa(rho)), edge >= S0
        return None, edge
    return edge, None


def sup_search(key, params: ModelParams, option: OptionSpec, nx: int = 161, ny: int = 121) -> SupSearch:
    """Numerical sup of |d^key BS_Put| over the truncated reachable region.

    x runs over K e^{-rT} e^{-20..20} intersected with the range of the
    expansion points (1-u) S0 + u S0 P_T; y over [beta, beta + 40 E I_T]
    with beta = sigma0^2 alpha_{0,T}.  ``boundary_ok`` is False when the
    maximum sits on a truncation edge (more than 1% of the interior max),
    i.e. the value depends on where the region was cut.
    """
    key = (int(key[0]), int(key[1]))
    T, K = option.expiry, option.strike
    r_t = params.r * T
    beta = params.sigma0_sq * (-math.expm1(-params.lam * T) / params.lam)
    e_it = expected_integrated_variance(params, T)
    centre = math.log(K) - r_t
    lo_s, hi_s = _x_support(params, T)
    win = (centre - 20.0, centre + 20.0)
    open_lo = open_hi = False
    if lo_s is not None and hi_s is not None:
        lx = (math.log(lo_s), math.log(hi_s))
    elif lo_s is None:
        h = math.log(hi_s)
        lx = (min(win[0], h), min(win[1], h))
        open_lo = True
    else:
        l = math.log(lo_s)
        lx = (max(win[0], l), max(win[1], l))
        open_hi = True
    one_d = lx[0] == lx[1]
    ly = (math.log(beta), math.log(beta + 40.0 * e_it))

    f = lambda x, y: np.abs(eval_partial(key, x, y, K, r_t))
    xs = np.array([math.exp(lx[0])]) if one_d else np.exp(np.linspace(lx[0], lx[1], nx))
    ys = np.exp(np.linspace(ly[0], ly[1], ny if not one_d else 4 * ny))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        V = f(X, Y)
    V = np.where(np.isfinite(V), V, 0.0)
    vmax = float(V.max())
    edges = [V[:, -1].max()]
    if open_lo and not one_d:
        edges.append(V[0, :].max())
    if open_hi and not one_d:
        edges.append(V[-1, :].max())
    boundary_ok = bool(vmax == 0.0 or max(edges) < _BOUNDARY_FRAC * vmax)

    # local refinement from the best grid cells, in log coordinates
    best = vmax
    i, j = np.unravel_index(int(np.argmax(V)), V.shape)
    arg = (float(X[i, j]), float(Y[i, j]))
    flat = np.argsort(V, axis=None)[::-1][:5]
    bounds = [(lx[0], lx[1]), (ly[0], ly[1])]
    for idx in flat:
        a, b = np.unravel_index(int(idx), V.shape)
        z0 = np.array([math.log(X[a, b]), math.log(Y[a, b])])
        if one_d:
            obj = lambda z: -float(f(math.exp(lx[0]), math.exp(z[0])))
            res = minimize(obj, z0[1:], method="L-BFGS-B", bounds=bounds[1:])
            cand, pt = -res.fun, (math.exp(lx[0]), math.exp(res.x[0]))
        else:
            obj = lambda z: -float(f(math.exp(z[0]), math.exp(z[1])))
            res = minimize(obj, z0, method="L-BFGS-B", bounds=bounds)
            cand, pt = -res.fun, (math.exp(res.x[0]), math.exp(res.x[1]))
        if np.isfinite(cand) and cand > best:
            best, arg = float(cand), pt
    return SupSearch(key, SAFETY * best, best, arg, (math.exp(lx[0]), math.exp(lx[1])),
                     (math.exp(ly[0]), math.exp(ly[1])), boundary_ok)


def sup_derivative_bound(key, params: ModelParams, option: OptionSpec) -> float:
    """Upper estimate (with 5% margin) of sup |d^key BS_Put| on the reachable region."""
    if sum(key) < 3:
        raise ValueError("sup bounds are used for derivative orders >= 3")
    return sup_search(key, params, option).value


def gn_sequence(N: int, params: ModelParams, T: float):
    """G_0..G_N, upper bounds for |E[(P_T - 1)^h]| when rho <= 0."""
    rho = params.rho
    if rho > 0:
        raise DomainError("the P_T moment bound needs rho <= 0")
    if rho == 0:
        return [1.0] + [0.0] * N
    lt = params.lam * T
    kr = params.cumulant.kappa(rho)
    f_T = -0.5 * lt * kr * (math.exp(-lt * kr) + 1.0)
    return h_general(0, N, f_T, 0.0, abs(rho), params, T)


def gn_bound(N: int, params: ModelParams, T: float) -> float:
    return gn_sequence(N, params, T)[N]


@dataclass
class BoundReport:
    order: int
    method: str
    sup_bounds: Dict[Tuple[int, int], float]
    moment_factors: Dict[int, float]
    terms: Dict[int, float]
    total: float
    asymptotic_order: Optional[int]
    unreliable: bool = False
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        """One row per derivative key: key, M value, moment factor, term, total."""
        out = []
        N = self.order
        for n in range(N + 2):
            key = (N + 1 - n, n)
            out.append({
                "key": f"{key[0]}_{key[1]}",
                "m_value": self.sup_bounds.get(key, 0.0),
                "moment_factor": self.moment_factors.get(n, 0.0),
                "term": self.terms.get(n, 0.0),
                "total": self.total,
            })
        return out

    def to_json(self) -> str:
        return json.dumps({
            "order": self.order, "method": self.method, "total": self.total,
            "asymptotic_order": self.asymptotic_order, "unreliable": self.unreliable,
            "rows": self.rows(),
        })


def _asym_order(params, method):
    if method == "raw_theorem" or params.rho > 0:
        return None
    kind = params.cumulant.kind
    return (lambda N: N + 2 if kind == "ig" else N + 1) if method == "rho_zero" else (lambda N: N + 1)


def remainder_bound(N: int, params: ModelParams, option: OptionSpec, method: str = "auto",
                    threads: int = 1) -> BoundReport:
    """Bound on |price - Pi_N|.

    method:
      cauchy_schwarz  rho <= 0; even moments to order 2N+2, P-factors via G_n
      rho_zero        rho == 0; single I-moment term (absolute moment)
      raw_theorem     signed mixed moments; diagnostic only, not a proven bound
      auto            rho_zero if rho == 0, cauchy_schwarz if rho < 0, else raw_theorem
    """
    require_valid(params, option)
    if N < 2:
        raise ValueError("order must be >= 2")
    rho = params.rho
    if method == "auto":
        method = "rho_zero" if rho == 0 else ("cauchy_schwarz" if rho < 0 else "raw_theorem")
    if method == "cauchy_schwarz" and rho > 0:
        raise DomainError("cauchy_schwarz bound requires rho <= 0")
    if method == "rho_zero" and rho != 0:
        raise DomainError("rho_zero bound requires rho == 0")
    if method not in ("cauchy_schwarz", "rho_zero", "raw_theorem"):
        raise ValueError(f"unknown method {method!r}")

    T = option.expiry
    s0 = params.s0
    tab = moment_table(params, T)
    n1 = N + 1
    diag = {}
    factors: Dict[int, float] = {}
    if method == "cauchy_schwarz":
        G = gn_sequence(2 * n1, params, T)
        for n in range(n1 + 1):
            factors[n] = math.sqrt(G[2 * n1 - 2 * n]) * math.sqrt(max(tab.variance_moment(2 * n), 0.0))
    elif method == "rho_zero":
        if n1 % 2 == 0:
            fac = abs(tab.variance_moment(n1))
        else:
            # E|X|^{N+1} <= (E X^{N+2})^{(N+1)/(N+2)}
            fac = tab.variance_moment(n1 + 1) ** (n1 / (n1 + 1))
        factors = {n1: fac}
        diag["signed_moment_form"] = abs(tab.variance_moment(n1))
    else:
        for n in range(n1 + 1):
            factors[n] = abs(tab.central_mixed_moment(n1, n))

    keys = [(n1 - n, n) for n in sorted(factors) if factors[n] != 0.0]
    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(threads) as ex:
            found = list(ex.map(lambda k: sup_search(k, params, option), keys))
    else:
        found = [sup_search(k, params, option) for k in keys]
    sups = {s.key: s.value for s in found}
    diag["boundary_ok"] = all(s.boundary_ok for s in found)
    diag["edge_keys"] = [s.key for s in found if not s.boundary_ok]
    terms = {}
    fact = math.factorial(n1)
    for n, fac in sorted(factors.items()):
        key = (n1 - n, n)
        M = sups.get(key, 0.0)
        terms[n] = math.comb(n1, n) * s0 ** (n1 - n) * fac * M / fact
    total = math.fsum(terms.values())
    if method == "rho_zero":
        diag["signed_moment_total"] = diag["signed_moment_form"] * sups.get((0, n1), 0.0) / fact
    order_fn = _asym_order(params, method)
    return BoundReport(
        order=N, method=method, sup_bounds=dict(sorted(sups.items())), moment_factors=factors,
        terms=terms, total=total, asymptotic_order=order_fn(N) if order_fn else None,
        unreliable=T < UNRELIABLE_T, diagnostics=diag,
    )


# ---------------------------------------------------------------------------
# b-free coefficient recursions for the moment bounds

def gamma_f_sequence(N: int, a: float, lam: float, T: float):
    """f_1..f_N with |E[(I - EI)^n]| <= a T f_n / (lam b^n), gamma model."""
    f = [0.0, 0.0, 2.0]
    for m in range(2, N):  # build f_{m+1}
        s = a * f[m] * T
        for i in range(1, m):
            s += i * a / lam ** (i - 1) * math.factorial(m) / math.factorial(m + 1 - i) * f[m + 1 - i] * T
        s += math.factorial(m + 1) / lam ** (m - 1)
        f.append(s)
    return f[: N + 1]


def gamma_g_sequence(N: int, a: float, lam: float, T: float, rho_abs: float, e: float):
    """g_1..g_N with G_n <= a lam T |rho| g_n / b^n, gamma model; e = exp(-lam T kappa(rho))."""
    g = [0.0, 0.5 * e + 1.5]
    for m in range(1, N):
        s = (0.5 * e + 0.5) * a * rho_abs * lam * T * g[m]
        for i in range(1, m + 1):
            s += math.factorial(m) / math.factorial(m + 1 - i) * g[m + 1 - i] * i * a * lam * T * rho_abs ** i
        s += math.factorial(m + 1) * rho_abs ** m
        g.append(s)
    return g[: N + 1]


def ig_f_sequence(N: int, a: float, lam: float, T: float, b: float):
    """f_1..f_N with |E[(I - EI)^n]| <= a T f_n / (lam b^{n+1}), IG model."""
    f = [0.0, 0.0, float(PHI[2])]
    for m in range(2, N):
        s = a * f[m] * T
        for i in range(1, m):
            s += math.comb(m, i - 1) * PHI[i] * a / (lam ** (i - 1) * b ** (i - 1)) * f[m + 1 - i] * T
        s += PHI[m + 1] / (lam ** (m - 1) * b ** (m - 1))
        f.append(s)
    return f[: N + 1]


def ig_g_sequence(N: int, a: float, lam: float, T: float, b: float, rho_abs: float, e: float):
    """g_1..g_N with G_n <= a lam T |rho| g_n / b^n, IG model."""
    g = [0.0, 0.5 * e + 1.5]
    for m in range(1, N):
        s = (0.5 * e + 0.5) * a * rho_abs * lam * T * g[m]
        for i in range(1, m + 1):
            s += math.comb(m, i - 1) * g[m + 1 - i] * PHI[i] * a * lam * T * rho_abs ** i / b ** (i - 1)
        s += PHI[m + 1] * rho_abs ** m / b ** m
        g.append(s)
    return g[: N + 1]


@dataclass(frozen=True)
class AsymptoticCoefficients:
    f_n: float
    g_n: Optional[float]
    order_rho0: int
    order_general: int


def asymptotic_coefficients(N: int, params: ModelParams, T: float) -> AsymptoticCoefficients:
    """f_N, g_N and the b-decay orders of the remainder bound."""
    rho = params.rho
    if rho > 0:
        raise DomainError("asymptotic coefficients need rho <= 0")
    cm = params.cumulant
    a, lam = cm.a, params.lam
    e = math.exp(-lam * T * cm.kappa(rho))
    if cm.kind == "gamma":
        fN = gamma_f_sequence(N, a, lam, T)[N]
        gN = gamma_g_sequence(N, a, lam, T, abs(rho), e)[N] if rho < 0 else None
        return AsymptoticCoefficients(fN, gN, N + 1, N + 1)
    fN = ig_f_sequence(N, a, lam, T, cm.b)[N]
    gN = ig_g_sequence(N, a, lam, T, cm.b, abs(rho), e)[N] if rho < 0 else None
    return AsymptoticCoefficients(fN, gN, N + 2, N + 1)
