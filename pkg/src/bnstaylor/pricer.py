"""Taylor expansion of the mixing formula around (S0, E[I_T]).

The put price is E[BS_Put(S0 P_T, I_T)].  Expanding BS_Put to order N around
(S0, E I_T) leaves central mixed moments of (P_T - 1, I_T - E I_T) times
partial derivatives of the Black-Scholes put.  The first-order layer
vanishes because both factors are centred.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .bounds import remainder_bound
from .bsderiv import bs_dxx, bs_dxy, bs_dyy, bs_put, eval_partial
from .model import DomainError, ModelParams, OptionSpec, require_valid, validate
from .moments import MomentTable, moment_table, second_order_moments

__all__ = [
    "Correction",
    "PriceResult",
    "taylor_price",
    "taylor_prices",
    "correction_layer",
    "second_order_price",
    "price_by_homogeneity",
    "OrderCapWarning",
]

_CENTRED_TOL = 1e-14


class OrderCapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Correction:
    n: int
    k: int
    moment: float
    derivative: float
    contribution: float


@dataclass
class PriceResult:
    value: float
    order: int
    base_bs: float
    corrections: List[Correction]
    moments_used: Optional[MomentTable] = None
    bound: Optional[object] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def sum_corrections(self) -> float:
        return math.fsum(c.contribution for c in self.corrections)

    def layer(self, n: int) -> float:
        """Signed sum of the order-n correction terms."""
        return math.fsum(c.contribution for c in self.corrections if c.n == n)

    @property
    def layers(self):
        return {n: self.layer(n) for n in range(2, self.order + 1)}


def _check_order(params, N):
    if N < 2:
        raise ValueError("Taylor order must be >= 2")
    v = validate(params, order=N)
    if v.max_order is not None and N > v.max_order:
        raise DomainError(v.warnings[0])
    if v.max_order is not None and N + 1 > v.max_order:
        warnings.warn(
            f"moments of order N+1={N + 1} do not exist; the remainder is not controlled",
            OrderCapWarning,
            stacklevel=3,
        )


def _layer(n, tab: MomentTable, s0, e_it, K, r_t):
    out = []
    fact = math.factorial(n)
    for k in range(n + 1):
        mom = tab.central_mixed_moment(n, k)
        der = eval_partial((n - k, k), s0, e_it, K, r_t)
        contrib = math.comb(n, k) * s0 ** (n - k) * mom * der / fact
        out.append(Correction(n, k, mom, der, contrib))
    return out


def _assert_centred(tab):
    ep = tab.central_mixed_moment(1, 0)
    ei = tab.central_mixed_moment(1, 1)
    if abs(ep) > _CENTRED_TOL or abs(ei) > _CENTRED_TOL:
        raise ArithmeticError(f"first-order moments not centred: {ep!r}, {ei!r}")


def taylor_prices(params: ModelParams, option: OptionSpec, orders: Sequence[int],
                  with_bound: bool = False) -> List[PriceResult]:
    """Pi_N for several N sharing one moment table and derivative grid.

    With ``with_bound`` each result also carries its remainder BoundReport
    (default method for the sign of rho), which costs a sup search per key.
    """
    require_valid(params, option)
    orders = [int(n) for n in orders]
    if not orders:
        return []
    top = max(orders)
    _check_order(params, top)
    T, K = option.expiry, option.strike
    tab = moment_table(params, T)
    _assert_centred(tab)
    r_t = params.r * T
    e_it = tab.e_it
    base = bs_put(params.s0, e_it, K, r_t)
    layers = {n: _layer(n, tab, params.s0, e_it, K, r_t) for n in range(2, top + 1)}
    res = []
    for N in orders:
        if N < 2:
            raise ValueError("Taylor order must be >= 2")
        corr = [c for n in range(2, N + 1) for c in layers[n]]
        val = base + math.fsum(c.contribution for c in corr)
        bound = None
        if with_bound:
            bound = remainder_bound(N, params, option)
        res.append(PriceResult(val, N, base, corr, tab, bound, diagnostics={"e_it": e_it}))
    return res


def taylor_price(params: ModelParams, option: OptionSpec, N: int, with_bound: bool = False) -> PriceResult:
    """N-th order Taylor approximation Pi_N of the BNS put price."""
    return taylor_prices(params, option, [N], with_bound)[0]


def correction_layer(params: ModelParams, option: OptionSpec, n: int) -> float:
    """Standalone order-n term of the expansion (signed)."""
    require_valid(params, option)
    tab = moment_table(params, option.expiry)
    T = option.expiry
    return math.fsum(c.contribution for c in _layer(n, tab, params.s0, tab.e_it, option.strike, params.r * T))


def second_order_price(params: ModelParams, option: OptionSpec) -> PriceResult:
    """Pi_2 from closed-form moments and direct second derivatives."""
    require_valid(params, option)
    _check_order(params, 2)
    T, K, s0 = option.expiry, option.strike, params.s0
    r_t = params.r * T
    cm = params.cumulant
    lam = params.lam
    e_it = cm.deriv(1, 0.0) * T + (params.sigma0_sq - cm.deriv(1, 0.0)) * (-math.expm1(-lam * T) / lam)
    mom = second_order_moments(params, T)
    base = bs_put(s0, e_it, K, r_t)
    dxx = bs_dxx(s0, e_it, K, r_t)
    dxy = bs_dxy(s0, e_it, K, r_t)
    dyy = bs_dyy(s0, e_it, K, r_t)
    corr = [
        Correction(2, 0, mom.m2_p, dxx, 0.5 * s0 * s0 * mom.m2_p * dxx),
        Correction(2, 1, mom.cov_pi, dxy, s0 * mom.cov_pi * dxy),
        Correction(2, 2, mom.var_i, dyy, 0.5 * mom.var_i * dyy),
    ]
    val = base + math.fsum(c.contribution for c in corr)
    return PriceResult(val, 2, base, corr, None, diagnostics={"e_it": e_it})


def price_by_homogeneity(params: ModelParams, option: OptionSpec, N: int = 2) -> PriceResult:
    """Price at unit strike with spot S0/K, then scale by K."""
    K = option.strike
    unit = taylor_price(params.replace(s0=params.s0 / K), OptionSpec(1.0, option.expiry), N)
    corr = [Correction(c.n, c.k, c.moment, c.derivative, K * c.contribution) for c in unit.corrections]
    return PriceResult(K * unit.value, N, K * unit.base_bs, corr, unit.moments_used, diagnostics=dict(unit.diagnostics))
