"""Parameter records, cumulant models and the OU kernel for BNS dynamics.

The background driving Levy process Z enters only through its cumulant
generating function ``kappa(theta) = log E[exp(theta * Z_1)]``.  Two
stationary laws are supported: inverse Gaussian IG(a, b) and Gamma(a, b).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "DomainError",
    "ParameterError",
    "CumulantModel",
    "InverseGaussian",
    "Gamma",
    "ModelParams",
    "OptionSpec",
    "Validation",
    "alpha",
    "validate",
    "require_valid",
    "MAX_DERIV_ORDER",
]

# tables of (2n-1)!! and phi_n are kept exact up to this order
MAX_DERIV_ORDER = 32
_LOG_SPACE_EXPONENT = 20.0


class DomainError(ValueError):
    """Argument outside the domain where a quantity is finite."""


class ParameterError(ValueError):
    """Invalid model/option parameters; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _double_factorials(nmax):
    # entry n holds (2n-1)!!, with (-1)!! = 1 at n = 0
    out = [1]
    for n in range(1, nmax + 1):
        out.append(out[-1] * (2 * n - 1))
    return tuple(out)


def _phi_table(nmax, dfact):
    # phi_1 = 1, phi_n = phi_{n-1}(2n-3) + (2n-3)!!
    out = [0, 1]
    for n in range(2, nmax + 1):
        out.append(out[-1] * (2 * n - 3) + dfact[n - 1])
    return tuple(out)


DOUBLE_FACTORIAL = _double_factorials(MAX_DERIV_ORDER)
PHI = _phi_table(MAX_DERIV_ORDER, DOUBLE_FACTORIAL)


def _is_mp(x):
    return type(x).__module__.startswith("mpmath")


def _real_part(theta):
    if isinstance(theta, np.ndarray):
        return np.real(theta)
    if _is_mp(theta):
        return theta.real if hasattr(theta, "imag") else theta
    return theta.real if isinstance(theta, complex) else theta


def _scaled_power(coef, base, expo, theta_factor=1.0):
    """coef * base**(-expo), falling back to log space for large exponents."""
    if _is_mp(base) or isinstance(base, complex) or expo <= _LOG_SPACE_EXPONENT:
        return coef * base ** (-expo)
    base = np.asarray(base, dtype=float)
    val = np.exp(math.log(coef) - expo * np.log(base))
    return val if val.ndim else float(val)


class CumulantModel:
    """Cumulant generating function of the BDLP at unit time.

    Subclasses provide ``kappa``, ``deriv`` and ``kappa_hat``.  Values accept
    Python floats, complex numbers, numpy arrays and mpmath numbers.
    """

    kind = "abstract"
    a: float
    b: float

    @property
    def kappa_hat(self) -> float:
        raise NotImplementedError

    def _check(self, theta):
        re = _real_part(theta)
        bad = np.any(np.asarray(re >= self.kappa_hat)) if isinstance(re, np.ndarray) else re >= self.kappa_hat
        if bad:
            raise DomainError(
                f"kappa undefined at theta with real part >= kappa_hat={self.kappa_hat:g}"
            )

    def kappa(self, theta):
        raise NotImplementedError

    def deriv(self, n: int, theta):
        raise NotImplementedError

    def _check_order(self, n):
        if n < 1:
            raise ValueError("derivative order must be >= 1")
        if n > MAX_DERIV_ORDER:
            raise DomainError(f"derivative order {n} exceeds table size {MAX_DERIV_ORDER}")

    def errors(self):
        out = []
        if not self.a > 0:
            out.append(f"a must be positive (got {self.a})")
        if not self.b > 0:
            out.append(f"b must be positive (got {self.b})")
        return out


@dataclass(frozen=True)
class InverseGaussian(CumulantModel):
    """IG(a, b) stationary law: kappa(theta) = a theta / sqrt(b^2 - 2 theta)."""

    a: float
    b: float
    kind = "ig"

    @property
    def kappa_hat(self):
        return 0.5 * self.b * self.b

    def kappa(self, theta):
        self._check(theta)
        return self.a * theta / (self.b * self.b - 2 * theta) ** 0.5

    def deriv(self, n, theta):
        """n-th derivative of kappa.

        phi_n a w^{-(2n-1)} + (2n-1)!! a theta w^{-(2n+1)} with w^2 = b^2 - 2 theta.
        """
        self._check_order(n)
        self._check(theta)
        w2 = self.b * self.b - 2 * theta
        t1 = _scaled_power(PHI[n], w2, (2 * n - 1) / 2)
        t2 = _scaled_power(DOUBLE_FACTORIAL[n], w2, (2 * n + 1) / 2)
        return self.a * (t1 + theta * t2)


@dataclass(frozen=True)
class Gamma(CumulantModel):
    """Gamma(a, b) stationary law: kappa(theta) = a theta / (b - theta)."""

    a: float
    b: float
    kind = "gamma"

    @property
    def kappa_hat(self):
        return self.b

    def kappa(self, theta):
        self._check(theta)
        return self.a * theta / (self.b - theta)

    def deriv(self, n, theta):
        """n! a (b-theta)^{-n} + n! a theta (b-theta)^{-n-1} = n! a b (b-theta)^{-n-1}."""
        self._check_order(n)
        self._check(theta)
        return self.a * self.b * _scaled_power(math.factorial(n), self.b - theta, n + 1)


def make_cumulant(kind: str, a: float, b: float) -> CumulantModel:
    k = kind.strip().lower()
    if k in ("ig", "inverse_gaussian", "inversegaussian"):
        return InverseGaussian(float(a), float(b))
    if k in ("gamma", "ga"):
        return Gamma(float(a), float(b))
    raise ValueError(f"unknown cumulant model {kind!r} (expected 'ig' or 'gamma')")


@dataclass(frozen=True)
class ModelParams:
    """BNS parameter set.

    Construction does not validate; call :func:`validate` to get every
    violation at once.
    """

    lam: float
    rho: float
    r: float
    sigma0_sq: float
    s0: float
    cumulant: CumulantModel

    def replace(self, **kw) -> "ModelParams":
        return replace(self, **kw)

    def with_cumulant(self, **kw) -> "ModelParams":
        return replace(self, cumulant=replace(self.cumulant, **kw))


@dataclass(frozen=True)
class OptionSpec:
    strike: float
    expiry: float

    def errors(self):
        out = []
        if not self.strike > 0:
            out.append(f"strike must be positive (got {self.strike})")
        if not self.expiry > 0:
            out.append(f"expiry must be positive (got {self.expiry})")
        return out


@dataclass
class Validation:
    ok: bool
    errors: list
    max_order: Optional[int]
    warnings: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def alpha(lam, s, t):
    """OU kernel (1 - exp(-lam (t - s))) / lam."""
    if np.any(np.asarray(s) > np.asarray(t)):
        raise ValueError("alpha requires s <= t")
    res = -np.expm1(-lam * (np.asarray(t, dtype=float) - s)) / lam
    return float(res) if np.ndim(res) == 0 else res


def max_taylor_order(params: ModelParams) -> Optional[int]:
    """Largest N with N rho < kappa_hat, or None when rho <= 0."""
    rho = params.rho
    if rho <= 0:
        return None
    khat = params.cumulant.kappa_hat
    n = math.ceil(khat / rho) - 1
    while (n + 1) * rho < khat:
        n += 1
    while n > 0 and n * rho >= khat:
        n -= 1
    return n


def validate(params: ModelParams, order: Optional[int] = None) -> Validation:
    errs = list(params.cumulant.errors())
    if not params.lam > 0:
        errs.append(f"lambda must be positive (got {params.lam})")
    if not params.sigma0_sq > 0:
        errs.append(f"sigma0_sq must be positive (got {params.sigma0_sq})")
    if not params.s0 > 0:
        errs.append(f"s0 must be positive (got {params.s0})")
    if not math.isfinite(params.r):
        errs.append("r must be finite")
    khat = params.cumulant.kappa_hat if not params.cumulant.errors() else None
    if khat is not None and not params.rho < khat:
        errs.append(f"rho must be below kappa_hat={khat:g} (got {params.rho})")
    if errs:
        return Validation(False, errs, None)
    cap = max_taylor_order(params)
    warns = []
    if order is not None and cap is not None and order > cap:
        warns.append(
            f"order {order} needs moments of P_T^{order}, which exist only up to "
            f"power {cap} (rho={params.rho:g}, kappa_hat={khat:g}); order capped at {cap}"
        )
    return Validation(True, [], cap, warns)


def require_valid(params: ModelParams, option: Optional[OptionSpec] = None) -> None:
    v = validate(params)
    errs = list(v.errors)
    if option is not None:
        errs += option.errors()
    if errs:
        raise ParameterError(errs)
