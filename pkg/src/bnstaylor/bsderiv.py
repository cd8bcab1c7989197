"""Black-Scholes put as a function of spot x and total variance y, plus exact
partial derivatives of any order.

Every partial derivative of order >= 2 has the shape

    A / (x^n y^{m/2}) * phi(d+) * F(d+, sqrt(y))

with F a polynomial with rational coefficients.  Terms are generated by an
exact differentiation algebra on monomials ``x^p s^q d+^i phi(d+)``
(``s = sqrt(y)``), using ``d- = d+ - s`` to keep a single canonical variable
set.  Coefficients are :class:`fractions.Fraction`.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Dict, Tuple

import numpy as np
from scipy.special import erfc

from .model import DomainError

__all__ = [
    "d_pm",
    "bs_put",
    "bs_call",
    "norm_cdf",
    "norm_pdf",
    "DerivTerm",
    "bs_partial",
    "eval_partial",
    "bs_dxx",
    "bs_dxy",
    "bs_dyy",
    "derive_along",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_cdf(z):
    return 0.5 * erfc(-np.asarray(z) / _SQRT2)


def norm_pdf(z):
    z = np.asarray(z)
    return _INV_SQRT2PI * np.exp(-0.5 * z * z)


def _check_pos(x, y, strike):
    if np.any(np.asarray(x) <= 0) or np.any(np.asarray(y) <= 0) or np.any(np.asarray(strike) <= 0):
        raise DomainError("x, y and strike must be positive")


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def d_pm(x, y, strike, r_t):
    """(d+, d-) for spot x, total variance y and discount exponent r_t = r T."""
    _check_pos(x, y, strike)
    s = np.sqrt(y)
    m = np.log(np.asarray(x) / strike) + r_t
    dp = m / s + 0.5 * s
    return _out(dp), _out(dp - s)


def bs_put(x, y, strike, r_t):
    """K e^{-rT} Phi(-d-) - x Phi(-d+)."""
    dp, dm = d_pm(x, y, strike, r_t)
    return _out(strike * math.exp(-r_t) * norm_cdf(-np.asarray(dm)) - x * norm_cdf(-np.asarray(dp)))


def bs_call(x, y, strike, r_t):
    dp, dm = d_pm(x, y, strike, r_t)
    return _out(x * norm_cdf(dp) - strike * math.exp(-r_t) * norm_cdf(dm))


# direct second-order formulas, kept independent of the term algebra
def bs_dxx(x, y, strike, r_t):
    dp, _ = d_pm(x, y, strike, r_t)
    return _out(norm_pdf(dp) / (x * np.sqrt(y)))


def bs_dyy(x, y, strike, r_t):
    dp, dm = d_pm(x, y, strike, r_t)
    return _out(x * norm_pdf(dp) * (dm * dp - 1) / (4 * np.asarray(y) ** 1.5))


def bs_dxy(x, y, strike, r_t):
    dp, dm = d_pm(x, y, strike, r_t)
    return _out(-norm_pdf(dp) * dm / (2 * np.asarray(y)))


def _bs_dx(x, y, strike, r_t):
    dp, _ = d_pm(x, y, strike, r_t)
    return _out(-norm_cdf(-np.asarray(dp)))


def _bs_dy(x, y, strike, r_t):
    dp, _ = d_pm(x, y, strike, r_t)
    return _out(x * norm_pdf(dp) / (2 * np.sqrt(y)))


# ---------------------------------------------------------------------------
# term algebra

Mono = Tuple[int, int, int]  # (p, q, i): x^p s^q d+^i, times phi(d+)
Raw = Dict[Mono, Fraction]

_SEEDS: Dict[Tuple[int, int], Raw] = {
    # phi / (x s)
    (2, 0): {(-1, -1, 0): Fraction(1)},
    # -phi d- / (2 y),  d- = d+ - s
    (1, 1): {(0, -2, 1): Fraction(-1, 2), (0, -1, 0): Fraction(1, 2)},
    # x phi (d- d+ - 1) / (4 y^{3/2})
    (0, 2): {(1, -3, 2): Fraction(1, 4), (1, -2, 1): Fraction(-1, 4), (1, -3, 0): Fraction(-1, 4)},
}


def _add(out, mono, c):
    if c:
        v = out.get(mono, 0) + c
        if v:
            out[mono] = v
        else:
            out.pop(mono, None)


def _dx(raw: Raw) -> Raw:
    # d/dx: dd+/dx = 1/(x s), dphi/dx = -d+ phi / (x s)
    out: Raw = {}
    for (p, q, i), c in raw.items():
        _add(out, (p - 1, q, i), c * p)
        if i:
            _add(out, (p - 1, q - 1, i - 1), c * i)
        _add(out, (p - 1, q - 1, i + 1), -c)
    return out


def _dy(raw: Raw) -> Raw:
    # d/dy: ds/dy = 1/(2s), dd+/dy = -(d+ - s)/(2 s^2), dphi/dy = phi d+ (d+ - s)/(2 s^2)
    out: Raw = {}
    h = Fraction(1, 2)
    for (p, q, i), c in raw.items():
        _add(out, (p, q - 2, i), c * (Fraction(q, 2) - Fraction(i, 2)))
        if i:
            _add(out, (p, q - 1, i - 1), c * Fraction(i, 2))
        _add(out, (p, q - 2, i + 2), c * h)
        _add(out, (p, q - 1, i + 1), -c * h)
    return out


def _gcd_frac(fracs):
    num = reduce(math.gcd, (abs(f.numerator) for f in fracs))
    den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs))
    return Fraction(num, den)


@dataclass(frozen=True)
class DerivTerm:
    """A / (x^n y^{m/2}) * phi(d+) * sum c_{ijk} d+^i d-^j sqrt(y)^k.

    Canonical terms have j = 0 throughout (d- is eliminated), integer
    coefficients with content one, and the sign of A chosen so the
    lexicographically largest monomial has a positive coefficient.
    """

    a_coef: Fraction
    x_pow: int
    sqrt_y_pow: int
    poly: Tuple[Tuple[Tuple[int, int, int], Fraction], ...]

    @classmethod
    def from_raw(cls, raw: Raw) -> "DerivTerm":
        if not raw:
            raise ValueError("empty term")
        ps = {p for (p, _, _) in raw}
        if len(ps) != 1:
            raise ValueError("term is not homogeneous in x")
        n = -ps.pop()
        m = -min(q for (_, q, _) in raw)
        mono = {(i, 0, q + m): c for (_, q, i), c in raw.items()}
        keys = sorted(mono)
        content = _gcd_frac(mono.values())
        if mono[keys[-1]] < 0:
            content = -content
        poly = tuple((k, mono[k] / content) for k in keys)
        return cls(content, n, m, poly)

    @classmethod
    def from_components(cls, a_coef, x_pow, sqrt_y_pow, poly) -> "DerivTerm":
        """Build from a polynomial that may use d- (index j), e.g. a form written with d-."""
        raw: Raw = {}
        for (i, j, k), c in dict(poly).items():
            # (d+ - s)^j expanded
            for t in range(j + 1):
                coef = Fraction(a_coef) * Fraction(c) * math.comb(j, t) * (-1) ** t
                _add(raw, (-x_pow, k - sqrt_y_pow + t, i + j - t), coef)
        return cls.from_raw(raw)

    def to_raw(self) -> Raw:
        return {(-self.x_pow, k - self.sqrt_y_pow, i): self.a_coef * c for (i, _, k), c in self.poly}

    @property
    def order_in_dplus(self):
        return max(i + j for (i, j, _), _ in self.poly)

    def structural_ok(self) -> bool:
        """Polynomial part has degree >= 1 in d+ or d-."""
        return any(i >= 1 or j >= 1 for (i, j, _), _ in self.poly)

    def _compiled(self):
        c = getattr(self, "_cache", None)
        if c is None:
            deg_i = max(i for (i, _, _), _ in self.poly)
            deg_k = max(k for (_, _, k), _ in self.poly)
            # coefficient grid: rows d+ power, cols sqrt(y) power (highest first for polyval)
            grid = np.zeros((deg_i + 1, deg_k + 1))
            for (i, _, k), v in self.poly:
                grid[deg_i - i, deg_k - k] = float(v)
            c = (float(self.a_coef), grid)
            object.__setattr__(self, "_cache", c)
        return c

    def evaluate(self, x, y, strike, r_t):
        a, grid = self._compiled()
        dp, _ = d_pm(x, y, strike, r_t)
        dp = np.asarray(dp)
        s = np.sqrt(np.asarray(y, dtype=float))
        # Horner in d+ with coefficients that are Horner polynomials in s
        acc = np.zeros(np.broadcast(dp, s).shape)
        for row in grid:
            acc = acc * dp + np.polyval(row, s)
        pref = a * norm_pdf(dp) / (np.asarray(x, dtype=float) ** self.x_pow * s ** self.sqrt_y_pow)
        return _out(pref * acc)

    def pretty(self) -> str:
        def mono(i, j, k):
            parts = []
            for name, e in (("d+", i), ("d-", j), ("sqrt(y)", k)):
                if e == 1:
                    parts.append(name)
                elif e > 1:
                    parts.append(f"{name}^{e}")
            return "*".join(parts) or "1"

        terms = []
        for (i, j, k), c in reversed(self.poly):
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            body = mono(i, j, k)
            if mag != 1:
                body = f"{mag}*{body}" if body != "1" else f"{mag}"
            terms.append(f"{sign} {body}")
        poly = " ".join(terms).lstrip("+ ")
        return (
            f"({self.a_coef}) * phi(d+) / (x^{self.x_pow} * y^({self.sqrt_y_pow}/2))"
            f" * ({poly})"
        )

    def __str__(self):
        return self.pretty()


_RAW_CACHE: Dict[Tuple[int, int], Raw] = dict(_SEEDS)
_TERM_CACHE: Dict[Tuple[int, int], DerivTerm] = {}
_LOCK = threading.Lock()


def _raw_for(key):
    r = _RAW_CACHE.get(key)
    if r is not None:
        return r
    kx, ky = key
    # prefer x-differentiation of a lower key, fall back to y
    if kx >= 1 and kx - 1 + ky >= 2:
        r = _dx(_raw_for((kx - 1, ky)))
    else:
        r = _dy(_raw_for((kx, ky - 1)))
    with _LOCK:
        _RAW_CACHE.setdefault(key, r)
    return r


def derive_along(seed: Tuple[int, int], path: str) -> DerivTerm:
    """Differentiate a second-order seed along a path such as ``"xyy"``."""
    raw = dict(_SEEDS[seed])
    for ch in path:
        raw = _dx(raw) if ch == "x" else _dy(raw)
    return DerivTerm.from_raw(raw)


def bs_partial(key) -> DerivTerm:
    """Exact term for d^{kx+ky} BS_Put / dx^kx dy^ky, kx + ky >= 2."""
    key = (int(key[0]), int(key[1]))
    if key[0] < 0 or key[1] < 0 or sum(key) < 2:
        raise ValueError("term algebra covers derivative orders >= 2")
    t = _TERM_CACHE.get(key)
    if t is None:
        t = DerivTerm.from_raw(_raw_for(key))
        with _LOCK:
            t = _TERM_CACHE.setdefault(key, t)
    return t


def eval_partial(key, x, y, strike, r_t):
    """Value of the (kx, ky) partial of the put at (x, y)."""
    kx, ky = int(key[0]), int(key[1])
    if kx + ky == 0:
        return bs_put(x, y, strike, r_t)
    if (kx, ky) == (1, 0):
        return _bs_dx(x, y, strike, r_t)
    if (kx, ky) == (0, 1):
        return _bs_dy(x, y, strike, r_t)
    return bs_partial((kx, ky)).evaluate(x, y, strike, r_t)
