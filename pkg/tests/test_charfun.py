import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from bnstaylor.charfun import (
    CfSettings,
    cf_call_price,
    cf_log_price,
    cf_put_price,
    check_damping,
    kappa_integral,
)
from bnstaylor.model import DomainError, Gamma, ModelParams, OptionSpec, alpha

from conftest import FIG8, GAMMA110, IG205

ATM100 = OptionSpec(100.0, 1.0)
# values printed for lambda >= 4.5, produced by the principal-branch closed form
UNSTABLE = {4.5: 30.99264748166792, 5.0: 36.26401418134029, 5.5: 40.01333059206822,
            6.0: 38.4643794239265, 6.5: 36.07564935316462}


def test_cf_at_zero():
    for p in (FIG8, IG205, GAMMA110):
        assert cf_log_price(0.0, p, 1.0) == 1.0


@pytest.mark.parametrize("p", [FIG8, IG205, GAMMA110], ids=["fig8", "ig205", "gamma"])
def test_conjugate_symmetry(p):
    for u in (0.3, 1.0, 4.0, 17.0, 80.0):
        assert abs(cf_log_price(-u, p, 1.0) - np.conj(cf_log_price(u, p, 1.0))) <= 1e-12


def _scipy_kappa_integral(u, p, T):
    cm, lam = p.cumulant, p.lam
    A = 1j * u * p.rho
    B = 0.5 * (1j * u + u * u)

    def f(s, part):
        v = cm.kappa(A - B * alpha(lam, s, T))
        return v.real if part == 0 else v.imag

    re = quad(f, 0, T, args=(0,), epsabs=0, epsrel=1e-12, limit=200)[0]
    im = quad(f, 0, T, args=(1,), epsabs=0, epsrel=1e-12, limit=200)[0]
    return lam * complex(re, im)


@pytest.mark.parametrize("p", [FIG8, IG205, GAMMA110, FIG8.replace(lam=6.0)], ids=["fig8", "ig205", "gamma", "fig8-lam6"])
@pytest.mark.parametrize("u", [0.5, 1.0, 2.0, 5.0, 10.0, 40.0])
def test_closed_form_integral_vs_quadrature(p, u):
    ref = _scipy_kappa_integral(u, p, 1.0)
    got = complex(kappa_integral(u, p, 1.0))
    assert abs(got - ref) <= 1e-8 * abs(ref)


def test_principal_branch_departs_at_large_lambda():
    p = FIG8.replace(lam=5.0)
    u = np.linspace(0.0, 60.0, 301) - 1.75j
    tracked = kappa_integral(u, p, 1.0)
    principal = kappa_integral(u, p, 1.0, method="principal")
    numeric = kappa_integral(u, p, 1.0, method="numeric")
    assert np.max(np.abs(tracked - numeric)) < 1e-9
    assert np.max(np.abs(np.exp(principal - tracked) - 1)) > 1e-3


@pytest.mark.parametrize("lam,ref", [(1.0, 20.4192290946107), (2.0, 17.7520046612194), (3.0, 16.0190649810317)])
def test_stable_region_digits(lam, ref):
    res = cf_put_price(FIG8.replace(lam=lam), ATM100)
    assert res.price == pytest.approx(ref, rel=1e-5)
    assert res.converged and not res.flagged


def test_principal_mode_reproduces_unstable_values():
    for lam, ref in UNSTABLE.items():
        res = cf_put_price(FIG8.replace(lam=lam), ATM100, CfSettings(side="call", branch="principal"))
        assert res.price == pytest.approx(ref, abs=1e-9)


def test_branch_flag():
    for lam in (4.5, 5.0, 6.5):
        res = cf_put_price(FIG8.replace(lam=lam), ATM100, CfSettings(side="call"))
        assert res.branch_error and res.flagged
        assert res.principal_price == pytest.approx(UNSTABLE[lam], abs=1e-9)
    assert not cf_put_price(FIG8.replace(lam=3.0), ATM100, CfSettings(side="call")).flagged


def test_tracked_price_is_sane_at_lambda_5():
    res = cf_put_price(FIG8.replace(lam=5.0), ATM100)
    assert 14.0 < res.price < 14.1
    assert res.error_estimate < 1e-8


@pytest.mark.parametrize("p", [FIG8, IG205, GAMMA110], ids=["fig8", "ig205", "gamma"])
def test_put_call_parity_independent_transforms(p):
    s0 = p.s0
    for K in (0.6 * s0, s0, 1.7 * s0):
        o = OptionSpec(K, 1.0)
        call = cf_call_price(p, o, CfSettings(side="call")).price
        put = cf_put_price(p, o, CfSettings(side="put")).price
        assert call - put == pytest.approx(s0 - K * math.exp(-p.r), abs=1e-9 * s0)


@pytest.mark.parametrize("p", [FIG8.replace(s0=1.0), GAMMA110], ids=["ig", "gamma"])
def test_arbitrage_bounds(p):
    for K in (0.01, 0.3, 1.0, 3.0, 100.0):
        v = cf_put_price(p, OptionSpec(K, 1.0)).price
        disc = K * math.exp(-p.r)
        assert max(disc - p.s0, 0.0) - 1e-12 <= v <= disc + 1e-12


def test_fixed_simpson_agrees():
    a = cf_put_price(FIG8, ATM100).price
    b = cf_put_price(FIG8, ATM100, CfSettings(quadrature="fixed_simpson")).price
    assert b == pytest.approx(a, rel=1e-6)


def test_damping_independence():
    vals = [cf_put_price(IG205, OptionSpec(1.2, 1.0), CfSettings(damping=d)).price for d in (0.5, 0.75, 1.5)]
    assert max(vals) - min(vals) < 1e-10


def test_inadmissible_damping():
    p = ModelParams(1.0, 0.5, 0.0, 0.5, 1.0, Gamma(1.0, 1.2))
    with pytest.raises(DomainError):
        check_damping(p, 1.0, 3.0)
    with pytest.raises(DomainError):
        cf_put_price(p, OptionSpec(2.0, 1.0), CfSettings(damping=3.0, side="call"))


def test_settings_validation():
    with pytest.raises(ValueError):
        CfSettings(damping=0.0)
    with pytest.raises(ValueError):
        CfSettings(grid_points=1000)
    with pytest.raises(ValueError):
        CfSettings(quadrature="trapezoid")


def test_thread_safe():
    from concurrent.futures import ThreadPoolExecutor

    lams = [1.0, 2.0, 3.0, 1.0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with ThreadPoolExecutor(4) as ex:
            vals = list(ex.map(lambda lam: cf_put_price(FIG8.replace(lam=lam), ATM100).price, lams))
    assert vals[0] == vals[3]
    assert vals[1] == cf_put_price(FIG8.replace(lam=2.0), ATM100).price
