import itertools
import warnings

import pytest

from bnstaylor.bounds import remainder_bound
from bnstaylor.charfun import cf_put_price
from bnstaylor.model import Gamma, InverseGaussian, ModelParams, OptionSpec, make_cumulant
from bnstaylor.montecarlo import McSettings, simulate_paths
from bnstaylor.pricer import taylor_prices

# IG(1,10) leverage set used for the lambda-stability table
FIG8 = ModelParams(1.0, -0.3, 0.05, 0.5, 100.0, InverseGaussian(1.0, 10.0))
IG205 = ModelParams(0.5, -0.5, 0.05, 0.5, 1.0, InverseGaussian(20.0, 5.0))
GAMMA110 = ModelParams(0.5, -0.3, 0.05, 0.5, 1.0, Gamma(1.0, 10.0))

MC_SEED = 20240601
_bundles = {}
ACCEPTANCE_LINES = []


def mc_bundle(params, T, paths=1_000_000, seed=MC_SEED):
    """Simulated paths shared across the whole session."""
    key = (params, T, paths, seed)
    if key not in _bundles:
        _bundles[key] = simulate_paths(params, T, McSettings(paths=paths, seed=seed))
    return _bundles[key]


_grids = {}


def bound_grid(rho=-0.5):
    """Bound-validity grid: 2 models x b in {20, 80} x N in {2,3,4} x K x T.

    Each row carries the remainder bound, the realized error against the CF
    price and the CF quadrature error estimate.
    """
    if rho in _grids:
        return _grids[rho]
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for kind, b, T, K in itertools.product(("gamma", "ig"), (20.0, 80.0), (0.5, 1.0, 2.0), (0.5, 1.0, 1.5)):
            p = ModelParams(0.5, rho, 0.05, 0.5, 1.0, make_cumulant(kind, 20.0, b))
            o = OptionSpec(K, T)
            cf = cf_put_price(p, o)
            for pr in taylor_prices(p, o, [2, 3, 4]):
                rep = remainder_bound(pr.order, p, o, "auto")
                rows.append(dict(kind=kind, b=b, T=T, K=K, N=pr.order, bound=rep.total, method=rep.method,
                                 error=abs(cf.price - pr.value), cf_err=cf.error_estimate))
    _grids[rho] = rows
    return rows


def report(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
