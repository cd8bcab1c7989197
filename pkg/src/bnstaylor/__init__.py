"""Taylor-expansion pricing of European puts under BNS stochastic volatility."""
from .bounds import BoundReport, asymptotic_coefficients, gn_bound, remainder_bound, sup_derivative_bound
from .bsderiv import DerivTerm, bs_partial, bs_put, d_pm, eval_partial
from .charfun import CfResult, CfSettings, cf_log_price, cf_put_price, kappa_integral
from .model import (
    DomainError,
    Gamma,
    InverseGaussian,
    ModelParams,
    OptionSpec,
    ParameterError,
    alpha,
    validate,
)
from .moments import (
    MomentTable,
    central_mixed_moment,
    expected_integrated_variance,
    h_general,
    mixed_power_moment,
    moment_table,
    second_order_moments,
)
from .montecarlo import McSettings, mc_put_price, simulate_paths
from .pricer import PriceResult, price_by_homogeneity, second_order_price, taylor_price, taylor_prices

__version__ = "0.1.0"
