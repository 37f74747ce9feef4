"""Arbitrage-free pricing with positive linear forms beyond probability
measures: payoffs with growth coordinates, generalized pricing forms,
LP price bounds on augmented state spaces, pricing kernels, and
stochastic-volatility martingality experiments."""

__version__ = "0.1.0"

from .payoffs import (
    DominatingFunction,
    GrowthDirection,
    Payoff,
    make_bond,
    make_call,
    make_forward,
    make_log_contract,
    make_power_call,
    make_put,
    one_plus_s,
    one_plus_s_minus_log,
    one_plus_s_squared,
    payoff_norm,
)
from .forms import (
    ArbitrageDetected,
    CallCurve,
    CurveVerdict,
    Density,
    GeneralizedPricingForm,
    TailFitError,
    UnpriceablePayoff,
    implied_form_from_curve,
    validate_call_curve,
    verify_norm_theorem,
)
from .simplex import LPProblem, LPSolution, solve_lp
from .market import (
    AugmentedStateSpace,
    FiniteMarket,
    Instrument,
    check_consistency,
    is_complete,
    price_bounds,
)
from .kernel import (
    Generator,
    GridSpec,
    PricingKernelOperator,
    backward_step,
    bs_generator,
    bs_step,
    compose,
    generator_arbitrage_check,
    implied_short_rate,
    operator_norm,
    price_european,
)
from .stochvol import (
    PRESETS,
    BarrierSweepResult,
    EstimatorReport,
    SVParams,
    barrier_survival,
    bs_call,
    bs_put,
    change_of_variables_check,
    conditioned_estimator,
    infinite_variance_limit,
    limit_order_experiment,
    naive_estimator,
    quadrature_identity,
    simulate_y_path,
)

__all__ = [name for name in dir() if not name.startswith("_")]
