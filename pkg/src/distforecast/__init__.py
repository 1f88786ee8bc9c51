"""Conditional return distribution forecasts with an ordered logit.

The model reads the conditional CDF of next-day returns at a grid of
volatility-scaled cutoffs, restricting slopes to low-order polynomials in
the probability level. Around it sit the separate-logit benchmark, monotone
CDF interpolation, autocontour tests, scoring rules and a rolling
market-timing backtest.
"""
__version__ = "0.1.0"

from .backtest import (BacktestReport, RollingConfig, StrategySignal, backtest,
                       benchmark_buy_and_hold, rolling_forecast, run_strategy,
                       trading_signal)
from .data_io import ReturnSeries, SampleSplit, load_returns, read_report, write_report
from .evaluation import (EvalReport, GrsResult, ScoreReport, autocontour_proportion, bic,
                         brier_score, crps, evaluate_forecasts, grs_contour_test,
                         grs_lag_test, select_orders)
from .interp import build_interpolator, evaluate, generalized_residuals
from .ordered import (DistForecast, OrderedModelParams, PolynomialSpec, coefficient_function,
                      count_parameters, fit_ordered, init_kappas, ordered_loglik,
                      ordered_theta, predict_cdf)
from .partition import Partition, ProbabilityGrid, build_partition, normal_quantile
from .unordered import (SeparateLogitParams, build_predictors, fit_separate_logit,
                        fit_separate_model, logit_link, prepare_data)
from .volatility import ewma_variance
