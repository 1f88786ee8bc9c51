"""Rolling-window forecasting and the probability-sum market-timing strategy."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data_io import Report, ReturnSeries, seq_field
from .errors import AlignmentError, ConfigError, EmptyRange, InsufficientData
from .ordered import DEFAULT_SPEC, FLOOR, fit_ordered, forecast_from_probabilities
from .partition import DEFAULT_GRID, build_partition, cutoff_matrix
from .unordered import fit_separate_model, logit_link, predictor_row, prepare_data
from .volatility import RISKMETRICS_DECAY, ewma_forecast, ewma_variance

log = logging.getLogger(__name__)

TRADING_DAYS = 252
MODELS = ("ordered", "separate")
VOL_AT = ("window_end", "daily")
DIRECTIONS = ("below", "above")


@dataclass(frozen=True)
class RollingConfig:
    """Settings of the rolling estimation scheme.

    ``vol_at="window_end"`` scales the whole window's partition by the EWMA
    variance forecast for the day after the window; ``"daily"`` uses each
    day's own EWMA variance inside the window.
    """

    window: int = 500
    refit_stride: int = 1
    model: str = "ordered"
    grid: object = DEFAULT_GRID
    spec: object = DEFAULT_SPEC
    vol_at: str = "window_end"
    decay: float = RISKMETRICS_DECAY
    ewma_init: str = "sample_var"
    floor: float = FLOOR

    def __post_init__(self):
        if self.window < 100:
            raise ConfigError(f"window must be at least 100, got {self.window}")
        if not 1 <= self.refit_stride <= self.window:
            raise ConfigError("refit_stride must lie in 1..window")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.vol_at not in VOL_AT:
            raise ConfigError(f"vol_at must be one of {VOL_AT}")
        if self.model == "ordered":
            self.spec.check(self.grid.p)


@dataclass(eq=False)
class RollingRun:
    forecasts: list
    fits: list = field(default_factory=list)
    refit_index: np.ndarray = None

    @property
    def dates(self):
        return np.array([f.date for f in self.forecasts], dtype="datetime64[D]")


def window_cutoffs(window_returns, grid, vol_at="window_end", decay=RISKMETRICS_DECAY,
                   init="sample_var"):
    """(n, p) in-sample cutoffs for one estimation window."""
    r = np.asarray(getattr(window_returns, "values", window_returns), dtype=float)
    if vol_at == "window_end":
        c = build_partition(grid, ewma_forecast(r, decay, init)).cutoffs
        return np.broadcast_to(c, (len(r), grid.p))
    if vol_at == "daily":
        return cutoff_matrix(grid, ewma_variance(r, decay, init))
    raise ConfigError(f"vol_at must be one of {VOL_AT}")


def _fit_window(r, config):
    cut = window_cutoffs(r, config.grid, config.vol_at, config.decay, config.ewma_init)
    data = prepare_data(r, cut)
    if config.model == "ordered":
        return fit_ordered(data, config.grid, config.spec, config.floor)
    return fit_separate_model(data, config.grid)


def _raw_cdf(fit, x):
    if hasattr(fit, "probabilities"):
        return fit.probabilities(x)
    return logit_link(fit.theta(x))


def rolling_forecast(returns, config=RollingConfig()):
    """One-step-ahead forecasts for every date after the first window.

    The model is refit every ``refit_stride`` days on the trailing
    ``window`` returns. The forecast for date ``t`` uses returns up to
    ``t-1`` only: the partition comes from the EWMA variance of the window
    ending at ``t-1`` and the predictors from ``r_{t-1}``.

    Returns
    -------
    RollingRun
        ``forecasts[i]`` targets ``returns.dates[window + i]``; ``fits`` holds
        one ``(start index, fitted model)`` pair per refit.
    """
    if not isinstance(returns, ReturnSeries):
        raise ConfigError("rolling_forecast needs a ReturnSeries")
    R, T = config.window, len(returns)
    if T <= R:
        raise InsufficientData(f"{T} returns leave no out-of-sample date for window {R}")
    r = returns.values
    forecasts, fits, idx = [], [], []
    fit = None
    wmin = wmax = math.nan
    for t in range(R, T):
        if (t - R) % config.refit_stride == 0:
            w = r[t - R:t]
            try:
                fit = _fit_window(w, config)
            except Exception as exc:
                exc.window_index = len(fits)
                exc.window_end = str(returns.dates[t - 1])
                log.error("fit failed on window %d ending %s", len(fits), exc.window_end)
                raise
            fits.append((t - R, fit))
            wmin, wmax = float(w.min()), float(w.max())
        part = build_partition(config.grid,
                               ewma_forecast(r[t - R:t], config.decay, config.ewma_init))
        x = predictor_row(r[t - 1], part.cutoffs)
        fc = forecast_from_probabilities(_raw_cdf(fit, x), part, returns.dates[t],
                                         config.floor, wmin, wmax)
        forecasts.append(fc)
        idx.append(len(fits) - 1)
    return RollingRun(forecasts, fits, np.array(idx))


# -- strategy --------------------------------------------------------------

@dataclass(frozen=True)
class StrategySignal:
    date: object
    score: float
    position: str

    @property
    def in_stock(self):
        return self.position == "stock"


def signal_score(forecast, a=None, b=None):
    """``S_t``: sum of ``F_j - alpha_j`` over the cutoffs inside ``[a, b]``."""
    c = forecast.cutoffs
    lo = c[0] if a is None else a
    hi = c[-1] if b is None else b
    sel = (c >= lo) & (c <= hi)
    if not sel.any():
        raise EmptyRange(f"no cutoff in [{lo}, {hi}]")
    return float(np.sum(forecast.cdf_values[sel] - forecast.alphas[sel]))


def trading_signal(forecast, a=None, b=None, threshold=0.0, direction="below"):
    """Position for one date from the forecast CDF.

    With ``direction="below"`` the stock is held when ``S_t <= threshold``:
    a forecast CDF under the unconditional levels moves mass toward higher
    returns. ``"above"`` holds the stock when ``S_t >= threshold``.
    """
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}")
    s = signal_score(forecast, a, b)
    stock = s <= threshold if direction == "below" else s >= threshold
    return StrategySignal(forecast.date, s, "stock" if stock else "risk_free")


@dataclass(eq=False)
class BacktestReport(Report):
    """Strategy performance; ``equity`` starts at 1 on ``dates[0]``, the day
    before the first traded date."""

    cumulative_return: float = None
    final_equity: float = None
    ann_return: float = None
    ann_volatility: float = None
    sharpe: float = None
    max_drawdown: float = None
    n_days: int = None
    fraction_in_stock: float = None
    dates: tuple = seq_field("dates")
    equity: tuple = seq_field()
    drawdown: tuple = seq_field()
    strategy_returns: tuple = seq_field()


def _positions(signals):
    return np.array([s.in_stock if isinstance(s, StrategySignal) else bool(s)
                     for s in signals])


def run_strategy(signals, returns, risk_free_rate=0.0, periods=TRADING_DAYS):
    """Compound the stock/risk-free switching strategy.

    Parameters
    ----------
    signals : sequence of StrategySignal (or booleans, True = stock)
    returns : ReturnSeries
        Realized returns on the signal dates.
    risk_free_rate : float
        Annual rate, converted to ``(1 + rf)**(1/periods) - 1`` per day.
    """
    dates = returns.dates
    r = returns.values
    if len(signals) != len(r):
        raise AlignmentError(f"{len(signals)} signals vs {len(r)} returns")
    for s, d in zip(signals, dates):
        if isinstance(s, StrategySignal) and s.date is not None \
                and np.datetime64(s.date, "D") != d:
            raise AlignmentError(f"signal date {s.date} vs return date {d}")
    stock = _positions(signals)
    rf = (1.0 + risk_free_rate) ** (1.0 / periods) - 1.0
    daily = np.where(stock, r, rf)
    equity = np.concatenate([[1.0], np.cumprod(1.0 + daily)])
    peak = np.maximum.accumulate(equity)
    dd = 1.0 - equity / peak
    n = len(daily)
    vol = float(np.std(daily, ddof=1) * math.sqrt(periods)) if n > 1 else 0.0
    excess = float(np.mean(daily - rf)) * periods
    sharpe = excess / vol if vol > 0 else None
    start = np.busday_offset(dates[0], -1, roll="backward")
    return BacktestReport(
        cumulative_return=float(equity[-1] - 1.0),
        final_equity=float(equity[-1]),
        ann_return=float(np.mean(daily)) * periods,
        ann_volatility=vol,
        sharpe=sharpe,
        max_drawdown=float(dd.max()),
        n_days=n,
        fraction_in_stock=float(stock.mean()),
        dates=np.concatenate([[start], dates]),
        equity=equity,
        drawdown=dd,
        strategy_returns=daily,
    )


def benchmark_buy_and_hold(returns, risk_free_rate=0.0, periods=TRADING_DAYS):
    """The always-invested benchmark, computed by the strategy engine itself."""
    return run_strategy([True] * len(returns), returns, risk_free_rate, periods)


def tune_threshold(scores, returns, candidates=None, direction="below"):
    """Threshold maximizing final in-sample equity over ``candidates``.

    Off the default path; the default threshold is 0.
    """
    s = np.asarray(scores, dtype=float)
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    if candidates is None:
        candidates = np.quantile(s, np.linspace(0.05, 0.95, 19))
    best, best_eq = 0.0, -np.inf
    for c in np.asarray(candidates, dtype=float):
        stock = s <= c if direction == "below" else s >= c
        eq = float(np.prod(1.0 + np.where(stock, r, 0.0)))
        if eq > best_eq:
            best, best_eq = float(c), eq
    return best


def backtest(returns, config=RollingConfig(), threshold=0.0, direction="below",
             risk_free_rate=0.0, a=None, b=None):
    """Rolling forecasts, signals, strategy and benchmark in one call.

    Returns ``(run, signals, strategy_report, benchmark_report)``.
    """
    run = rolling_forecast(returns, config)
    signals = [trading_signal(f, a, b, threshold, direction) for f in run.forecasts]
    oos = returns.slice(config.window, len(returns))
    return (run, signals, run_strategy(signals, oos, risk_free_rate),
            benchmark_buy_and_hold(oos, risk_free_rate))
