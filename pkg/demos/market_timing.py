"""Switch between the stock and cash on the forecast CDF's tilt.

Run with ``python demos/market_timing.py``. Takes about ten seconds.
"""
from distforecast.backtest import RollingConfig, backtest
from distforecast.partition import DEFAULT_GRID
from distforecast.simulate import planted_params, simulate_returns

# a DGP where a low return predicts a weak next day
series, _ = simulate_returns(planted_params(DEFAULT_GRID), 1500, seed=700)
run, signals, strat, bench = backtest(series, RollingConfig(window=500, refit_stride=100))

for name, rep in (("timing", strat), ("buy and hold", bench)):
    sharpe = "n/a" if rep.sharpe is None else f"{rep.sharpe:.2f}"
    print(f"{name:>12}: final equity {rep.final_equity:.3f}, vol {rep.ann_volatility:.3f}, "
          f"Sharpe {sharpe}, max drawdown {rep.max_drawdown:.1%}")
print(f"in the stock on {strat.fraction_in_stock:.0%} of {strat.n_days} days")
