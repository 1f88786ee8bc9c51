"""Rolling out-of-sample forecasts and their calibration tests.

Run with ``python demos/calibration.py``. Takes about half a minute.
"""
import numpy as np
from scipy import stats

from distforecast.backtest import RollingConfig, rolling_forecast
from distforecast.evaluation import evaluate_forecasts, rescale_forecasts
from distforecast.partition import DEFAULT_GRID
from distforecast.simulate import default_params, simulate_returns

series, _ = simulate_returns(default_params(DEFAULT_GRID), 1500, seed=7, scale="ewma")
cfg = RollingConfig(window=500, refit_stride=100, vol_at="daily")
run = rolling_forecast(series, cfg)
oos = series.slice(cfg.window, len(series))

for label, fcs in (("as fitted", run.forecasts),
                   ("variance halved", rescale_forecasts(run.forecasts, 0.5))):
    rep, e = evaluate_forecasts(fcs, oos)
    counts, _ = np.histogram(e, bins=10, range=(0, 1))
    print(f"{label}: KS p {stats.kstest(e, 'uniform').pvalue:.3f}, "
          f"residual deciles {counts.tolist()}")
    print(f"  contour p {rep.grs_contour_p:.3f}  full-grid p {rep.grs_contour_full_p:.3f}  "
          f"lag-3 p {rep.grs_lag3_p:.3f}  lag-10 p {rep.grs_lag10_p:.3f}")
    print(f"  mean Brier {rep.mean_brier:.4f}  mean CRPS {rep.mean_crps:.6f}")
