"""Fit the ordered logit on simulated returns and read off one forecast.

Run with ``python demos/fit_and_forecast.py``.
"""
import numpy as np

from distforecast.interp import forecast_interpolator
from distforecast.ordered import fit_ordered, predict_cdf
from distforecast.partition import DEFAULT_GRID, build_partition
from distforecast.simulate import default_params, simulate_returns
from distforecast.unordered import fit_separate_model, predictor_row, prepare_data
from distforecast.volatility import ewma_forecast

truth = default_params(DEFAULT_GRID)
series, cut = simulate_returns(truth, 3000, seed=1)
data = prepare_data(series, cut)

ordered = fit_ordered(data, DEFAULT_GRID)
separate = fit_separate_model(data, DEFAULT_GRID)
print(f"ordered:  {ordered.n_params} parameters, loglik {ordered.diagnostics['loglik']:.1f}")
# the separate fit's loglik sums binary likelihoods, so it is not comparable
print(f"separate: {separate.n_params} parameters")
for l, (k_hat, k_true) in enumerate(zip(ordered.kappas, truth.kappas)):
    print(f"kappa[{l}] fitted {np.round(k_hat, 2)} true {np.round(k_true, 2)}")

# tomorrow's distribution given today's return
r = series.values
part = build_partition(DEFAULT_GRID, ewma_forecast(r[-500:]))
fc = predict_cdf(ordered, predictor_row(r[-1], part.cutoffs), part,
                 window_min=r[-500:].min(), window_max=r[-500:].max())
F = forecast_interpolator(fc)
print(f"last return {r[-1]:+.4f}")
for q in (0.05, 0.25, 0.5, 0.75, 0.95):
    print(f"  forecast quantile {q:.2f}: {F.inverse(q):+.4f}")
