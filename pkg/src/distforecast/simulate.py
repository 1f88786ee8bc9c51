"""Synthetic returns drawn from an ordered-logit data generating process.

Each day the model's CDF at the cutoffs ``gamma(alpha_j) * sigma_t`` is
completed into a continuous CDF by monotone interpolation through outer
knots at ``-/+ tail * sigma_t``; the return is an inverse-CDF draw from it.
"""
from __future__ import annotations

import numpy as np

from .data_io import ReturnSeries
from .interp import build_interpolator
from .ordered import (DEFAULT_SPEC, OrderedModelParams, PolynomialSpec,
                      coefficient_function, repair_cdf)
from .partition import grid_quantiles
from .unordered import logit, logit_link, predictor_row

DEFAULT_SIGMA = 0.02
DEFAULT_TAIL = 4.0

_KAPPA_INDICATOR = (0.2, -0.1, 1.2)
_KAPPA_VOLPROXY = (-2.0, -15.0, 5.0, 60.0)


def _pad(values, order):
    out = np.zeros(order + 1)
    n = min(len(values), order + 1)
    out[:n] = values[:n]
    return out


def default_params(grid, spec=DEFAULT_SPEC, sigma=DEFAULT_SIGMA):
    """Benchmark DGP: mild momentum in the indicator, volatility clustering in the proxy.

    Intercepts are centred so that the CDF at each cutoff averages roughly
    ``alpha_j``: the indicator is on with probability about ``alpha_j`` and
    the proxy averages about ``sigma * sqrt(2 / pi)``.
    """
    k1 = _pad(_KAPPA_INDICATOR, spec.orders[0])
    k2 = _pad(_KAPPA_VOLPROXY, spec.orders[1])
    a = grid.alphas
    d1 = np.array([coefficient_function(k1, x) for x in a])
    d2 = np.array([coefficient_function(k2, x) for x in a])
    proxy = sigma * np.sqrt(2.0 / np.pi)
    return OrderedModelParams(grid, logit(a) - a * d1 - proxy * d2, (k1, k2), spec)


def planted_params(grid, strength=0.8, drift=0.4):
    """DGP with strong, tradeable direction predictability.

    After a low return the lagged indicators switch on and lift the whole
    CDF (bearish); otherwise the CDF sits below the unconditional levels
    (bullish) by ``drift`` on the logit scale.
    """
    return OrderedModelParams(grid, logit(grid.alphas) - drift,
                              (np.array([strength, 0.0, 0.0]), np.zeros(4)), DEFAULT_SPEC)


def business_dates(n, start="2000-01-03"):
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def simulate_returns(params, n, sigma=DEFAULT_SIGMA, tail=DEFAULT_TAIL, seed=None,
                     burn=100, start="2000-01-03", scale="fixed", decay=0.94):
    """Draw ``n`` returns from the ordered model ``params``.

    Parameters
    ----------
    scale : {"fixed", "ewma"}
        ``"fixed"`` uses the cutoffs ``gamma(alpha_j) * sigma`` every day.
        ``"ewma"`` rescales the cutoffs and tail knots each day by the EWMA
        variance forecast built from the simulated path itself (started at
        ``sigma**2``), which is the scaling the rolling forecaster applies;
        a model fitted that way is then correctly specified.

    Returns
    -------
    series : ReturnSeries
    cutoffs : ndarray
        The cutoffs the returns were generated against, shape (p,) for
        ``"fixed"`` and (n, p) for ``"ewma"``.
    """
    if params.k != 2:
        raise ValueError("the sampler uses the two default predictors")
    if scale not in ("fixed", "ewma"):
        raise ValueError("scale must be 'fixed' or 'ewma'")
    gam = grid_quantiles(params.grid)
    if tail <= gam[-1] or -tail >= gam[0]:
        raise ValueError("tail knots must lie outside the cutoffs")
    rng = np.random.default_rng(seed)
    slopes = params.slope_matrix()
    d0 = params.intercepts
    u = rng.random(n + burn)
    out = np.empty(n + burn)
    cut = np.empty((n + burn, gam.size))
    s2 = sigma * sigma
    prev = 0.0
    for t in range(n + burn):
        s = np.sqrt(s2)
        c = cut[t] = gam * s
        x = predictor_row(prev, c)
        F, _ = repair_cdf(logit_link(d0 + np.sum(x * slopes, axis=1)), params.floor)
        interp = build_interpolator(np.concatenate([[-tail * s], c, [tail * s]]),
                                    np.concatenate([[0.0], F, [1.0]]))
        prev = interp.inverse(u[t])
        out[t] = prev
        if scale == "ewma":
            s2 = decay * s2 + (1.0 - decay) * prev * prev
    series = ReturnSeries(business_dates(n, start), out[burn:])
    return series, (cut[0].copy() if scale == "fixed" else cut[burn:])


def simulate_series(n, p=37, spec=DEFAULT_SPEC, seed=None, planted=False, **kw):
    """Convenience wrapper over :func:`simulate_returns` with a default DGP."""
    from .partition import ProbabilityGrid

    grid = ProbabilityGrid.equally_spaced(p)
    params = planted_params(grid) if planted else default_params(grid, PolynomialSpec(spec.orders))
    return simulate_returns(params, n, seed=seed, **kw)
