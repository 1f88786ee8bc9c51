"""GRS autocontour tests, Brier score, CRPS and BIC order selection.

Autocontour tests look at pairs ``(e_t, e_{t-l})`` of generalized residuals.
Under correct specification the residuals are iid uniform, so the share of
pairs inside the square ``[0, sqrt(a)]**2`` estimates its area ``a``. The
tests stack these shares over several sides (contour-aggregated) or several
lags (lag-aggregated) and form a quadratic form against their null
covariance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .data_io import Report, seq_field
from .errors import (AlignmentError, ConfigError, InsufficientData, RangeError,
                     SingularCovariance)
from .interp import forecast_interpolator, generalized_residuals

log = logging.getLogger(__name__)

GRS_SIMS = 2000
GRS_SEED = 0
CRPS_NODES = 300

THREE_SIDES = (0.25, 0.5, 0.75)


def _residual_array(residuals):
    e = np.asarray(getattr(residuals, "values", residuals), dtype=float).ravel()
    return e


def autocontour_proportion(residuals, side, lag):
    """Share of pairs ``(e_t, e_{t-lag})`` inside ``[0, sqrt(side)]**2``."""
    e = _residual_array(residuals)
    lag = int(lag)
    if lag < 1:
        raise ConfigError("lag must be at least 1")
    if len(e) <= lag:
        raise InsufficientData(f"{len(e)} residuals do not cover lag {lag}")
    s = math.sqrt(side)
    inside = e <= s
    return float(np.mean(inside[lag:] & inside[:-lag]))


def _proportions(E, cells):
    """Autocontour shares for every (side, lag) cell; ``E`` is (m, n)."""
    out = np.empty((E.shape[0], len(cells)))
    roots = {}
    for c, (side, lag) in enumerate(cells):
        inside = roots.get(side)
        if inside is None:
            inside = roots[side] = E <= math.sqrt(side)
        out[:, c] = np.mean(inside[:, lag:] & inside[:, :-lag], axis=1)
    return out


@lru_cache(maxsize=4)
def _null_uniforms(n, n_sims, seed):
    # replication i uses its own generator seeded with seed + i
    U = np.empty((n_sims, n))
    for i in range(n_sims):
        U[i] = np.random.default_rng(seed + i).random(n)
    U.setflags(write=False)
    return U


@lru_cache(maxsize=64)
def _mc_covariance(n, cells, n_sims, seed):
    P = _proportions(_null_uniforms(n, n_sims, seed), cells)
    C = np.atleast_2d(np.cov(P, rowvar=False))
    C.setflags(write=False)
    return C


def analytic_covariance(n, cells):
    """Large-sample covariance of autocontour shares under iid uniforms.

    Two pair indicators are correlated only when they share a residual. For
    sides ``a_i, a_j`` (roots ``s_i, s_j``) at a common lag this gives
    ``min(a_i, a_j) - a_i a_j + 2 (s_i s_j min(s_i, s_j) - a_i a_j)``; for a
    common side at two different lags it gives ``4 (a**1.5 - a**2)``, and
    ``4 (s_i s_j min(s_i, s_j) - a_i a_j)`` in general. Each
    entry is divided by the pair counts ``sqrt(N_i N_j)``, ``N = n - lag``.
    """
    m = len(cells)
    C = np.empty((m, m))
    for a, (ai, la) in enumerate(cells):
        for b, (aj, lb) in enumerate(cells):
            si, sj = math.sqrt(ai), math.sqrt(aj)
            # pairs sharing one residual: E = s_i s_j min(s_i, s_j)
            shared = si * sj * min(si, sj) - ai * aj
            if la == lb:
                v = (min(ai, aj) - ai * aj) + 2.0 * shared
            else:
                v = 4.0 * shared
            C[a, b] = v / math.sqrt((n - la) * (n - lb))
    return C


def null_covariance(n, cells, method="monte_carlo", n_sims=GRS_SIMS, seed=GRS_SEED):
    """Null covariance of the share vector for a residual series of length ``n``.

    Parameters
    ----------
    cells : sequence of (side, lag)
    method : {"monte_carlo", "analytic"}
        Monte Carlo simulates ``n_sims`` iid uniform series of length ``n``
        (with seeds ``seed + i``) and takes the sample covariance of their
        share vectors; results are cached.
    """
    cells = tuple((float(a), int(l)) for a, l in cells)
    if method == "monte_carlo":
        return _mc_covariance(int(n), cells, int(n_sims), int(seed))
    if method == "analytic":
        return analytic_covariance(int(n), cells)
    raise ConfigError(f"unknown covariance method {method!r}")


@dataclass(frozen=True)
class GrsResult:
    """Outcome of one autocontour test.

    ``sides`` holds the contour sides (a single side for the lag-aggregated
    variant) and ``lag`` the fixed lag, or the maximum lag ``L``.
    """

    statistic: float
    dof: int
    p_value: float
    variant: str
    sides: tuple
    lag: int
    proportions: tuple = ()


def _quadratic_test(e, cells, targets, variant, sides, lag, method, n_sims, seed):
    n = len(e)
    if n <= max(l for _, l in cells):
        raise InsufficientData(f"{n} residuals do not cover the largest lag")
    ahat = _proportions(e[None, :], cells)[0]
    C = np.asarray(null_covariance(n, cells, method, n_sims, seed))
    diag = np.diag(C)
    scale = np.max(diag) if diag.size else 0.0
    if not scale > 0 or np.any(diag <= 1e-12 * scale):
        raise SingularCovariance("a contour share has zero null variance")
    w = np.linalg.eigvalsh(C)
    if w[0] <= 1e-12 * w[-1]:
        raise SingularCovariance("null covariance is singular")
    d = ahat - np.asarray(targets)
    stat = float(d @ np.linalg.solve(C, d))
    stat = max(stat, 0.0)
    dof = len(cells)
    pval = float(stats.chi2.sf(stat, dof))
    return GrsResult(stat, dof, min(max(pval, 0.0), 1.0), variant, tuple(sides), int(lag),
                     tuple(float(x) for x in ahat))


def grs_contour_test(residuals, sides=THREE_SIDES, lag=1, method="monte_carlo",
                     n_sims=GRS_SIMS, seed=GRS_SEED):
    """Contour-aggregated test: several sides at one lag, chi-square with ``len(sides)`` dof.

    Raises
    ------
    SingularCovariance
        When a side equals 1 (its share is 1 with certainty).
    """
    s = np.asarray(sides, dtype=float).ravel()
    if s.size == 0 or np.any(s <= 0) or np.any(s > 1) or np.any(np.diff(s) <= 0):
        raise ConfigError("sides must be strictly increasing in (0, 1]")
    e = _residual_array(residuals)
    cells = tuple((float(a), int(lag)) for a in s)
    return _quadratic_test(e, cells, s, "contour_agg", s, lag, method, n_sims, seed)


def grs_lag_test(residuals, side=0.5, max_lag=3, method="monte_carlo",
                 n_sims=GRS_SIMS, seed=GRS_SEED):
    """Lag-aggregated test: one side at lags ``1..max_lag``, chi-square with ``max_lag`` dof."""
    if not 0 < side <= 1:
        raise ConfigError("side must lie in (0, 1]")
    if int(max_lag) < 1:
        raise ConfigError("max_lag must be at least 1")
    e = _residual_array(residuals)
    cells = tuple((float(side), l) for l in range(1, int(max_lag) + 1))
    return _quadratic_test(e, cells, np.full(len(cells), float(side)), "lag_agg",
                           (float(side),), max_lag, method, n_sims, seed)


# -- scoring rules ---------------------------------------------------------

def brier_score(forecast, realized):
    """Negative squared distance between bin indicators and bin probabilities."""
    probs = forecast.bin_probabilities()
    hit = np.zeros_like(probs)
    hit[int(np.sum(forecast.cutoffs < realized))] = 1.0
    return -float(np.sum((hit - probs) ** 2))


@lru_cache(maxsize=8)
def _chebyshev(n):
    i = np.arange(1, n + 1)
    x = np.cos((2 * i - 1) * np.pi / (2 * n))
    w = np.pi / n * np.sqrt(1.0 - x * x)
    return x, w


def _chebyshev_integral(f, a, b, nodes):
    if b <= a:
        return 0.0
    x, w = _chebyshev(nodes)
    r = 0.5 * (b - a) * x + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.sum(w * f(r)))


def crps(interp, realized, nodes=CRPS_NODES, range_=None):
    """Negative CRPS ``-int (F(r) - 1{realized <= r})**2 dr`` over ``range_``.

    Gauss-Chebyshev quadrature with the weight ``1/sqrt(1 - x**2)`` undone.
    The integrand jumps at the realized value, so the range is split there
    and each piece integrated with ``nodes`` nodes. A realized value outside
    the range makes the indicator constant over it.

    Parameters
    ----------
    interp : callable CDF, typically a MonotoneInterpolator
    range_ : (a, b), optional
        Defaults to the interpolator's outer knots.
    """
    if range_ is None:
        a, b = float(interp.x[0]), float(interp.x[-1])
    else:
        a, b = (float(v) for v in range_)
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise RangeError(f"invalid integration range ({a}, {b})")
    if nodes < 1:
        raise ConfigError("nodes must be positive")
    cut = min(max(float(realized), a), b)
    below = _chebyshev_integral(lambda r: np.asarray(interp(r)) ** 2, a, cut, nodes)
    above = _chebyshev_integral(lambda r: (np.asarray(interp(r)) - 1.0) ** 2, cut, b, nodes)
    return -(below + above)


def bic(loglik, n_params, n_obs):
    """Bayesian information criterion ``-2 loglik + K ln(n)``."""
    if n_obs < n_params:
        raise ConfigError(f"{n_obs} observations for {n_params} parameters")
    return -2.0 * float(loglik) + n_params * math.log(n_obs)


# -- reports ---------------------------------------------------------------

@dataclass(eq=False)
class ScoreReport(Report):
    mean_brier: float = None
    mean_crps: float = None
    brier: tuple = seq_field()
    crps: tuple = seq_field()


@dataclass(eq=False)
class EvalReport(Report):
    """The four autocontour variants plus the two average scores."""

    grs_contour_stat: float = None
    grs_contour_p: float = None
    grs_contour_full_stat: float = None
    grs_contour_full_p: float = None
    grs_lag3_stat: float = None
    grs_lag3_p: float = None
    grs_lag10_stat: float = None
    grs_lag10_p: float = None
    mean_brier: float = None
    mean_crps: float = None


def rescale_forecasts(forecasts, variance_factor):
    """Copies of ``forecasts`` whose return axis is stretched by ``sqrt(variance_factor)``.

    CDF values stay attached to their (moved) cutoffs, so the forecast
    variance is multiplied by ``variance_factor``. Used to check test power.
    """
    from .ordered import DistForecast
    from .partition import Partition

    s = math.sqrt(variance_factor)
    out = []
    for f in forecasts:
        part = Partition(f.partition.grid, f.cutoffs * s, f.partition.sigma2 * variance_factor)
        out.append(DistForecast(f.date, part, f.cdf_values, f.adjusted_count,
                                f.window_min * s, f.window_max * s))
    return out


def score_forecasts(forecasts, realized, nodes=CRPS_NODES):
    """Per-date Brier and CRPS values with their means."""
    r = np.asarray(getattr(realized, "values", realized), dtype=float)
    if len(r) != len(forecasts):
        raise AlignmentError(f"{len(forecasts)} forecasts vs {len(r)} returns")
    b = np.array([brier_score(fc, x) for fc, x in zip(forecasts, r)])
    c = np.array([crps(forecast_interpolator(fc), x, nodes) for fc, x in zip(forecasts, r)])
    return ScoreReport(float(np.mean(b)), float(np.mean(c)), b, c)


def evaluate_forecasts(forecasts, realized, full_sides=None, method="monte_carlo",
                       n_sims=GRS_SIMS, seed=GRS_SEED):
    """Run the standard battery: two contour-aggregated tests at lag 1
    (three sides and the full grid), lag-aggregated at side 0.5 with L=3
    and L=10, and both scores.

    ``full_sides`` defaults to the grid levels of the first forecast.
    Returns ``(EvalReport, residuals)``.
    """
    if not len(forecasts):
        raise InsufficientData("no forecasts to evaluate")
    if full_sides is None:
        full_sides = forecasts[0].alphas
    e = generalized_residuals(forecasts, realized)
    kw = dict(method=method, n_sims=n_sims, seed=seed)
    t3 = grs_contour_test(e, THREE_SIDES, 1, **kw)
    tf = grs_contour_test(e, full_sides, 1, **kw)
    l3 = grs_lag_test(e, 0.5, 3, **kw)
    l10 = grs_lag_test(e, 0.5, 10, **kw)
    sc = score_forecasts(forecasts, realized)
    rep = EvalReport(t3.statistic, t3.p_value, tf.statistic, tf.p_value,
                     l3.statistic, l3.p_value, l10.statistic, l10.p_value,
                     sc.mean_brier, sc.mean_crps)
    return rep, e


# -- order selection -------------------------------------------------------

@dataclass(eq=False)
class SelectionReport(Report):
    """BIC over a grid of polynomial orders; rows are parallel sequences."""

    best_q1: int = None
    best_q2: int = None
    n_obs: int = None
    q1: tuple = seq_field()
    q2: tuple = seq_field()
    n_params: tuple = seq_field()
    loglik: tuple = seq_field()
    bic: tuple = seq_field()


def select_orders(data, grid, max_order=4, **fit_kw):
    """Fit every ``(q1, q2)`` in ``{0..max_order}**2`` and rank by BIC.

    Orders above ``p - 1`` are skipped. Extra keywords go to
    :func:`~distforecast.ordered.fit_ordered`.
    """
    from .ordered import PolynomialSpec, count_parameters, fit_ordered

    fit_kw.setdefault("compute_stderr", False)
    rows = []
    top = min(int(max_order), grid.p - 1)
    for q1 in range(top + 1):
        for q2 in range(top + 1):
            spec = PolynomialSpec((q1, q2))
            fit = fit_ordered(data, grid, spec, **fit_kw)
            K = count_parameters(grid.p, data.k, spec)[0]
            ll = fit.diagnostics["loglik"]
            rows.append((q1, q2, K, ll, bic(ll, K, data.n)))
    best = min(rows, key=lambda r: r[4])
    cols = list(zip(*rows))
    return SelectionReport(best[0], best[1], data.n, *[np.array(c, dtype=float) for c in cols])
