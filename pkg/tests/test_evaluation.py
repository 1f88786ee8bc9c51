import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from distforecast.errors import ConfigError, InsufficientData, RangeError, SingularCovariance
from distforecast.evaluation import (EvalReport, analytic_covariance, autocontour_proportion,
                                     bic, brier_score, crps, evaluate_forecasts,
                                     grs_contour_test, grs_lag_test, null_covariance,
                                     rescale_forecasts, select_orders)
from distforecast.interp import build_interpolator, forecast_interpolator
from distforecast.ordered import DistForecast, predict_cdf
from distforecast.partition import DEFAULT_GRID, ProbabilityGrid, build_partition
from distforecast.simulate import default_params, simulate_returns
from distforecast.unordered import predictor_row, prepare_data

from oracles import box_share


# -- autocontour shares ----------------------------------------------------

def test_share_extremes():
    assert autocontour_proportion(np.zeros(50), 0.25, 1) == 1.0
    assert autocontour_proportion(np.ones(50), 0.99, 3) == 0.0


def test_share_of_a_million_uniforms():
    e = np.random.default_rng(1).random(1_000_000)
    assert autocontour_proportion(e, 0.25, 1) == pytest.approx(0.25, abs=0.002)


@given(st.lists(st.floats(0, 1), min_size=5, max_size=60), st.floats(0.01, 1.0),
       st.integers(1, 4))
def test_share_matches_loop(e, side, lag):
    if len(e) <= lag:
        return
    assert autocontour_proportion(e, side, lag) == pytest.approx(box_share(e, side, lag),
                                                                 abs=1e-15)


def test_share_needs_more_than_lag():
    with pytest.raises(InsufficientData):
        autocontour_proportion([0.1, 0.2], 0.5, 2)


# -- null covariance -------------------------------------------------------

def test_analytic_matches_monte_carlo():
    cells = ((0.25, 1), (0.5, 1), (0.75, 1), (0.5, 2), (0.5, 3))
    mc = null_covariance(2000, cells, "monte_carlo", n_sims=2000, seed=0)
    an = analytic_covariance(2000, cells)
    np.testing.assert_allclose(np.diag(mc), np.diag(an), rtol=0.1)
    np.testing.assert_allclose(mc, an, atol=0.1 * np.max(np.diag(an)))


def test_monte_carlo_covariance_is_seeded_and_cached():
    cells = ((0.5, 1),)
    a = null_covariance(300, cells, n_sims=200, seed=4)
    b = null_covariance(300, cells, n_sims=200, seed=4)
    c = null_covariance(300, cells, n_sims=200, seed=5)
    assert a is b
    assert not np.array_equal(a, c)


# -- GRS tests -------------------------------------------------------------

def test_degenerate_residuals_reject():
    res = grs_contour_test(np.full(500, 0.3))
    assert res.statistic > 100.0 and res.p_value < 1e-10
    assert res.dof == 3 and res.variant == "contour_agg"


def test_side_one_is_singular():
    with pytest.raises(SingularCovariance):
        grs_contour_test(np.random.default_rng(0).random(200), [1.0])


def test_bad_sides():
    with pytest.raises(ConfigError):
        grs_contour_test(np.random.default_rng(0).random(200), [0.5, 0.25])


def test_statistic_deterministic():
    e = np.random.default_rng(3).random(800)
    a = grs_contour_test(e, DEFAULT_GRID.alphas)
    b = grs_contour_test(e.copy(), DEFAULT_GRID.alphas)
    assert a.statistic == b.statistic and a.p_value == b.p_value


def test_lag_one_equals_single_cell_contour():
    e = np.random.default_rng(5).random(700)
    a = grs_lag_test(e, 0.5, 1)
    b = grs_contour_test(e, [0.5], 1)
    assert a.statistic == pytest.approx(b.statistic, abs=1e-10)
    assert a.dof == b.dof == 1


def test_persistent_residuals_are_detected():
    rng = np.random.default_rng(11)
    rejected = 0
    for _ in range(100):
        z = np.empty(500)
        z[0] = rng.normal()
        for t in range(1, 500):
            z[t] = 0.9 * z[t - 1] + math.sqrt(1 - 0.81) * rng.normal()
        e = stats.norm.cdf(z)
        rejected += grs_lag_test(e, 0.5, 3).p_value < 0.05
    assert rejected >= 90


def test_null_pvalues_uniform():
    rng = np.random.default_rng(21)
    p = {k: [] for k in ("c3", "lag3")}
    for _ in range(1000):
        e = rng.random(500)
        p["c3"].append(grs_contour_test(e).p_value)
        p["lag3"].append(grs_lag_test(e, 0.5, 3).p_value)
    for v in p.values():
        assert stats.kstest(v, "uniform").pvalue > 0.01


def test_analytic_variant_runs():
    e = np.random.default_rng(2).random(1000)
    r = grs_contour_test(e, method="analytic")
    assert 0.0 <= r.p_value <= 1.0
    with pytest.raises(ConfigError):
        grs_contour_test(e, method="bootstrap")


# -- scores ----------------------------------------------------------------

def _forecast_from_bins(probs, cutoffs):
    grid = ProbabilityGrid(np.cumsum(probs)[:-1])
    part = build_partition(grid, 1.0)
    part = type(part)(grid, np.asarray(cutoffs, dtype=float), 1.0)
    return DistForecast(None, part, np.cumsum(probs)[:-1])


def test_brier_examples():
    fc = _forecast_from_bins([0.25] * 4, [-1.0, 0.0, 1.0])
    assert brier_score(fc, 0.5) == pytest.approx(-0.75, abs=1e-15)
    sharp = _forecast_from_bins([1e-9, 1 - 3e-9, 1e-9, 1e-9], [-1.0, 0.0, 1.0])
    assert brier_score(sharp, -0.5) == pytest.approx(0.0, abs=1e-8)


@given(st.lists(st.floats(0.001, 1.0), min_size=2, max_size=40), st.floats(-3, 3))
def test_brier_bounds(w, r):
    probs = np.asarray(w) / np.sum(w)
    if np.any(np.cumsum(probs)[:-1] >= 1) or np.any(np.diff(np.cumsum(probs)[:-1]) <= 0):
        return
    fc = _forecast_from_bins(probs, np.linspace(-2, 2, len(probs) - 1))
    b = brier_score(fc, r)
    assert -2.0 <= b <= 0.0


def test_crps_uniform_closed_form():
    f = build_interpolator([0.0, 1.0], [0.0, 1.0])
    assert crps(f, 0.0) == pytest.approx(-1.0 / 3.0, abs=1e-3)


def test_crps_point_mass():
    eps = 1e-7
    f = build_interpolator([-1.0, 0.3 - eps, 0.3 + eps, 1.0], [0.0, 1e-9, 1 - 1e-9, 1.0])
    assert abs(crps(f, 0.3)) <= 1e-3 * 2.0


def test_crps_range_errors():
    f = build_interpolator([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(RangeError):
        crps(f, 0.5, range_=(1.0, 0.0))
    with pytest.raises(RangeError):
        crps(f, 0.5, range_=(0.0, float("nan")))


def test_crps_outside_range_clamps_indicator():
    f = build_interpolator([0.0, 1.0], [0.0, 1.0])
    # realized below the range: the indicator is 1 throughout
    assert crps(f, -5.0) == pytest.approx(crps(f, 0.0), abs=1e-12)
    assert crps(f, 5.0) == pytest.approx(crps(f, 1.0), abs=1e-12)


def test_true_forecast_scores_better_than_corrupted():
    grid = DEFAULT_GRID
    params = default_params(grid)
    series, cut = simulate_returns(params, 300, seed=4)
    r = series.values
    true_b, true_c, bad_b, bad_c = [], [], [], []
    for t in range(100, 300):
        part = build_partition(grid, 0.02 ** 2)
        fc = predict_cdf(params, predictor_row(r[t - 1], part.cutoffs), part,
                         window_min=-0.04, window_max=0.04)
        wide = rescale_forecasts([fc], 4.0)[0]
        true_b.append(brier_score(fc, r[t]))
        true_c.append(crps(forecast_interpolator(fc), r[t]))
        bad_c.append(crps(forecast_interpolator(wide), r[t]))
        shifted = DistForecast(None, part, np.clip(fc.cdf_values + 0.2, 0, 1 - 1e-3)
                               + 1e-5 * np.arange(37), 0, -0.04, 0.04)
        bad_b.append(brier_score(shifted, r[t]))
    assert max(true_b + bad_b + true_c + bad_c) <= 0.0
    assert np.mean(true_b) > np.mean(bad_b)
    assert np.mean(true_c) > np.mean(bad_c)


# -- BIC -------------------------------------------------------------------

def test_bic_formula():
    # 44 ln 500 = 273.4428; the two-decimal figure 273.43 is a truncation
    assert bic(0.0, 44, 500) == pytest.approx(44 * math.log(500), abs=1e-12)
    assert bic(0.0, 44, 500) == pytest.approx(273.43, abs=0.02)
    assert bic(-100.0, 45, 500) - bic(-100.0, 44, 500) == pytest.approx(math.log(500))
    with pytest.raises(ConfigError):
        bic(0.0, 45, 44)


@given(st.floats(-1e5, 0), st.integers(1, 100), st.integers(101, 10_000))
def test_bic_monotone_in_parameters(ll, k, n):
    assert bic(ll, k + 1, n) > bic(ll, k, n)


@pytest.mark.filterwarnings("ignore::distforecast.ordered.EmptyBinWarning")
def test_select_orders_table():
    grid = ProbabilityGrid.parse("0.25,0.5,0.75")
    series, cut = simulate_returns(default_params(grid, type(default_params(grid).spec)((2, 2))),
                                   1200, seed=9)
    rep = select_orders(prepare_data(series, cut), grid, max_order=4)
    # orders above p - 1 = 2 are skipped
    assert len(rep.q1) == 9 and max(rep.q1) == 2
    k = np.asarray(rep.q1) + np.asarray(rep.q2) + 3 + 2
    np.testing.assert_array_equal(rep.n_params, k)
    np.testing.assert_allclose(rep.bic, -2 * np.asarray(rep.loglik) + k * np.log(rep.n_obs))
    i = int(np.argmin(rep.bic))
    assert (rep.best_q1, rep.best_q2) == (rep.q1[i], rep.q2[i])


def test_eval_report_schema():
    names = [f.name for f in dataclasses.fields(EvalReport)]
    assert len([n for n in names if n.endswith("_p")]) == 4
    assert len([n for n in names if n.startswith("mean_")]) == 2
    assert len(names) == 10


def test_evaluate_forecasts_battery():
    grid = DEFAULT_GRID
    params = default_params(grid)
    series, _ = simulate_returns(params, 400, seed=2)
    r = series.values
    part = build_partition(grid, 0.02 ** 2)
    fcs = [predict_cdf(params, predictor_row(r[t - 1], part.cutoffs), part,
                       series.dates[t], window_min=-0.04, window_max=0.04)
           for t in range(1, 400)]
    rep, e = evaluate_forecasts(fcs, series.slice(1, 400), n_sims=200)
    assert len(e) == 399 and np.all((e >= 0) & (e <= 1))
    for k in ("grs_contour_p", "grs_contour_full_p", "grs_lag3_p", "grs_lag10_p"):
        assert 0.0 <= getattr(rep, k) <= 1.0
    assert rep.mean_brier <= 0 and rep.mean_crps <= 0
