"""Fritsch-Carlson monotone cubic interpolation of discrete CDFs."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, NonMonotoneInput


@dataclass(frozen=True, eq=False)
class MonotoneInterpolator:
    """Piecewise cubic Hermite interpolant with Fritsch-Carlson tangents."""

    x: np.ndarray
    y: np.ndarray
    m: np.ndarray

    def __call__(self, r):
        return evaluate(self, r)

    def inverse(self, u):
        """Point ``r`` with ``F(r) = u`` for ``u`` in ``[y_0, y_K]`` (scalar)."""
        return _inverse_scalar(self, float(u))


def build_interpolator(x, y):
    """Fit the Fritsch-Carlson interpolant through strictly increasing points.

    Secant slopes ``d_k`` seed the tangents (one-sided at the ends, the mean
    of neighbouring secants inside). Any segment with
    ``(m_k/d_k)**2 + (m_{k+1}/d_k)**2 > 9`` has both tangents scaled by
    ``3 / sqrt(...)``, which keeps every cubic piece monotone.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
        raise NonMonotoneInput("need at least two (x, y) points of equal count")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonMonotoneInput("points must be finite")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
        raise NonMonotoneInput("abscissas and ordinates must be strictly increasing")
    d = np.diff(y) / np.diff(x)
    if np.any(d <= 0):
        raise NonMonotoneInput("zero secant slope")
    m = np.empty(len(x))
    m[0] = d[0]
    m[-1] = d[-1]
    m[1:-1] = 0.5 * (d[:-1] + d[1:])
    for k in range(len(d)):
        a = m[k] / d[k]
        b = m[k + 1] / d[k]
        s = a * a + b * b
        if s > 9.0:
            tau = 3.0 / math.sqrt(s)
            m[k] = tau * a * d[k]
            m[k + 1] = tau * b * d[k]
    for arr in (x, y, m):
        arr.setflags(write=False)
    return MonotoneInterpolator(x, y, m)


def evaluate(interp, r):
    """Hermite evaluation; constant ``y_0`` left of the knots and ``y_K`` right."""
    x, y, m = interp.x, interp.y, interp.m
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    k = np.clip(np.searchsorted(x, r, side="right") - 1, 0, len(x) - 2)
    h = x[k + 1] - x[k]
    t = (r - x[k]) / h
    t2 = t * t
    t3 = t2 * t
    out = ((2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + t) * h * m[k]
           + (-2 * t3 + 3 * t2) * y[k + 1] + (t3 - t2) * h * m[k + 1])
    out = np.where(r <= x[0], y[0], np.where(r >= x[-1], y[-1], out))
    return float(out[0]) if scalar else out


def _inverse_scalar(interp, u):
    x, y, m = interp.x, interp.y, interp.m
    if u <= y[0]:
        return float(x[0])
    if u >= y[-1]:
        return float(x[-1])
    k = min(max(bisect.bisect_right(y.tolist(), u) - 1, 0), len(x) - 2)
    x0, h = float(x[k]), float(x[k + 1] - x[k])
    y0, y1 = float(y[k]), float(y[k + 1])
    m0, m1 = float(m[k]) * h, float(m[k + 1]) * h
    lo, hi = 0.0, 1.0
    t = (u - y0) / (y1 - y0)
    for _ in range(100):
        t2 = t * t
        t3 = t2 * t
        f = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0
             + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1) - u
        if f > 0:
            hi = t
        else:
            lo = t
        if hi - lo < 1e-15:
            break
        df = ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0
              + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * m1)
        tn = t - f / df if df > 0 else -1.0
        if not lo < tn < hi:
            tn = 0.5 * (lo + hi)
        if abs(tn - t) < 1e-15:
            t = tn
            break
        t = tn
    return x0 + t * h


def tail_knots(cutoffs, window_min, window_max):
    """Outer knots ``(2 r_min, 2 r_max)``, pushed outside the cutoffs if needed."""
    c = np.asarray(cutoffs, dtype=float)
    lo, hi = 2.0 * window_min, 2.0 * window_max
    span = c[-1] - c[0] if len(c) > 1 else max(abs(c[0]), 1e-8)
    if not lo < c[0]:
        lo = c[0] - span
    if not hi > c[-1]:
        hi = c[-1] + span
    return lo, hi


def forecast_interpolator(forecast, window_min=None, window_max=None):
    """CDF interpolant through ``(2 r_min, 0), (c_j, F_j), (2 r_max, 1)``."""
    wmin = forecast.window_min if window_min is None else window_min
    wmax = forecast.window_max if window_max is None else window_max
    if not (np.isfinite(wmin) and np.isfinite(wmax)):
        raise ValueError("forecast carries no window extremes; pass r_min/r_max")
    lo, hi = tail_knots(forecast.cutoffs, wmin, wmax)
    x = np.concatenate([[lo], forecast.cutoffs, [hi]])
    y = np.concatenate([[0.0], forecast.cdf_values, [1.0]])
    return build_interpolator(x, y)


def generalized_residuals(forecasts, realized, r_min=None, r_max=None):
    """Probability integral transforms of realized returns.

    Parameters
    ----------
    forecasts : sequence of DistForecast
    realized : ReturnSeries or array_like
        Aligned one-to-one with ``forecasts``; dates are checked when both
        sides carry them.
    r_min, r_max : float or array_like, optional
        Estimation-sample extremes; default to each forecast's window extremes.

    Returns
    -------
    ndarray of values in [0, 1]
    """
    values = np.asarray(getattr(realized, "values", realized), dtype=float)
    if len(values) != len(forecasts):
        raise AlignmentError(f"{len(forecasts)} forecasts vs {len(values)} returns")
    dates = getattr(realized, "dates", None)
    n = len(forecasts)
    lo = np.broadcast_to(np.nan if r_min is None else np.asarray(r_min, float), (n,))
    hi = np.broadcast_to(np.nan if r_max is None else np.asarray(r_max, float), (n,))
    out = np.empty(n)
    for i, fc in enumerate(forecasts):
        if dates is not None and fc.date is not None:
            if np.datetime64(fc.date, "D") != dates[i]:
                raise AlignmentError(f"forecast date {fc.date} vs return date {dates[i]}")
        interp = forecast_interpolator(fc, None if r_min is None else lo[i],
                                       None if r_max is None else hi[i])
        out[i] = evaluate(interp, values[i])
    return np.clip(out, 0.0, 1.0)
