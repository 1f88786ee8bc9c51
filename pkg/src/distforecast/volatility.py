"""EWMA (RiskMetrics) conditional variance."""
from __future__ import annotations

import numpy as np

from .errors import DegenerateSeries

VARIANCE_FLOOR = 1e-12
RISKMETRICS_DECAY = 0.94


def _as_values(returns):
    return np.asarray(getattr(returns, "values", returns), dtype=float)


def _initial_variance(r, init):
    if init == "sample_var":
        v = float(np.var(r))
        if v <= 0.0:
            raise DegenerateSeries("sample variance is zero; use init='first_sq'")
        return v
    if init == "first_sq":
        return float(r[0] ** 2)
    raise ValueError(f"unknown init policy {init!r}")


def ewma_variance(returns, lam=RISKMETRICS_DECAY, init="sample_var", sigma2_init=None):
    """EWMA variance path aligned with ``returns``.

    ``sigma2[0]`` comes from the init policy (or ``sigma2_init`` when given)
    and ``sigma2[t] = lam * sigma2[t-1] + (1 - lam) * r[t-1]**2`` afterwards.
    Each value is therefore known at the close of day ``t-1``. Values are
    floored at 1e-12.

    Parameters
    ----------
    returns : ReturnSeries or array_like
    lam : float
        Decay factor in (0, 1).
    init : {"sample_var", "first_sq"}
        ``sample_var`` uses the variance of the supplied returns (the current
        window), ``first_sq`` the first squared return.
    """
    r = _as_values(returns)
    if len(r) < 2:
        raise ValueError("need at least 2 returns")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"decay must lie in (0, 1), got {lam}")
    s0 = float(sigma2_init) if sigma2_init is not None else _initial_variance(r, init)
    out = np.empty(len(r))
    out[0] = s0
    w = 1.0 - lam
    sq = r * r
    for t in range(1, len(r)):
        out[t] = lam * out[t - 1] + w * sq[t - 1]
    return np.maximum(out, VARIANCE_FLOOR)


def ewma_forecast(returns, lam=RISKMETRICS_DECAY, init="sample_var"):
    """One-step-ahead EWMA variance for the day after the last return."""
    r = _as_values(returns)
    path = ewma_variance(r, lam, init)
    return max(lam * path[-1] + (1.0 - lam) * r[-1] ** 2, VARIANCE_FLOOR)
