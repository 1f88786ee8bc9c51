"""Logit link, lagged predictors and the separate (unordered) binary logits.

The separate model fits one binary logit per cutoff,
``Pr{r_t <= c_j} = Lambda(d0_j + x_{t-1,j}' d_j)``, with no restriction
across cutoffs. It is both a benchmark and the first estimation step of the
ordered model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence, PerfectSeparation

log = logging.getLogger(__name__)

SEPARATION_BOUND = 30.0
# |fitted index| beyond this puts probabilities within 3e-7 of 0 or 1
INDEX_BOUND = 15.0


def logit_link(u):
    """``exp(u) / (1 + exp(u))`` evaluated without overflow."""
    u = np.asarray(u, dtype=float)
    z = np.exp(-np.abs(u))
    out = np.where(u >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def log_logit_link(u):
    """``log(Lambda(u))`` computed stably."""
    u = np.asarray(u, dtype=float)
    return np.minimum(u, 0.0) - np.log1p(np.exp(-np.abs(u)))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


# -- predictors ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelData:
    """Targets and predictors for one estimation window.

    Row ``t`` pairs the target return ``returns[t]`` with predictors built
    from the previous return and the cutoffs in force on the target date.

    Attributes
    ----------
    returns : (n,) target returns
    cutoffs : (n, p) cutoffs per row
    X : (n, p, k) predictors; default k=2 (lagged indicator, log volatility proxy)
    bins : (n,) index of the bin holding the target, 0..p
    """

    returns: np.ndarray
    cutoffs: np.ndarray
    X: np.ndarray
    bins: np.ndarray = field(init=False)

    def __post_init__(self):
        n, p = self.cutoffs.shape
        if self.X.shape[:2] != (n, p) or self.returns.shape != (n,):
            raise ValueError("inconsistent ModelData shapes")
        bins = np.sum(self.cutoffs < self.returns[:, None], axis=1)
        object.__setattr__(self, "bins", bins)

    @property
    def n(self):
        return len(self.returns)

    @property
    def p(self):
        return self.cutoffs.shape[1]

    @property
    def k(self):
        return self.X.shape[2]

    @property
    def targets(self):
        """(n, p) indicators ``r_t <= c_{t,j}``."""
        return np.arange(self.p)[None, :] >= self.bins[:, None]

    def bin_counts(self):
        return np.bincount(self.bins, minlength=self.p + 1)


def _row_cutoffs(cutoffs, n):
    c = np.asarray(cutoffs, dtype=float)
    if c.ndim == 1:
        c = np.broadcast_to(c, (n, c.size))
    if c.shape[0] != n:
        raise ValueError(f"expected {n} rows of cutoffs, got {c.shape[0]}")
    return c


def predictor_row(prev_return, cutoffs):
    """(p, 2) predictors for one date given the previous return."""
    c = np.asarray(cutoffs, dtype=float)
    x = np.empty((c.size, 2))
    x[:, 0] = prev_return <= c
    x[:, 1] = np.log1p(abs(prev_return))
    return x


def build_predictors(returns, cutoffs):
    """Lagged indicator and volatility proxy for targets ``t = 1..T-1``.

    Parameters
    ----------
    returns : ReturnSeries or array_like, length T
    cutoffs : (p,) or (T, p)
        Cutoffs in force on each date of ``returns``. Row ``t`` of the
        result compares ``r_{t-1}`` with the cutoffs of date ``t``.

    Returns
    -------
    ndarray, shape (T-1, p, 2)
    """
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    if len(r) < 2:
        raise ValueError("need at least 2 returns")
    c = _row_cutoffs(cutoffs, len(r))[1:]
    lag = r[:-1]
    X = np.empty(c.shape + (2,))
    X[:, :, 0] = lag[:, None] <= c
    X[:, :, 1] = np.log1p(np.abs(lag))[:, None]
    return X


def prepare_data(returns, cutoffs):
    """:class:`ModelData` for a window of returns and its cutoffs."""
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    c = _row_cutoffs(cutoffs, len(r))
    return ModelData(r[1:].copy(), np.ascontiguousarray(c[1:]), build_predictors(r, c))


# -- single binary logit ---------------------------------------------------

@dataclass
class LogitFit:
    intercept: float
    slopes: np.ndarray
    stderr: np.ndarray
    loglik: float
    grad_norm: float
    iterations: int
    ridge: float = 0.0

    @property
    def coef(self):
        return np.concatenate([[self.intercept], self.slopes])


def _bernoulli_loglik(eta, y):
    return float(np.sum(np.where(y, log_logit_link(eta), log_logit_link(-eta))))


def fit_separate_logit(targets, predictors, ridge=0.0, tol=1e-9, max_iter=200):
    """Maximum likelihood binary logit with intercept.

    Maximizes ``sum y*log(L(eta)) + (1-y)*log(1-L(eta))`` by damped Newton
    steps. Predictor columns without variation get a zero slope (their
    effect is absorbed by the intercept). Standard errors come from the
    inverse of the observed information.

    Parameters
    ----------
    targets : (n,) 0/1 values
    predictors : (n,) or (n, k)
    ridge : float
        Optional penalty ``0.5 * ridge * n * var(x_i) * d_i**2`` on the
        slopes; used only as a fallback under separation.

    Raises
    ------
    PerfectSeparation
        Targets without variation, the intercept or a standardized slope
        ``|d_i| * sd(x_i)`` escaping past 30, or (unpenalized fits only) a
        fitted index beyond +/-15 at the optimum.
    NonConvergence
    """
    y = np.asarray(targets, dtype=float).ravel()
    Z = np.asarray(predictors, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, k = Z.shape
    if len(y) != n:
        raise ValueError("targets and predictors differ in length")
    ybar = y.mean()
    if ybar <= 0.0 or ybar >= 1.0:
        raise PerfectSeparation("targets are all 0 or all 1")

    sd = Z.std(axis=0)
    active = np.flatnonzero(sd > 1e-12)
    D = np.column_stack([np.ones(n), Z[:, active]])
    pen = np.concatenate([[0.0], ridge * n * sd[active] ** 2])
    # separation is judged on the standardized scale: |coef| * sd(x)
    scale = np.concatenate([[1.0], sd[active]])
    beta = np.zeros(D.shape[1])
    beta[0] = float(np.log(ybar) - np.log1p(-ybar))

    def objective(b):
        eta = D @ b
        return _bernoulli_loglik(eta, y) - 0.5 * float(np.sum(pen * b * b))

    f = objective(beta)
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        eta = D @ beta
        mu = logit_link(eta)
        g = D.T @ (y - mu) - pen * beta
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            break
        w = mu * (1.0 - mu)
        info = (D * w[:, None]).T @ D + np.diag(pen)
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, g, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            fc = objective(cand)
            if fc >= f - 1e-12 * abs(f):
                break
            t *= 0.5
        else:
            cand, fc = beta + 1e-3 * g / max(gnorm, 1.0), f
        beta, f = cand, fc
        if np.max(np.abs(beta) * scale) > SEPARATION_BOUND:
            raise PerfectSeparation(f"coefficient diverged past {SEPARATION_BOUND} "
                                    f"after {it} iterations")
    else:
        raise NonConvergence(max_iter, gnorm)

    eta = D @ beta
    if ridge == 0.0 and np.max(np.abs(eta)) > INDEX_BOUND:
        # quasi-complete separation: the likelihood flattens out before the
        # coefficients reach the bound, so look at the fitted index instead
        raise PerfectSeparation(f"fitted index reached {np.max(np.abs(eta)):.1f}; "
                                "quasi-complete separation")
    mu = logit_link(eta)
    info = (D * (mu * (1.0 - mu))[:, None]).T @ D + np.diag(pen)
    try:
        cov = np.linalg.inv(info)
        se_active = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se_active = np.full(D.shape[1], np.nan)
    slopes = np.zeros(k)
    slopes[active] = beta[1:]
    se = np.full(1 + k, np.nan)
    se[0] = se_active[0]
    se[1 + active] = se_active[1:]
    return LogitFit(float(beta[0]), slopes, se, _bernoulli_loglik(eta, y),
                    gnorm, it, ridge)


# -- the full separate model -----------------------------------------------

@dataclass(eq=False)
class SeparateLogitParams:
    """One intercept and ``k`` slopes per cutoff; ``(1 + k) * p`` parameters."""

    grid: object
    intercepts: np.ndarray
    slopes: np.ndarray
    stderr: np.ndarray = None
    loglik: float = float("nan")
    ridge_thresholds: tuple = ()

    @property
    def p(self):
        return len(self.intercepts)

    @property
    def k(self):
        return self.slopes.shape[1]

    @property
    def n_params(self):
        return (1 + self.k) * self.p

    def theta(self, x):
        """Index ``d0_j + x_j' d_j`` for predictor rows ``x`` of shape (..., p, k)."""
        return self.intercepts + np.sum(np.asarray(x) * self.slopes, axis=-1)

    def probabilities(self, x):
        return logit_link(self.theta(x))

    def to_dict(self):
        return {
            "model": "separate",
            "grid": self.grid.to_list(),
            "intercepts": [float(v) for v in self.intercepts],
            "slopes": [[float(v) for v in row] for row in self.slopes],
            "stderr": None if self.stderr is None else
            [[None if not np.isfinite(v) else float(v) for v in row] for row in self.stderr],
            "loglik": float(self.loglik),
            "ridge_thresholds": list(self.ridge_thresholds),
        }


SEPARATION_RIDGE = 1e-3


def fit_separate_model(data, grid, on_separation="ridge"):
    """Fit the ``p`` binary logits of the separate model on ``data``.

    Parameters
    ----------
    data : ModelData
    grid : ProbabilityGrid
    on_separation : {"ridge", "raise"}
        With ``"ridge"`` a threshold whose slopes diverge (quasi-complete
        separation, common in the tails of short windows) is refit with a
        small ridge penalty on its slopes. Targets without variation always
        raise.

    Raises
    ------
    Step1Failure
        Carries the 1-based threshold index.
    """
    from .errors import Step1Failure

    y = data.targets
    p, k = data.p, data.k
    intercepts = np.empty(p)
    slopes = np.empty((p, k))
    stderr = np.empty((p, 1 + k))
    total = 0.0
    ridged = []
    for j in range(p):
        try:
            try:
                fit = fit_separate_logit(y[:, j], data.X[:, j, :])
            except PerfectSeparation as exc:
                if on_separation != "ridge" or y[:, j].all() or not y[:, j].any():
                    raise
                log.debug("threshold %d separated (%s); refitting with ridge", j + 1, exc)
                fit = fit_separate_logit(y[:, j], data.X[:, j, :], ridge=SEPARATION_RIDGE)
                ridged.append(j + 1)
        except (PerfectSeparation, NonConvergence) as exc:
            raise Step1Failure(j + 1, exc) from exc
        intercepts[j] = fit.intercept
        slopes[j] = fit.slopes
        stderr[j] = fit.stderr
        total += fit.loglik
    return SeparateLogitParams(grid, intercepts, slopes, stderr, total, tuple(ridged))
