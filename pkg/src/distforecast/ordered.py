"""Ordered logit with polynomial cross-quantile slope restrictions.

The conditional CDF at cutoff ``c_j`` is ``Lambda(theta_{t,j})`` with

    theta_{t,j} = d0_j + sum_l x_{t-1,j,l} * delta_l(alpha_j),
    delta_l(alpha) = kappa_{0,l} + sum_{i>=1} (2 (alpha - 0.5))**i * kappa_{i,l}.

Intercepts are free per cutoff; each predictor's slope is a polynomial of
order ``q_l`` in the probability level. Fitting runs three steps: separate
logits per cutoff, least-squares projection of their slopes on the
polynomial basis, then quasi-Newton maximization of the ordered
likelihood started from those values.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonConvergence, RankDeficientBasis
from .partition import Partition, ProbabilityGrid
from .unordered import (ModelData, fit_separate_model, log_logit_link,
                        logit_link)

log = logging.getLogger(__name__)

FLOOR = 1e-6
INTERCEPT_RIDGE = 1e-6

# Callables invoked with every fitted OrderedModelParams (test instrumentation).
FIT_OBSERVERS = []


class EmptyBinWarning(UserWarning):
    """A bin between adjacent cutoffs holds no in-sample observation."""


@dataclass(frozen=True)
class PolynomialSpec:
    """Polynomial orders ``q_1..q_k``, one per predictor."""

    orders: tuple = (2, 3)

    def __post_init__(self):
        orders = tuple(int(q) for q in self.orders)
        if not orders or any(q < 0 for q in orders):
            raise ConfigError(f"orders must be nonnegative, got {self.orders}")
        object.__setattr__(self, "orders", orders)

    @property
    def k(self):
        return len(self.orders)

    @property
    def q(self):
        return sum(self.orders)

    def check(self, p):
        for q in self.orders:
            if q > p - 1:
                raise RankDeficientBasis(
                    f"polynomial order {q} needs q <= p-1 = {p - 1}")

    @classmethod
    def parse(cls, text):
        try:
            return cls(tuple(int(x) for x in str(text).split(",")))
        except ValueError:
            raise ConfigError(f"cannot parse polynomial spec {text!r}") from None


DEFAULT_SPEC = PolynomialSpec((2, 3))


def basis(alphas, order):
    """Columns ``(2 (alpha - 0.5))**i`` for ``i = 0..order``."""
    u = 2.0 * (np.asarray(alphas, dtype=float) - 0.5)
    return u[..., None] ** np.arange(order + 1)


def coefficient_function(kappas, alpha):
    """Slope ``delta(alpha)`` implied by one predictor's kappas."""
    kap = np.asarray(kappas, dtype=float)
    out = basis(alpha, len(kap) - 1) @ kap
    return float(out) if np.ndim(out) == 0 else out


def count_parameters(p, k, spec):
    """``(K_O, K_UO) = (p + k + q, (1 + k) p)``."""
    if spec.k != k:
        raise ConfigError(f"spec has {spec.k} orders for {k} predictors")
    return p + k + spec.q, (1 + k) * p


@dataclass(eq=False)
class OrderedModelParams:
    grid: ProbabilityGrid
    intercepts: np.ndarray
    kappas: tuple
    spec: PolynomialSpec = DEFAULT_SPEC
    floor: float = FLOOR
    stderr: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.intercepts = np.asarray(self.intercepts, dtype=float)
        self.kappas = tuple(np.asarray(kp, dtype=float) for kp in self.kappas)
        if len(self.intercepts) != self.grid.p:
            raise ValueError("one intercept per grid level required")
        if tuple(len(kp) - 1 for kp in self.kappas) != self.spec.orders:
            raise ValueError("kappa lengths do not match the polynomial spec")

    @property
    def p(self):
        return self.grid.p

    @property
    def k(self):
        return self.spec.k

    @property
    def n_params(self):
        return self.p + self.k + self.spec.q

    def slope_matrix(self):
        """(p, k) matrix of ``delta_l(alpha_j)``."""
        return np.column_stack([basis(self.grid.alphas, len(kp) - 1) @ kp
                                for kp in self.kappas])

    def theta(self, x):
        """Index for predictor rows ``x`` of shape (..., p, k)."""
        return self.intercepts + np.sum(np.asarray(x, dtype=float) * self.slope_matrix(),
                                        axis=-1)

    def to_vector(self):
        return np.concatenate([self.intercepts, *self.kappas])

    @classmethod
    def from_vector(cls, vec, grid, spec=DEFAULT_SPEC, floor=FLOOR, **kw):
        vec = np.asarray(vec, dtype=float)
        p = grid.p
        kappas, pos = [], p
        for q in spec.orders:
            kappas.append(vec[pos:pos + q + 1])
            pos += q + 1
        if pos != len(vec):
            raise ValueError(f"vector of length {len(vec)} does not fit p={p}, spec={spec}")
        return cls(grid, vec[:p].copy(), tuple(k.copy() for k in kappas), spec, floor, **kw)

    def parameter_names(self):
        names = [f"d0[{a:g}]" for a in self.grid.alphas]
        for ell, kp in enumerate(self.kappas, 1):
            names += [f"kappa[{i},{ell}]" for i in range(len(kp))]
        return names

    def to_dict(self):
        se = None if self.stderr is None else [
            None if not np.isfinite(v) else float(v) for v in self.stderr]
        return {
            "model": "ordered",
            "grid": self.grid.to_list(),
            "intercepts": [float(v) for v in self.intercepts],
            "kappas": [[float(v) for v in kp] for kp in self.kappas],
            "spec": list(self.spec.orders),
            "floor": float(self.floor),
            "stderr": se,
            "fit_diagnostics": _jsonable(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d):
        se = d.get("stderr")
        return cls(ProbabilityGrid(np.array(d["grid"])), np.array(d["intercepts"]),
                   tuple(np.array(k) for k in d["kappas"]), PolynomialSpec(tuple(d["spec"])),
                   float(d["floor"]),
                   None if se is None else np.array([np.nan if v is None else v for v in se]),
                   dict(d.get("fit_diagnostics") or {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def ordered_theta(params, x, j):
    """``theta`` at cutoff index ``j`` (0-based) for the (p, k) predictor rows ``x``."""
    x = np.asarray(x, dtype=float)
    return float(params.intercepts[j] + x[j] @ params.slope_matrix()[j])


# -- likelihood ------------------------------------------------------------

class _Layout:
    """Maps the flat parameter vector onto intercepts and kappas."""

    def __init__(self, grid, spec):
        self.p = grid.p
        self.spec = spec
        self.bases = [basis(grid.alphas, q) for q in spec.orders]
        self.bounds = []
        pos = self.p
        for q in spec.orders:
            self.bounds.append((pos, pos + q + 1))
            pos += q + 1
        self.size = pos

    def slopes(self, vec):
        return np.column_stack([B @ vec[a:b] for B, (a, b) in zip(self.bases, self.bounds)])

    def theta(self, vec, X):
        return vec[:self.p] + np.einsum("npk,pk->np", X, self.slopes(vec))


def _bin_probabilities(theta):
    """(n, p+1) bin probabilities ``Delta_j Lambda`` for index matrix ``theta``."""
    F = logit_link(theta)
    n, p = theta.shape
    d = np.empty((n, p + 1))
    d[:, 0] = F[:, 0]
    d[:, 1:p] = F[:, 1:] - F[:, :-1]
    d[:, p] = logit_link(-theta[:, -1])
    return d


def _evaluate(vec, data, layout, floor, want_grad=False, want_scores=False, state=None):
    theta = layout.theta(vec, data.X)
    n, p = theta.shape
    rows = np.arange(n)
    b = data.bins
    delta = _bin_probabilities(theta)
    low = delta < floor
    hits = int(np.count_nonzero(low))
    obs = delta[rows, b]
    clamped = obs < floor
    if state is not None:
        # flooring adds (floor - delta) of probability mass per hit
        state["clamped_obs"] = int(np.count_nonzero(clamped))
        state["overshoot"] = float(np.sum(floor - delta[low]))
    ll_t = np.log(np.maximum(obs, floor))
    # tail bins in log form for accuracy
    lo = (b == 0) & ~clamped
    hi = (b == p) & ~clamped
    ll_t[lo] = log_logit_link(theta[lo, 0])
    ll_t[hi] = log_logit_link(-theta[hi, p - 1])
    ll = float(ll_t.sum())
    if not (want_grad or want_scores):
        return ll, hits, None, None
    dens = logit_link(theta) * logit_link(-theta)
    G = np.zeros((n, p))
    live = ~clamped
    up = live & (b < p)
    dn = live & (b > 0)
    G[rows[up], b[up]] = dens[rows[up], b[up]] / obs[up]
    G[rows[dn], b[dn] - 1] = -dens[rows[dn], b[dn] - 1] / obs[dn]
    if want_scores:
        S = np.empty((n, layout.size))
        S[:, :p] = G
        for ell, (B, (a, c)) in enumerate(zip(layout.bases, layout.bounds)):
            S[:, a:c] = (G * data.X[:, :, ell]) @ B
        return ll, hits, S.sum(axis=0), S
    g = np.empty(layout.size)
    g[:p] = G.sum(axis=0)
    for ell, (B, (a, c)) in enumerate(zip(layout.bases, layout.bounds)):
        g[a:c] = B.T @ np.einsum("np,np->p", G, data.X[:, :, ell])
    return ll, hits, g, None


def ordered_loglik(params, data, floor=None):
    """Ordered log-likelihood of ``data`` and the number of floored differences.

    Every bin probability is floored at ``floor`` (default: ``params.floor``)
    before taking logs; the count covers all ``n * (p + 1)`` differences.
    """
    floor = params.floor if floor is None else floor
    layout = _Layout(params.grid, params.spec)
    ll, hits, _, _ = _evaluate(params.to_vector(), data, layout, floor)
    return ll, hits


def ordered_loglik_gradient(params, data, floor=None):
    """Analytic gradient of :func:`ordered_loglik` w.r.t. the flat parameter vector."""
    floor = params.floor if floor is None else floor
    layout = _Layout(params.grid, params.spec)
    return _evaluate(params.to_vector(), data, layout, floor, want_grad=True)[2]


# -- estimation ------------------------------------------------------------

def init_kappas(step1, grid, spec):
    """Least-squares projection of Step-1 slopes on the polynomial basis."""
    slopes = np.asarray(step1.slopes, dtype=float)
    if slopes.shape != (grid.p, spec.k):
        raise ValueError(f"step-1 slopes have shape {slopes.shape}, "
                         f"expected {(grid.p, spec.k)}")
    spec.check(grid.p)
    out = []
    for ell, q in enumerate(spec.orders):
        B = basis(grid.alphas, q)
        if np.linalg.matrix_rank(B) < q + 1:
            raise RankDeficientBasis(f"basis of order {q} is rank deficient on this grid")
        out.append(np.linalg.lstsq(B, slopes[:, ell], rcond=None)[0])
    return tuple(out)


def refit_intercepts(data, slopes, start, max_iter=50, tol=1e-9):
    """Per-threshold logit intercepts with the slopes held at ``slopes``.

    Each ``d0_j`` solves the binary first-order condition
    ``sum_t (y_tj - Lambda(d0_j + x_tj' d_j)) = 0`` by vectorized Newton
    steps (capped at 5 per iteration); thresholds are independent.
    """
    y = data.targets.astype(float)
    off = np.einsum("npk,pk->np", data.X, slopes)
    d = np.array(start, dtype=float)
    for _ in range(max_iter):
        mu = logit_link(d + off)
        g = np.sum(y - mu, axis=0)
        h = np.sum(mu * (1.0 - mu), axis=0)
        step = np.clip(g / np.maximum(h, 1e-12), -5.0, 5.0)
        d += step
        if np.max(np.abs(step)) < tol:
            break
    return d


def _numerical_hessian(grad, x, rel_step=1e-5):
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _pd_inverse(A):
    """Inverse of a symmetric matrix with its spectrum clipped to be positive."""
    w, V = np.linalg.eigh(A)
    top = max(np.max(np.abs(w)), 1e-12)
    w = np.maximum(np.abs(w), top * 1e-10)
    return (V / w) @ V.T


def _bfgs_maximize(fun, x0, Hinv, gtol, ftol, max_iter, admissible=None):
    """Maximize ``fun`` by BFGS with backtracking.

    ``fun`` returns ``(value, gradient, state)``. Only improving steps are
    accepted, so the returned value never falls below ``fun(x0)``; a trial
    point is also backtracked when ``admissible(state_trial, state_current)``
    is false.
    """
    x = x0.copy()
    f, g, st = fun(x)
    trace = [f]
    it = 0
    how = "max_iter"
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            how = "gradient"
            break
        d = Hinv @ g
        slope = float(g @ d)
        if slope <= 0 or not np.isfinite(slope):
            Hinv = np.eye(len(x)) * (1.0 / max(np.max(np.abs(g)), 1.0))
            d = Hinv @ g
            slope = float(g @ d)
        t = 1.0
        accepted = False
        for _ in range(50):
            xn = x + t * d
            fn, gn, stn = fun(xn)
            if (np.isfinite(fn) and fn >= f + 1e-4 * t * slope
                    and (admissible is None or admissible(stn, st))):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            how = "stalled"
            break
        s, y = xn - x, g - gn
        sy = float(s @ y)
        prev = f
        x, f, g, st = xn, fn, gn, stn
        trace.append(f)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv = (Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s))
        if abs(f - prev) <= ftol * max(abs(f), 1.0):
            how = "loglik_change"
            break
    return x, f, g, it, how, trace


def fit_ordered(data, grid, spec=DEFAULT_SPEC, floor=FLOOR, on_separation="ridge",
                gtol=1e-6, ftol=1e-10, max_iter=500, compute_stderr=True,
                raise_on_nonconvergence=True):
    """Three-step maximum likelihood fit of the ordered model.

    Parameters
    ----------
    data : ModelData
    grid : ProbabilityGrid
    spec : PolynomialSpec
        One order per predictor; ``q_l <= p - 1``.
    floor : float
        Lower bound on every bin probability inside the likelihood.
    on_separation : {"ridge", "raise"}
        Step-1 handling of separated thresholds, see
        :func:`~distforecast.unordered.fit_separate_model`.

    Returns
    -------
    OrderedModelParams
        With sandwich standard errors and ``diagnostics`` holding the
        log-likelihood trace (``init_loglik``, ``loglik``), iteration count,
        stopping rule and floor-hit counts.

    Raises
    ------
    RankDeficientBasis, Step1Failure, NonConvergence
    """
    p, k = grid.p, data.k
    if data.p != p:
        raise ConfigError(f"data has {data.p} cutoffs, grid has {p}")
    if spec.k != k:
        raise ConfigError(f"spec has {spec.k} orders for {k} predictors")
    spec.check(p)

    counts = data.bin_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        warnings.warn(f"{empty.size} of {p + 1} bins are empty in-sample", EmptyBinWarning,
                      stacklevel=2)

    step1 = fit_separate_model(data, grid, on_separation=on_separation)
    kappas0 = init_kappas(step1, grid, spec)
    layout = _Layout(grid, spec)
    x_step2 = np.concatenate([step1.intercepts, *kappas0])
    init_ll, init_hits, _, _ = _evaluate(x_step2, data, layout, floor)

    # Step-1 intercepts were estimated next to unrestricted slopes; paired
    # with the smoothed slopes they often cross. Re-solving them with the
    # slopes fixed gives a nearly monotone start, which keeps the ascent
    # away from solutions that only gain by pushing occupied bins onto the
    # floor. The better of the two points starts Step 3.
    x0 = np.concatenate([refit_intercepts(data, layout.slopes(x_step2), step1.intercepts),
                         *kappas0])
    start_ll, start_hits, _, _ = _evaluate(x0, data, layout, floor)
    if not (np.all(np.isfinite(x0)) and start_ll >= init_ll):
        x0, start_ll, start_hits = x_step2, init_ll, init_hits

    # Intercepts bounding an empty bin are tied loosely to their Step-1 values.
    pen = np.zeros(layout.size)
    for b in empty:
        for j in (b - 1, b):
            if 0 <= j < p:
                pen[j] = INTERCEPT_RIDGE

    def objective(v):
        st = {}
        ll, _, g, _ = _evaluate(v, data, layout, floor, want_grad=True, state=st)
        dv = v - x0
        return ll - 0.5 * float(np.sum(pen * dv * dv)), g - pen * dv, st

    def grad(v):
        return objective(v)[1]

    # The floored likelihood can be raised without bound by letting two
    # thresholds cross: the crossed bin sits on the floor while the bins
    # above it receive mass that no longer sums to one. Step 3 is a local
    # ascent from the Step-2 start, so steps that push further observed
    # bins onto the floor, or add more than 1e-3 * n of spurious mass over
    # the start, are shortened.
    budget = objective(x0)[2]["overshoot"] + 1e-3 * data.n

    def admissible(new, cur):
        return (new["clamped_obs"] <= cur["clamped_obs"]
                and new["overshoot"] <= max(cur["overshoot"], budget))

    H0 = _numerical_hessian(grad, x0)
    x, f, g, iters, how, trace = _bfgs_maximize(objective, x0, _pd_inverse(-H0), gtol, ftol,
                                         max_iter, admissible)
    st = objective(x)[2]

    # Newton polish with a finite-difference Hessian; kept only if it improves.
    H = None
    for _ in range(3):
        if np.max(np.abs(g)) <= gtol:
            break
        H = _numerical_hessian(grad, x)
        step = _pd_inverse(-H) @ g
        improved = False
        t = 1.0
        for _ in range(20):
            fn, gn, stn = objective(x + t * step)
            if fn > f and admissible(stn, st):
                x, f, g, st = x + t * step, fn, gn, stn
                improved = True
                H = None
                break
            t *= 0.5
        if not improved:
            break
    gnorm = float(np.max(np.abs(g)))
    if gnorm <= gtol:
        how = "gradient"
    converged = how in ("gradient", "loglik_change", "stalled")
    if not converged and raise_on_nonconvergence:
        raise NonConvergence(iters, gnorm)

    final_ll, final_hits, _, S = _evaluate(x, data, layout, floor, want_scores=True)
    if final_ll < start_ll:
        # cannot happen with the ascent-only optimizer; guard the contract anyway
        x, final_ll, final_hits = x0.copy(), start_ll, start_hits
        _, _, _, S = _evaluate(x, data, layout, floor, want_scores=True)

    stderr = None
    if compute_stderr:
        def ll_grad(v):
            return _evaluate(v, data, layout, floor, want_grad=True)[2]
        Hll = _numerical_hessian(ll_grad, x)
        Hinv = np.linalg.pinv(Hll)
        cov = Hinv @ (S.T @ S) @ Hinv
        stderr = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    diagnostics = {
        "loglik": final_ll,
        "init_loglik": init_ll,
        "start_loglik": start_ll,
        "step1_loglik": step1.loglik,
        "iterations": iters,
        "stopped_by": how,
        "converged": converged,
        "grad_norm": gnorm,
        "n_obs": data.n,
        "n_params": layout.size,
        "floor_hits": final_hits,
        "init_floor_hits": init_hits,
        "start_floor_hits": start_hits,
        "n_differences": data.n * (p + 1),
        "empty_bins": [int(b) for b in empty],
        "step1_ridge_thresholds": list(step1.ridge_thresholds),
        "trace": trace,
    }
    params = OrderedModelParams.from_vector(x, grid, spec, floor, stderr=stderr,
                                            diagnostics=diagnostics)
    for obs in FIT_OBSERVERS:
        obs(params)
    return params


# -- forecasting -----------------------------------------------------------

@dataclass(eq=False)
class DistForecast:
    """Conditional CDF values at the cutoffs for one date.

    ``window_min`` / ``window_max`` are the extremes of the estimation window
    that produced the forecast; they anchor the tails when interpolating.
    """

    date: object
    partition: Partition
    cdf_values: np.ndarray
    adjusted_count: int = 0
    window_min: float = float("nan")
    window_max: float = float("nan")

    @property
    def cutoffs(self):
        return self.partition.cutoffs

    @property
    def alphas(self):
        return self.partition.grid.alphas

    def bin_probabilities(self):
        F = self.cdf_values
        return np.diff(np.concatenate([[0.0], F, [1.0]]))


def repair_cdf(F, floor=FLOOR):
    """Make ``F`` strictly increasing with steps of at least ``floor``.

    Scans upward and lifts any value closer than ``floor`` to its
    predecessor; values are also kept below ``1 - floor`` on the top end.
    Returns the repaired copy and the number of adjusted values.
    """
    F = np.array(F, dtype=float)
    p = len(F)
    count = 0
    if F[0] < floor:
        F[0] = floor
        count += 1
    for j in range(1, p):
        if F[j] - F[j - 1] < floor:
            F[j] = F[j - 1] + floor
            count += 1
    cap = 1.0 - floor * (p - np.arange(p))
    for j in range(p - 1, -1, -1):
        if F[j] > cap[j]:
            F[j] = cap[j]
            count += 1
    return F, count


def forecast_from_probabilities(raw, partition, date=None, floor=FLOOR,
                                window_min=float("nan"), window_max=float("nan")):
    F, count = repair_cdf(raw, floor)
    return DistForecast(date, partition, F, count, window_min, window_max)


def predict_cdf(params, x, partition, date=None, **kw):
    """Forecast ``Lambda(theta_j)`` from (p, k) predictor rows, repaired to be monotone."""
    raw = logit_link(params.theta(x))
    return forecast_from_probabilities(raw, partition, date, params.floor, **kw)
