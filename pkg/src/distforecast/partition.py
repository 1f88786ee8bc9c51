"""Probability grids and volatility-scaled cutoffs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NonPositiveVariance

# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(z):
    """Standard normal CDF via ``erfc`` (accurate in both tails)."""
    return 0.5 * math.erfc(-z / _SQRT2)


def _acklam(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def _quantile_scalar(p):
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    z = _acklam(p)
    # one Newton step against the erfc-based CDF
    if p < 0.5:
        err = normal_cdf(z) - p
    else:
        err = (1.0 - p) - 0.5 * math.erfc(z / _SQRT2)
    return z - err * _SQRT2PI * math.exp(0.5 * z * z)


def normal_quantile(p):
    """Inverse standard normal CDF; scalar in, float out; array in, array out."""
    if np.ndim(p) == 0:
        return _quantile_scalar(p)
    arr = np.asarray(p, dtype=float)
    return np.array([_quantile_scalar(x) for x in arr.ravel()]).reshape(arr.shape)


@dataclass(frozen=True, eq=False)
class ProbabilityGrid:
    """Strictly increasing probability levels in (0, 1)."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float).ravel()
        if a.size == 0:
            raise ConfigError("grid must contain at least one level")
        if np.any(a <= 0.0) or np.any(a >= 1.0):
            raise ConfigError("grid levels must lie in the open interval (0, 1)")
        if np.any(np.diff(a) <= 0):
            raise ConfigError("grid levels must be strictly increasing")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def p(self):
        return len(self.alphas)

    def __len__(self):
        return len(self.alphas)

    def __eq__(self, other):
        return isinstance(other, ProbabilityGrid) and np.array_equal(self.alphas, other.alphas)

    def __hash__(self):
        return hash(self.alphas.tobytes())

    @classmethod
    def equally_spaced(cls, p=37, low=0.05, high=0.95):
        if p == 1:
            return cls(np.array([0.5 * (low + high)]))
        return cls(np.round(np.linspace(low, high, p), 12))

    @classmethod
    def parse(cls, text):
        """Parse ``lo:hi:step``, ``p=N`` (N levels on [0.05, 0.95]) or a comma list."""
        text = str(text).strip()
        try:
            if text.startswith("p="):
                return cls.equally_spaced(int(text[2:]))
            if ":" in text:
                lo, hi, step = (float(x) for x in text.split(":"))
                if step <= 0 or hi < lo:
                    raise ValueError
                n = int(round((hi - lo) / step)) + 1
                return cls(np.round(lo + step * np.arange(n), 12))
            return cls(np.array([float(x) for x in text.split(",")]))
        except ValueError:
            raise ConfigError(f"cannot parse grid {text!r}") from None

    def to_list(self):
        return [float(a) for a in self.alphas]


DEFAULT_GRID = ProbabilityGrid.equally_spaced(37)


@dataclass(frozen=True, eq=False)
class Partition:
    """Cutoffs ``c_j = gamma(alpha_j) * sqrt(sigma2)`` for one variance level."""

    grid: ProbabilityGrid
    cutoffs: np.ndarray
    sigma2: float

    def __post_init__(self):
        c = np.asarray(self.cutoffs, dtype=float)
        if c.shape != (self.grid.p,):
            raise ValueError("one cutoff per grid level required")
        if np.any(np.diff(c) <= 0):
            raise ValueError("cutoffs must be strictly increasing")
        c.setflags(write=False)
        object.__setattr__(self, "cutoffs", c)


def grid_quantiles(grid):
    return normal_quantile(grid.alphas)


def build_partition(grid, sigma2):
    """Volatility-scaled partition for variance ``sigma2``."""
    sigma2 = float(sigma2)
    if not sigma2 > 0.0 or not math.isfinite(sigma2):
        raise NonPositiveVariance(f"variance must be positive, got {sigma2}")
    return Partition(grid, grid_quantiles(grid) * math.sqrt(sigma2), sigma2)


def cutoff_matrix(grid, sigma2):
    """Cutoffs for a vector of variances, shape ``(len(sigma2), p)``."""
    s = np.asarray(sigma2, dtype=float)
    if np.any(~(s > 0)):
        raise NonPositiveVariance("variances must be positive")
    return np.sqrt(s)[:, None] * grid_quantiles(grid)[None, :]
