"""Preprocessing and exploratory statistics for multivariate series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientData, InsufficientExceedances, ZeroVariance

ADF_CRITICAL_1PCT = -3.43
MIN_EXTREMAL_EXCEEDANCES = 20
KINDS = ("acf", "pacf", "ccf", "pccf")


def _check_var(x, name="series"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if len(x) < 2 or np.ptp(x) == 0:
        raise ZeroVariance(f"{name} is constant")
    return x


def jitter_and_normalize(series, noise_fraction: float = 0.05, seed: Optional[int] = 0):
    """Add Gaussian noise (sd = fraction * sample sd), then scale to unit variance.

    The series is not centred; only its spread is normalised.
    """
    x = _check_var(series)
    if noise_fraction < 0:
        raise ValueError("noise_fraction must be nonnegative")
    sd = x.std(ddof=1)
    if noise_fraction > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        x = x + rng.normal(0.0, noise_fraction * sd, size=len(x))
    return x / x.std(ddof=1)


@dataclass(frozen=True)
class CorrelationSeries:
    kind: str
    lags: np.ndarray
    values: np.ndarray
    ci_halfwidth: float


def _acf(x, max_lag):
    xc = x - x.mean()
    denom = float(xc @ xc)
    n = len(x)
    return np.array([float(xc[: n - h] @ xc[h:]) / denom for h in range(max_lag + 1)])


def _ccf(x, y, max_lag):
    xc = x - x.mean()
    yc = y - y.mean()
    n = len(x)
    denom = n * x.std() * y.std()
    return np.array([float(xc[: n - h] @ yc[h:]) / denom for h in range(max_lag + 1)])


def _durbin_levinson(r, max_lag):
    pacf = np.zeros(max_lag + 1)
    pacf[0] = 1.0
    phi = np.zeros(max_lag + 1)
    v = 1.0
    for k in range(1, max_lag + 1):
        a = (r[k] - phi[1:k] @ r[k - 1:0:-1]) / v
        new = phi.copy()
        new[k] = a
        new[1:k] = phi[1:k] - a * phi[k - 1:0:-1]
        phi = new
        v *= 1.0 - a * a
        pacf[k] = a
    return pacf


def _pccf(x, y, max_lag):
    """corr(x_t, y_{t+h}) after regressing both on y_{t+1} .. y_{t+h-1}."""
    n = len(x)
    out = np.empty(max_lag + 1)
    for h in range(max_lag + 1):
        a = x[: n - h]
        b = y[h:]
        if h >= 2:
            Z = np.column_stack([np.ones(n - h)] + [y[j: n - h + j] for j in range(1, h)])
            a = a - Z @ np.linalg.lstsq(Z, a, rcond=None)[0]
            b = b - Z @ np.linalg.lstsq(Z, b, rcond=None)[0]
        out[h] = np.corrcoef(a, b)[0, 1]
    return out


def correlation_functions(x, y=None, max_lag: int = 20, kind: str = "acf") -> CorrelationSeries:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    x = _check_var(x, "x")
    n = len(x)
    if max_lag < 0 or max_lag >= n:
        raise InsufficientData(f"max_lag must lie in [0, {n - 1}]")
    if kind in ("ccf", "pccf"):
        if y is None:
            raise ValueError(f"{kind} needs a second series")
        y = _check_var(y, "y")
        if len(y) != n:
            raise ValueError("x and y must have equal length")
        vals = _ccf(x, y, max_lag) if kind == "ccf" else _pccf(x, y, max_lag)
    else:
        r = _acf(x, max_lag)
        vals = r if kind == "acf" else _durbin_levinson(r, max_lag)
    vals = np.clip(vals, -1.0, 1.0)
    return CorrelationSeries(kind, np.arange(max_lag + 1), vals, 1.96 / math.sqrt(n))


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags_used: int
    critical_value: float = ADF_CRITICAL_1PCT

    @property
    def reject_at_1pct(self) -> bool:
        return self.statistic < self.critical_value


def adf_test(series, max_lag: int = 1) -> AdfResult:
    """Constant-only augmented Dickey-Fuller regression with a fixed lag."""
    x = _check_var(series)
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    dx = np.diff(x)
    n = len(dx) - max_lag
    if n < max_lag + 10:
        raise InsufficientData(f"series too short for an ADF regression with {max_lag} lags")
    yv = dx[max_lag:]
    cols = [np.ones(n), x[max_lag:-1]]
    cols += [dx[max_lag - j: len(dx) - j] for j in range(1, max_lag + 1)]
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, yv, rcond=None)
    resid = yv - X @ beta
    s2 = float(resid @ resid) / (n - X.shape[1])
    cov = s2 * np.linalg.inv(X.T @ X)
    return AdfResult(float(beta[1] / math.sqrt(cov[1, 1])), max_lag)


def empirical_extremal_correlation(x_i, x_j, h: int = 0, u: float = 0.95) -> float:
    """Fraction of exceedances of ``x_i`` at ``t`` followed by one of ``x_j`` at ``t+h``."""
    a = np.asarray(x_i, dtype=float)
    b = np.asarray(x_j, dtype=float)
    if len(a) != len(b):
        raise ValueError("series must have equal length")
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    n = len(a)
    if h < 0 or h >= n:
        raise InsufficientData(f"lag {h} is outside the series of length {n}")
    qa, qb = np.quantile(a, u), np.quantile(b, u)
    hit = a[: n - h] > qa
    count = int(hit.sum())
    if count < MIN_EXTREMAL_EXCEEDANCES:
        raise InsufficientExceedances(
            f"{count} exceedances at u={u}; need {MIN_EXTREMAL_EXCEEDANCES}")
    return float(np.mean(b[h:][hit] > qb))


def histogram(series, bins: int = 30):
    counts, edges = np.histogram(np.asarray(series, dtype=float), bins=bins)
    return counts, edges
