"""Peaks-over-threshold marginal models.

Each variable is described by its empirical distribution below a threshold
and a generalised Pareto (GPD) tail above it. The threshold is chosen with
sequential Anderson-Darling goodness-of-fit tests and the ForwardStop rule.

Shape ``xi`` and scale ``sigma`` follow the usual convention: the survival
function of an exceedance is ``(1 + xi (x - mu) / sigma)_+^(-1/xi)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import AllThresholdsRejected, ConvergenceFailure, InsufficientData

logger = logging.getLogger(__name__)

MIN_EXCEEDANCES = 30
MIN_SAMPLE = 500
DEFAULT_CANDIDATES = tuple(np.round(np.arange(0.80, 0.981, 0.02), 2))

# below this |x| the series for log1p(x)/x and its derivatives is used
_SERIES_CUTOFF = 0.05
_SERIES_TERMS = 18


@dataclass(frozen=True)
class GpdParams:
    shape: float
    scale: float
    threshold: float = 0.0
    threshold_quantile: Optional[float] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"GPD scale must be positive, got {self.scale}")
        q = self.threshold_quantile
        if q is not None and not 0.0 < q < 1.0:
            raise ValueError(f"threshold_quantile must lie in (0, 1), got {q}")

    @property
    def upper_endpoint(self) -> float:
        if self.shape < 0:
            return self.threshold + self.scale / abs(self.shape)
        return np.inf


@dataclass(frozen=True)
class GpdFit:
    params: GpdParams
    shape_se: float
    scale_se: float
    loglik: float
    n: int
    iterations: int


@dataclass(frozen=True)
class ThresholdSelectionResult:
    candidates: np.ndarray
    candidate_quantiles: np.ndarray
    p_values: np.ndarray
    rejected_count: int

    @property
    def chosen_index(self) -> int:
        return self.rejected_count

    @property
    def threshold(self) -> float:
        return float(self.candidates[self.chosen_index])

    @property
    def quantile(self) -> float:
        return float(self.candidate_quantiles[self.chosen_index])


# --------------------------------------------------------------------------
# distribution functions


def gpd_survival(x, params: GpdParams):
    """Survival probability ``P(X > x)`` of the tail given an exceedance."""
    x = np.asarray(x, dtype=float)
    z = np.maximum(x - params.threshold, 0.0) / params.scale
    xi = params.shape
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if xi == 0.0:
            out = np.exp(-z)
        else:
            t = xi * z
            out = np.where(t > -1.0, np.exp(-np.log1p(np.maximum(t, -1.0)) / xi), 0.0)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def gpd_quantile(u, params: GpdParams):
    """Inverse of ``1 - gpd_survival``; maps ``u in [0, 1)`` to the data scale."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u >= 1.0)) or np.any(np.isnan(u)):
        raise ValueError("gpd_quantile requires 0 <= u < 1")
    xi = params.shape
    ell = -np.log1p(-u)
    if xi == 0.0:
        z = ell
    else:
        z = np.expm1(xi * ell) / xi
    out = params.threshold + params.scale * z
    return out if out.ndim else float(out)


def gpd_logpdf(x, params: GpdParams):
    x = np.asarray(x, dtype=float)
    a = (x - params.threshold) / params.scale
    xi = params.shape
    t = xi * a
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(params.scale) - np.log1p(t) - a * _g(t)
    out = np.where((a >= 0) & (1.0 + t > 0), out, -np.inf)
    return out if out.ndim else float(out)


def gpd_loglik(exceedances, params: GpdParams) -> float:
    return float(np.sum(gpd_logpdf(exceedances, params)))


# --------------------------------------------------------------------------
# log-likelihood derivatives
#
# Per observation, with a = y / sigma and x = xi * a:
#   l = -log(sigma) - log1p(x) - a * g(x),   g(x) = log1p(x) / x
# which is smooth through xi = 0. Derivatives are taken in (xi, s = log sigma).


def _series_coeffs(order: int) -> np.ndarray:
    k = np.arange(_SERIES_TERMS + order)
    c = (-1.0) ** k / (k + 1.0)
    for _ in range(order):
        c = c[1:] * np.arange(1, len(c))
    return c[::-1]


_G_COEF = [_series_coeffs(i) for i in range(3)]


def _g(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(x) / x
    return np.where(small, np.polyval(_G_COEF[0], np.where(small, x, 0.0)), out)


def _g_derivs(x):
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    lg = np.log1p(xs)
    g0 = lg / xs
    n = xs / (1.0 + xs) - lg
    g1 = n / xs**2
    g2 = -1.0 / (xs * (1.0 + xs) ** 2) - 2.0 * n / xs**3
    xt = np.where(small, x, 0.0)
    g0 = np.where(small, np.polyval(_G_COEF[0], xt), g0)
    g1 = np.where(small, np.polyval(_G_COEF[1], xt), g1)
    g2 = np.where(small, np.polyval(_G_COEF[2], xt), g2)
    return g0, g1, g2


def _batch_terms(xi, s, y):
    """Log-likelihood, gradient and Hessian summed over the last axis of ``y``.

    ``xi`` and ``s`` have shape (B,); ``y`` has shape (B, n). Rows violating the
    support constraint get ``-inf`` log-likelihood.
    """
    a = y * np.exp(-s)[:, None]
    x = xi[:, None] * a
    feasible = np.all(x > -1.0, axis=1) & (xi > -1.0)
    x = np.where(feasible[:, None], x, 0.0)
    g0, g1, g2 = _g_derivs(x)
    opx = 1.0 + x
    ll = np.sum(-np.log1p(x) - a * g0, axis=1) - y.shape[1] * s
    d_xi = np.sum(-a / opx - a**2 * g1, axis=1)
    d_s = np.sum(-1.0 + x / opx + a * (g0 + x * g1), axis=1)
    h_xx = np.sum(a**2 / opx**2 - a**3 * g2, axis=1)
    h_xs = np.sum(a / opx**2 + a**2 * (2.0 * g1 + x * g2), axis=1)
    h_ss = np.sum(-x / opx**2 - a * (g0 + 3.0 * x * g1 + x**2 * g2), axis=1)
    ll = np.where(feasible, ll, -np.inf)
    grad = np.stack([d_xi, d_s], axis=1)
    hess = np.stack([np.stack([h_xx, h_xs], axis=1), np.stack([h_xs, h_ss], axis=1)], axis=1)
    return ll, grad, hess


def _batch_loglik(xi, s, y):
    a = y * np.exp(-s)[:, None]
    x = xi[:, None] * a
    feasible = np.all(x > -1.0, axis=1) & (xi > -1.0)
    x = np.where(feasible[:, None], x, 0.0)
    ll = np.sum(-np.log1p(x) - a * _g(x), axis=1) - y.shape[1] * s
    return np.where(feasible, ll, -np.inf)


def _pwm_start(y):
    """Probability-weighted-moment estimates per row of sorted excesses ``y``."""
    n = y.shape[1]
    p = (np.arange(1, n + 1) - 0.35) / n
    a0 = y.mean(axis=1)
    a1 = np.mean(y * (1.0 - p), axis=1)
    denom = a0 - 2.0 * a1
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = 2.0 - a0 / denom
        sigma = 2.0 * a0 * a1 / denom
    bad = ~np.isfinite(xi) | ~np.isfinite(sigma) | (sigma <= 0)
    xi = np.where(bad, 0.0, np.clip(xi, -0.5, 1.0))
    sigma = np.where(bad, a0, sigma)
    # nudge into the support if the PWM endpoint falls below the sample maximum
    ymax = y[:, -1]
    over = (xi < 0) & (sigma / -np.where(xi < 0, xi, -1.0) <= ymax)
    sigma = np.where(over, -xi * ymax * 1.05, sigma)
    return xi, np.log(sigma)


def _newton(xi, s, y, max_iter: int, gtol: float):
    """Damped Newton ascent on the GPD log-likelihood, vectorised over rows."""
    n = y.shape[1]
    ll, grad, hess = _batch_terms(xi, s, y)
    active = np.isfinite(ll)
    converged = active & (np.max(np.abs(grad), axis=1) / n < gtol)
    iters = np.zeros(len(xi), dtype=int)
    for _ in range(max_iter):
        todo = active & ~converged
        if not todo.any():
            break
        iters[todo] += 1
        idx = np.flatnonzero(todo)
        g = grad[idx]
        h = hess[idx]
        det = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2
        negdef = (h[:, 0, 0] < 0) & (det > 0)
        # Newton direction -H^{-1} g, falling back to scaled gradient ascent
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = -(h[:, 1, 1] * g[:, 0] - h[:, 0, 1] * g[:, 1]) / det
            ss = -(-h[:, 0, 1] * g[:, 0] + h[:, 0, 0] * g[:, 1]) / det
        gscale = 0.1 / np.maximum(np.max(np.abs(g), axis=1), 1e-300)
        sx = np.where(negdef, sx, g[:, 0] * gscale)
        ss = np.where(negdef, ss, g[:, 1] * gscale)
        step = np.ones(len(idx))
        base = ll[idx]
        accepted = np.zeros(len(idx), dtype=bool)
        new_xi = xi[idx].copy()
        new_s = s[idx].copy()
        for _ in range(40):
            pending = ~accepted
            if not pending.any():
                break
            cx = xi[idx] + step * sx
            cs = s[idx] + step * ss
            cl = _batch_loglik(cx, cs, y[idx])
            ok = pending & np.isfinite(cl) & (cl >= base - 1e-10 * np.abs(base))
            new_xi = np.where(ok, cx, new_xi)
            new_s = np.where(ok, cs, new_s)
            accepted |= ok
            step = np.where(accepted, step, step * 0.5)
        xi[idx] = new_xi
        s[idx] = new_s
        l2, g2, h2 = _batch_terms(xi[idx], s[idx], y[idx])
        ll[idx], grad[idx], hess[idx] = l2, g2, h2
        stalled = ~accepted
        converged[idx] = np.max(np.abs(g2), axis=1) / n < gtol
        active[idx[stalled & ~converged[idx]]] = False
    return xi, s, ll, hess, converged, iters


def _excesses(exceedances, threshold) -> np.ndarray:
    y = np.sort(np.asarray(exceedances, dtype=float)) - float(threshold)
    if y.ndim != 1:
        raise ValueError("exceedances must be one-dimensional")
    if len(y) < MIN_EXCEEDANCES:
        raise InsufficientData(f"need at least {MIN_EXCEEDANCES} exceedances, got {len(y)}")
    if np.any(y <= 0):
        raise ValueError("all exceedances must lie strictly above the threshold")
    return y


def fit_gpd_mle(exceedances: Sequence[float], threshold: float,
                max_iter: int = 500, gtol: float = 1e-8) -> GpdFit:
    """Maximum likelihood GPD fit to values above ``threshold``.

    Nelder-Mead on ``(log scale, shape)`` from probability-weighted-moment
    starting values, then Newton polishing until the per-observation
    gradient falls below ``gtol``. Standard errors come from the inverse
    observed information.
    """
    y = _excesses(exceedances, threshold)
    if np.ptp(y) == 0.0:
        raise ConvergenceFailure("degenerate likelihood: all exceedances are equal")
    n = len(y)
    xi0, s0 = _pwm_start(y[None, :])

    def objective(theta):
        s, xi = theta
        val = _batch_loglik(np.array([xi]), np.array([s]), y[None, :])[0]
        return -val / n if np.isfinite(val) else 1e10

    nm_budget = max(max_iter - 100, 1)
    res = minimize(objective, x0=[s0[0], xi0[0]], method="Nelder-Mead",
                   options={"maxiter": nm_budget, "xatol": 1e-7, "fatol": 1e-12})
    xi = np.array([res.x[1]])
    s = np.array([res.x[0]])
    xi, s, ll, hess, conv, iters = _newton(xi, s, y[None, :], max_iter - res.nit, gtol)
    if not conv[0]:
        raise ConvergenceFailure(
            f"GPD likelihood did not reach gradient tolerance {gtol} in {max_iter} iterations")
    cov = np.linalg.inv(-hess[0])
    sigma = float(np.exp(s[0]))
    params = GpdParams(float(xi[0]), sigma, float(threshold))
    return GpdFit(params=params,
                  shape_se=float(np.sqrt(max(cov[0, 0], 0.0))),
                  scale_se=float(sigma * np.sqrt(max(cov[1, 1], 0.0))),
                  loglik=float(ll[0]), n=n, iterations=int(res.nit + iters[0]))


def _fit_batch(y_sorted: np.ndarray, max_iter: int = 100, gtol: float = 1e-8):
    # For negative shapes the PWM start sits close to the endpoint constraint and
    # ascent can drift onto the xi -> -1 ridge; the exponential fit is a second,
    # well-separated start, used for the rows the first pass could not settle.
    xi, s = _pwm_start(y_sorted)
    xi, s, ll, _, conv, _ = _newton(xi, s, y_sorted, max_iter, gtol)
    redo = np.flatnonzero(~conv)
    if len(redo):
        y = y_sorted[redo]
        xe, se, lle, _, conve, _ = _newton(np.zeros(len(redo)), np.log(y.mean(axis=1)), y,
                                           max_iter, gtol)
        # No interior maximum: the supremum over xi >= -1 is the boundary fit
        # xi = -1, sigma = max(y), i.e. a uniform on [0, max(y)].
        boundary = -y.shape[1] * np.log(y[:, -1])
        ridge = ~conve & (boundary >= np.fmax(ll[redo], lle))
        xi[redo] = np.where(conve, xe, np.where(ridge, -1.0, xi[redo]))
        s[redo] = np.where(conve, se, np.where(ridge, np.log(y[:, -1]), s[redo]))
        conv[redo] = conve | ridge
    return xi, np.exp(s), conv


# --------------------------------------------------------------------------
# goodness of fit and threshold selection


def anderson_darling(cdf_values) -> np.ndarray:
    """Anderson-Darling statistic per row of fitted cdf values."""
    z = np.sort(np.atleast_2d(np.asarray(cdf_values, dtype=float)), axis=1)
    z = np.clip(z, 1e-15, 1.0 - 1e-15)
    n = z.shape[1]
    i = np.arange(1, n + 1)
    s = np.sum((2 * i - 1) * (np.log(z) + np.log1p(-z[:, ::-1])), axis=1)
    return -n - s / n


def _gpd_cdf_batch(y, xi, sigma):
    a = y / sigma[:, None]
    t = xi[:, None] * a
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        sf = np.exp(-a * _g(np.maximum(t, -1.0 + 1e-300)))
    sf = np.where(t > -1.0, sf, 0.0)
    return 1.0 - sf


def bootstrap_gof_pvalue(exceedances: Sequence[float], threshold: float,
                         replicates: int = 500, seed: int = 0) -> float:
    """Parametric-bootstrap p-value of the Anderson-Darling GPD test.

    Replicate ``b`` draws from its own stream ``SeedSequence([seed, b])`` so
    the result does not depend on evaluation order.
    """
    if replicates < 100:
        raise ValueError(f"replicates must be at least 100, got {replicates}")
    fit = fit_gpd_mle(exceedances, threshold)
    y = _excesses(exceedances, threshold)
    n = len(y)
    xi, sigma = fit.params.shape, fit.params.scale
    observed = anderson_darling(_gpd_cdf_batch(y[None, :], np.array([xi]), np.array([sigma])))[0]

    u = np.empty((replicates, n))
    for b in range(replicates):
        u[b] = np.random.default_rng(np.random.SeedSequence([int(seed), b])).random(n)
    sim = np.sort(gpd_quantile(u, GpdParams(xi, sigma)), axis=1)
    bxi, bsigma, ok = _fit_batch(sim)
    failed = int(np.sum(~ok))
    if failed > 0.2 * replicates:
        raise ConvergenceFailure(f"{failed} of {replicates} bootstrap refits failed")
    stats = anderson_darling(_gpd_cdf_batch(sim[ok], bxi[ok], bsigma[ok]))
    return float(np.mean(stats > observed))


def forward_stop(p_values: Sequence[float], alpha: float) -> int:
    """Number of rejected hypotheses under the ForwardStop rule."""
    p = np.clip(np.asarray(p_values, dtype=float), 0.0, 1.0 - 1e-16)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    running = np.cumsum(-np.log1p(-p)) / np.arange(1, len(p) + 1)
    ok = np.flatnonzero(running <= alpha)
    return int(ok[-1] + 1) if len(ok) else 0


def select_threshold_forward_stop(sample: Sequence[float],
                                  candidate_quantiles: Sequence[float] = DEFAULT_CANDIDATES,
                                  alpha: float = 0.05, seed: int = 0,
                                  replicates: int = 500) -> ThresholdSelectionResult:
    x = np.asarray(sample, dtype=float)
    q = np.asarray(candidate_quantiles, dtype=float)
    if np.any(np.diff(q) <= 0) or q[0] <= 0 or q[-1] >= 1:
        raise ValueError("candidate quantiles must be strictly ascending inside (0, 1)")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    candidates = np.quantile(x, q)
    if np.any(np.diff(candidates) <= 0):
        raise ValueError("candidate thresholds are not strictly increasing (ties in sample)")
    p_values = np.array([
        bootstrap_gof_pvalue(x[x > c], c, replicates, seed=_candidate_seed(seed, i))
        for i, c in enumerate(candidates)
    ])
    rejected = forward_stop(p_values, alpha)
    if rejected == len(candidates):
        raise AllThresholdsRejected(
            f"all {len(candidates)} candidate thresholds rejected at alpha={alpha}")
    return ThresholdSelectionResult(candidates, q, p_values, rejected)


def _candidate_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), 7919, index]).generate_state(1)[0])


# --------------------------------------------------------------------------
# semiparametric marginal model


@dataclass(frozen=True, eq=False)
class MarginalModel:
    sorted_sample: np.ndarray
    gpd: GpdParams
    name: str = ""
    fit: Optional[GpdFit] = field(default=None, repr=False)
    selection: Optional[ThresholdSelectionResult] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.sorted_sample)

    @property
    def threshold(self) -> float:
        return self.gpd.threshold

    @property
    def splice_probability(self) -> float:
        """Empirical cdf at the threshold, where the GPD tail takes over."""
        return float(self.ecdf(self.gpd.threshold))

    def ecdf(self, x):
        """Rank/(n+1) empirical cdf with average ranks for tied sample values."""
        xs = self.sorted_sample
        x = np.asarray(x, dtype=float)
        lo = np.searchsorted(xs, x, side="left")
        hi = np.searchsorted(xs, x, side="right")
        ties = hi - lo
        rank = np.where(ties > 0, lo + (ties + 1) / 2.0, lo)
        return rank / (len(xs) + 1.0)

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.sorted_sample).tobytes()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "threshold": self.gpd.threshold,
            "threshold_quantile": self.gpd.threshold_quantile,
            "shape": self.gpd.shape,
            "scale": self.gpd.scale,
            "n": self.n,
            "sorted_sample_digest": self.digest(),
        }

    def save(self, path) -> None:
        """Write ``<path>.json`` and the sample sidecar ``<path>.npy``."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.sorted_sample)
        path.with_suffix(".json").write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, meta: dict, sorted_sample) -> "MarginalModel":
        sample = np.asarray(sorted_sample, dtype=float)
        model = cls(sample, GpdParams(meta["shape"], meta["scale"], meta["threshold"],
                                      meta["threshold_quantile"]), meta.get("name", ""))
        if model.digest() != meta["sorted_sample_digest"]:
            raise ValueError(f"sample sidecar does not match digest for {meta.get('name')!r}")
        return model

    @classmethod
    def load(cls, path) -> "MarginalModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls.from_dict(meta, np.load(path.with_suffix(".npy")))


def fit_marginal_model(sample: Sequence[float],
                       candidate_quantiles: Sequence[float] = DEFAULT_CANDIDATES,
                       alpha: float = 0.05, seed: int = 0, name: str = "",
                       replicates: int = 500,
                       threshold_quantile: Optional[float] = None) -> MarginalModel:
    """Threshold selection followed by the GPD fit above the chosen threshold.

    Passing ``threshold_quantile`` skips the sequential tests and uses that
    quantile directly (manual override).
    """
    x = np.asarray(sample, dtype=float)
    if len(x) < MIN_SAMPLE:
        raise InsufficientData(f"need at least {MIN_SAMPLE} observations, got {len(x)}")
    selection = None
    if threshold_quantile is None:
        selection = select_threshold_forward_stop(x, candidate_quantiles, alpha, seed, replicates)
        q = selection.quantile
    else:
        q = float(threshold_quantile)
    mu = float(np.quantile(x, q))
    fit = fit_gpd_mle(x[x > mu], mu)
    gpd = GpdParams(fit.params.shape, fit.params.scale, mu, q)
    logger.info("margin %s: threshold %.4g (q=%.2f), shape %.3f, scale %.3f",
                name, mu, q, gpd.shape, gpd.scale)
    return MarginalModel(np.sort(x), gpd, name, fit, selection)


def pit_forward(x, model: MarginalModel):
    """Semiparametric probability integral transform into (0, 1)."""
    x = np.asarray(x, dtype=float)
    p0 = model.splice_probability
    tail = p0 + (1.0 - p0) * (1.0 - gpd_survival(np.maximum(x, model.threshold), model.gpd))
    out = np.where(x > model.threshold, tail, model.ecdf(x))
    # keep strictly inside (0, 1) where the GPD survival underflows
    out = np.clip(out, 0.5 / (model.n + 1.0), 1.0 - 1e-16)
    return out if out.ndim else float(out)


def _body_nodes(model: MarginalModel):
    xs = model.sorted_sample
    body = np.unique(xs[xs < model.threshold])
    probs = model.ecdf(body)
    return (np.append(probs, model.splice_probability), np.append(body, model.threshold))


def pit_inverse(u, model: MarginalModel):
    """Inverse of :func:`pit_forward`.

    Below the splice point the sorted sample is linearly interpolated; above
    it the GPD quantile of the rescaled tail probability is returned.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)) or np.any(np.isnan(u)):
        raise ValueError("pit_inverse requires 0 < u < 1")
    p0 = model.splice_probability
    probs, values = _body_nodes(model)
    body = np.interp(u, probs, values)
    tail_u = np.clip((u - p0) / (1.0 - p0), 0.0, np.nextafter(1.0, 0.0))
    tail = gpd_quantile(tail_u, model.gpd)
    out = np.where(u > p0, tail, body)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# impact transforms


@dataclass(frozen=True)
class Transform:
    """Marginal transform ``H`` applied to PIT values inside impact functions.

    ``kind`` is one of ``identity``, ``exponential``, ``gpd`` or ``raw``. The
    ``raw`` kind bypasses the PIT entirely so impacts are plain weighted sums
    of data values.
    """

    kind: str = "exponential"
    shape: float = 0.0
    scale: float = 1.0

    KINDS = ("identity", "exponential", "gpd", "raw")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transform {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "gpd" and not self.scale > 0:
            raise ValueError("gpd transform needs a positive scale")

    @property
    def reference_gpd(self) -> GpdParams:
        if self.kind == "exponential":
            return GpdParams(0.0, 1.0)
        if self.kind == "gpd":
            return GpdParams(self.shape, self.scale)
        raise ValueError(f"transform {self.kind!r} has no GPD reference distribution")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


def transform_margin_H(u, spec: Transform):
    u = np.asarray(u, dtype=float)
    if spec.kind in ("identity", "raw"):
        out = u
    else:
        if np.any((u <= 0.0) | (u >= 1.0)):
            raise ValueError(f"{spec.kind} transform is unbounded at 0 and 1")
        if spec.kind == "exponential":
            out = -np.log1p(-u)
        else:
            out = gpd_quantile(u, GpdParams(spec.shape, spec.scale))
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)
