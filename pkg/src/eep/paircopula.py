"""Bivariate Archimedean building blocks for vine copulas.

Families: independence, Clayton, Gumbel, Frank and Joe, each with the 0, 90,
180 and 270 degree rotations. The h-function conditioned on the second
argument is ``h(u | v) = dC(u, v)/dv``; conditioned on the first it is
``dC(u, v)/du``.

Rotations follow the usual pair-copula conventions::

    C90(u, v)  = v - C(1 - u, v)
    C180(u, v) = u + v - 1 + C(1 - u, 1 - v)
    C270(u, v) = u - C(u, 1 - v)
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConvergenceFailure, OutOfRange, ZeroVariance

EPS = 1e-10
ROTATIONS = (0, 90, 180, 270)


class CopulaFamily(str, enum.Enum):
    INDEPENDENCE = "independence"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    JOE = "joe"


# search bounds for theta; beyond them |tau| > 0.93 and likelihoods go flat
BOUNDS = {
    CopulaFamily.CLAYTON: (1e-4, 28.0),
    CopulaFamily.GUMBEL: (1.0 + 1e-6, 50.0),
    CopulaFamily.JOE: (1.0 + 1e-6, 50.0),
    CopulaFamily.FRANK: (-35.0, 35.0),
}


@dataclass(frozen=True)
class PairCopula:
    family: CopulaFamily = CopulaFamily.INDEPENDENCE
    rotation: int = 0
    theta: Optional[float] = None

    def __post_init__(self):
        fam = CopulaFamily(self.family)
        object.__setattr__(self, "family", fam)
        if self.rotation not in ROTATIONS:
            raise ValueError(f"rotation must be one of {ROTATIONS}, got {self.rotation}")
        if fam is CopulaFamily.INDEPENDENCE:
            object.__setattr__(self, "theta", None)
            object.__setattr__(self, "rotation", 0)
            return
        if self.theta is None:
            raise ValueError(f"{fam.value} copula needs a parameter")
        theta = float(self.theta)
        object.__setattr__(self, "theta", theta)
        if fam is CopulaFamily.CLAYTON and not theta > 0:
            raise ValueError("Clayton theta must be positive (use rotations for negative dependence)")
        if fam in (CopulaFamily.GUMBEL, CopulaFamily.JOE) and not theta >= 1:
            raise ValueError(f"{fam.value} theta must be >= 1")
        if fam is CopulaFamily.FRANK and theta == 0:
            raise ValueError("Frank theta must be nonzero")

    @property
    def is_independence(self) -> bool:
        return self.family is CopulaFamily.INDEPENDENCE

    @property
    def n_params(self) -> int:
        return 0 if self.is_independence else 1

    def to_dict(self) -> dict:
        return {"family": self.family.value, "rotation": self.rotation, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "PairCopula":
        return cls(CopulaFamily(d["family"]), int(d.get("rotation", 0)), d.get("theta"))

    def __str__(self):
        if self.is_independence:
            return "Independence"
        return f"{self.family.value.capitalize()}{self.rotation or ''}({self.theta:.4g})"


INDEPENDENCE = PairCopula()


def _clamp(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


# --------------------------------------------------------------------------
# unrotated families: cdf, pdf, h(u | v) = dC/dv and its inverse in u


def _clayton_cdf(u, v, th):
    return np.exp(-np.log(u ** -th + v ** -th - 1.0) / th)


def _clayton_pdf(u, v, th):
    logs = np.log(u ** -th + v ** -th - 1.0)
    lp = (np.log1p(th) - (th + 1.0) * (np.log(u) + np.log(v)) - (2.0 + 1.0 / th) * logs)
    return np.exp(lp)


def _clayton_h(u, v, th):
    logs = np.log(u ** -th + v ** -th - 1.0)
    return np.exp(-(th + 1.0) * np.log(v) - (1.0 + 1.0 / th) * logs)


def _clayton_hinv(w, v, th):
    # solve w = v^(-th-1) S^(-1-1/th) for u, S = u^-th + v^-th - 1
    a = np.log(w) + (th + 1.0) * np.log(v)
    s = np.exp(-a * th / (1.0 + th))
    return np.exp(-np.log(np.maximum(s - v ** -th + 1.0, 1e-300)) / th)


def _gumbel_parts(u, v, th):
    x = -np.log(u)
    y = -np.log(v)
    a = x ** th + y ** th
    return x, y, a, a ** (1.0 / th)


def _gumbel_cdf(u, v, th):
    return np.exp(-_gumbel_parts(u, v, th)[3])


def _gumbel_pdf(u, v, th):
    x, y, a, r = _gumbel_parts(u, v, th)
    lp = (-r + x + y + (th - 1.0) * (np.log(x) + np.log(y))
          + (1.0 / th - 2.0) * np.log(a) + np.log(r + th - 1.0))
    return np.exp(lp)


def _gumbel_h(u, v, th):
    x, y, a, r = _gumbel_parts(u, v, th)
    lh = -r + y + (th - 1.0) * np.log(y) + (1.0 / th - 1.0) * np.log(a)
    return np.exp(lh)


def _expm1_ratio(a, th):
    """(exp(-th a) - 1) as expm1, kept separate for readability."""
    return np.expm1(-th * a)


def _frank_cdf(u, v, th):
    num = _expm1_ratio(u, th) * _expm1_ratio(v, th)
    return -np.log1p(num / np.expm1(-th)) / th


def _frank_pdf(u, v, th):
    d = -np.expm1(-th)
    den = d - (-_expm1_ratio(u, th)) * (-_expm1_ratio(v, th))
    return th * d * np.exp(-th * (u + v)) / den ** 2


def _frank_h(u, v, th):
    a = _expm1_ratio(u, th)
    b = _expm1_ratio(v, th)
    return np.exp(-th * v) * a / (np.expm1(-th) + a * b)


def _frank_hinv(w, v, th):
    b = _expm1_ratio(v, th)
    a = w * np.expm1(-th) / (np.exp(-th * v) - w * b)
    return -np.log1p(a) / th


def _joe_parts(u, v, th):
    ub = (1.0 - u) ** th
    vb = (1.0 - v) ** th
    return ub, vb, ub + vb - ub * vb


def _joe_cdf(u, v, th):
    return 1.0 - _joe_parts(u, v, th)[2] ** (1.0 / th)


def _joe_pdf(u, v, th):
    ub, vb, s = _joe_parts(u, v, th)
    lp = ((1.0 / th - 2.0) * np.log(s) + (th - 1.0) * (np.log1p(-u) + np.log1p(-v))
          + np.log(th - 1.0 + s))
    return np.exp(lp)


def _joe_h(u, v, th):
    ub, vb, s = _joe_parts(u, v, th)
    return np.exp((1.0 / th - 1.0) * np.log(s) + (th - 1.0) * np.log1p(-v)) * (1.0 - ub)


_FAMILY_FUNCS = {
    CopulaFamily.CLAYTON: (_clayton_cdf, _clayton_pdf, _clayton_h, _clayton_hinv),
    CopulaFamily.GUMBEL: (_gumbel_cdf, _gumbel_pdf, _gumbel_h, None),
    CopulaFamily.FRANK: (_frank_cdf, _frank_pdf, _frank_h, _frank_hinv),
    CopulaFamily.JOE: (_joe_cdf, _joe_pdf, _joe_h, None),
}


def _bisect_hinv(h, w, v, th, iters: int = 60):
    lo = np.full(np.shape(w), 0.0)
    hi = np.full(np.shape(w), 1.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = h(np.clip(mid, EPS, 1 - EPS), v, th) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _newton_hinv(h, pdf, w, v, th, tol: float = 1e-13, max_iter: int = 100):
    """Bracketed Newton on u -> h(u | v) - w; d/du h(u | v) is the copula density.

    Steps leaving the current bracket are replaced by bisection, so the
    bracket shrinks monotonically as in plain bisection.
    """
    w, v = np.broadcast_arrays(w, v)
    lo = np.zeros(w.shape)
    hi = np.ones(w.shape)
    x = np.array(w, dtype=float)
    for _ in range(max_iter):
        xc = np.clip(x, EPS, 1 - EPS)
        f = h(xc, v, th) - w
        lo = np.where(f < 0, x, lo)
        hi = np.where(f < 0, hi, x)
        with np.errstate(all="ignore"):
            step = f / pdf(xc, v, th)
            nxt = x - step
        bad = ~np.isfinite(nxt) | (nxt <= lo) | (nxt >= hi)
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        done = np.all((np.abs(nxt - x) < tol) | (hi - lo < tol))
        x = nxt
        if done:
            break
    return x


def _base_h(fam, u, v, th):
    return _FAMILY_FUNCS[fam][2](u, v, th)


def _base_hinv(fam, w, v, th):
    closed = _FAMILY_FUNCS[fam][3]
    if closed is not None:
        return closed(w, v, th)
    funcs = _FAMILY_FUNCS[fam]
    return _newton_hinv(funcs[2], funcs[1], w, v, th)


# --------------------------------------------------------------------------
# public evaluation with rotations


def _broadcast(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    return [np.array(a) for a in arrs]


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def copula_cdf(u, v, pc: PairCopula):
    u, v = _broadcast(u, v)
    like = u
    if pc.is_independence:
        return _scalar_or_array(u * v, like)
    cdf = _FAMILY_FUNCS[pc.family][0]
    th = pc.theta
    # exact boundary values; the families are evaluated on the open square
    uc, vc = np.clip(u, 1e-300, 1.0), np.clip(v, 1e-300, 1.0)
    with np.errstate(all="ignore"):
        if pc.rotation == 0:
            out = _cdf_inner(cdf, uc, vc, th)
        elif pc.rotation == 90:
            out = vc - _cdf_inner(cdf, 1.0 - uc, vc, th)
        elif pc.rotation == 180:
            out = uc + vc - 1.0 + _cdf_inner(cdf, 1.0 - uc, 1.0 - vc, th)
        else:
            out = uc - _cdf_inner(cdf, uc, 1.0 - vc, th)
    out = np.clip(out, 0.0, np.minimum(u, v))
    out = np.where((u <= 0) | (v <= 0), 0.0, out)
    return _scalar_or_array(out, like)


def _cdf_inner(cdf, u, v, th):
    """Base cdf with exact margins on the boundary of the unit square."""
    out = np.empty_like(u)
    zero = (u <= 0) | (v <= 0)
    one_u = u >= 1
    one_v = v >= 1
    inner = ~(zero | one_u | one_v)
    out[inner] = cdf(u[inner], v[inner], th)
    out[one_u] = v[one_u]
    out[one_v] = u[one_v]
    out[zero] = 0.0
    return out


def copula_pdf(u, v, pc: PairCopula):
    u, v = _broadcast(u, v)
    like = u
    if pc.is_independence:
        return _scalar_or_array(np.ones_like(u), like)
    u, v = _clamp(u), _clamp(v)
    a, b = _rotate_args(u, v, pc.rotation)
    with np.errstate(over="ignore"):
        out = _FAMILY_FUNCS[pc.family][1](a, b, pc.theta)
    return _scalar_or_array(out, like)


def copula_logpdf(u, v, pc: PairCopula):
    with np.errstate(divide="ignore"):
        return np.log(copula_pdf(u, v, pc))


def _rotate_args(u, v, rotation):
    if rotation == 0:
        return u, v
    if rotation == 90:
        return 1.0 - u, v
    if rotation == 180:
        return 1.0 - u, 1.0 - v
    return u, 1.0 - v


def hfunc(u, v, pc: PairCopula, margin: str = "second"):
    """Conditional distribution of one argument given the other.

    ``margin="second"`` returns ``dC(u, v)/dv`` (distribution of ``u`` given
    ``v``); ``margin="first"`` returns ``dC(u, v)/du`` (distribution of ``v``
    given ``u``).
    """
    u, v = _broadcast(u, v)
    like = u
    if margin not in ("first", "second"):
        raise ValueError("margin must be 'first' or 'second'")
    if pc.is_independence:
        out = u if margin == "second" else v
        return _scalar_or_array(out.copy(), like)
    u, v = _clamp(u), _clamp(v)
    f, th, r = pc.family, pc.theta, pc.rotation
    # base h(a | b) = dC0(a, b)/db; by symmetry dC0(a, b)/da = h(b | a)
    if margin == "second":
        if r == 0:
            out = _base_h(f, u, v, th)
        elif r == 90:
            out = 1.0 - _base_h(f, 1.0 - u, v, th)
        elif r == 180:
            out = 1.0 - _base_h(f, 1.0 - u, 1.0 - v, th)
        else:
            out = _base_h(f, u, 1.0 - v, th)
    else:
        if r == 0:
            out = _base_h(f, v, u, th)
        elif r == 90:
            out = _base_h(f, v, 1.0 - u, th)
        elif r == 180:
            out = 1.0 - _base_h(f, 1.0 - v, 1.0 - u, th)
        else:
            out = 1.0 - _base_h(f, 1.0 - v, u, th)
    return _scalar_or_array(np.clip(out, 0.0, 1.0), like)


def hinv(w, v, pc: PairCopula, margin: str = "second"):
    """Inverse of :func:`hfunc` in its free argument.

    With ``margin="second"`` solves ``hfunc(x, v) = w`` for ``x``; with
    ``margin="first"`` solves ``hfunc(v, x, margin="first") = w`` for ``x``,
    i.e. ``v`` is then the conditioning first argument.
    """
    w, v = _broadcast(w, v)
    like = w
    if margin not in ("first", "second"):
        raise ValueError("margin must be 'first' or 'second'")
    if pc.is_independence:
        return _scalar_or_array(w.copy(), like)
    w, v = _clamp(w), _clamp(v)
    f, th, r = pc.family, pc.theta, pc.rotation
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if margin == "second":
            if r == 0:
                out = _base_hinv(f, w, v, th)
            elif r == 90:
                out = 1.0 - _base_hinv(f, 1.0 - w, v, th)
            elif r == 180:
                out = 1.0 - _base_hinv(f, 1.0 - w, 1.0 - v, th)
            else:
                out = _base_hinv(f, w, 1.0 - v, th)
        else:
            if r == 0:
                out = _base_hinv(f, w, v, th)
            elif r == 90:
                out = _base_hinv(f, w, 1.0 - v, th)
            elif r == 180:
                out = 1.0 - _base_hinv(f, 1.0 - w, 1.0 - v, th)
            else:
                out = 1.0 - _base_hinv(f, 1.0 - w, v, th)
    return _scalar_or_array(_clamp(out), like)


# --------------------------------------------------------------------------
# Kendall's tau


def kendall_tau_empirical(x: Sequence[float], y: Sequence[float]) -> float:
    """Tau-b with tie correction (Knight's O(n log n) algorithm via scipy)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("x and y must be one-dimensional of equal length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVariance("Kendall's tau is undefined for a constant sequence")
    return float(stats.kendalltau(x, y, variant="b").statistic)


def _generator_ratio(family: CopulaFamily, theta: float):
    """phi(t) / phi'(t) for the Archimedean generator of ``family``."""
    if family is CopulaFamily.FRANK:
        def ratio(t):
            e = math.expm1(-theta * t)
            return -math.log(e / math.expm1(-theta)) * e / (theta * math.exp(-theta * t))
    elif family is CopulaFamily.JOE:
        def ratio(t):
            s = (1.0 - t) ** theta
            if s >= 1.0:
                return 0.0
            return math.log1p(-s) * (1.0 - s) / (theta * (1.0 - t) ** (theta - 1.0))
    elif family is CopulaFamily.CLAYTON:
        def ratio(t):
            return (t ** (theta + 1.0) - t) / theta
    elif family is CopulaFamily.GUMBEL:
        def ratio(t):
            return t * math.log(t) / theta if t > 0 else 0.0
    else:
        raise ValueError(f"no generator for {family}")
    return ratio


@functools.lru_cache(maxsize=4096)
def tau_of_theta(family: CopulaFamily, theta: float) -> float:
    """Kendall's tau of the unrotated family: ``1 + 4 * int_0^1 phi/phi' dt``."""
    family = CopulaFamily(family)
    if family is CopulaFamily.INDEPENDENCE:
        return 0.0
    if family is CopulaFamily.FRANK:
        # Debye form; tau is odd in theta and the generator integral is stiff
        a = abs(float(theta))
        d1, _ = integrate.quad(lambda t: t / math.expm1(t) if t > 0 else 1.0, 0.0, a)
        return math.copysign(1.0 - 4.0 / a + 4.0 * d1 / a ** 2, theta)
    val, _ = integrate.quad(_generator_ratio(family, float(theta)), 0.0, 1.0,
                            epsabs=1e-11, epsrel=1e-9, limit=200)
    return 1.0 + 4.0 * val


def _rotation_sign(rotation: int) -> int:
    return -1 if rotation in (90, 270) else 1


def tau_to_parameter(tau: float, family: CopulaFamily, rotation: int = 0) -> float:
    """Invert the tau(theta) map; rotations 90/270 carry negative tau."""
    family = CopulaFamily(family)
    t = _rotation_sign(rotation) * float(tau)
    if family is CopulaFamily.INDEPENDENCE:
        raise ValueError("independence copula has no parameter")
    if family is CopulaFamily.FRANK:
        if rotation not in (0, 180):
            raise OutOfRange("Frank is radially symmetric; use rotation 0 with signed theta")
        if abs(t) < 1e-8:
            return math.copysign(1e-6, t if t != 0 else 1.0)
        lo, hi = (1e-6, BOUNDS[family][1]) if t > 0 else (BOUNDS[family][0], -1e-6)
    else:
        if not 0.0 < t < 1.0:
            raise OutOfRange(f"tau={tau} infeasible for {family.value} rotated {rotation}")
        if family is CopulaFamily.CLAYTON:
            return float(np.clip(2.0 * t / (1.0 - t), *BOUNDS[family]))
        if family is CopulaFamily.GUMBEL:
            return float(np.clip(1.0 / (1.0 - t), *BOUNDS[family]))
        lo, hi = BOUNDS[family]
    flo, fhi = tau_of_theta(family, lo) - t, tau_of_theta(family, hi) - t
    if flo * fhi > 0:
        return lo if abs(flo) < abs(fhi) else hi
    return float(optimize.brentq(lambda th: tau_of_theta(family, th) - t, lo, hi, xtol=1e-10))


# --------------------------------------------------------------------------
# estimation


def pair_loglik(u, v, pc: PairCopula) -> float:
    if pc.is_independence:
        return 0.0
    return float(np.sum(copula_logpdf(u, v, pc)))


def fit_pair_copula(u, v, family: CopulaFamily, rotation: int = 0,
                    tau: Optional[float] = None):
    """One-dimensional maximum likelihood fit; returns ``(PairCopula, loglik)``."""
    family = CopulaFamily(family)
    u, v = _clamp(u), _clamp(v)
    if family is CopulaFamily.INDEPENDENCE:
        return INDEPENDENCE, 0.0
    if tau is None:
        tau = kendall_tau_empirical(u, v)
    theta0 = tau_to_parameter(tau, family, rotation)
    lo, hi = BOUNDS[family]
    if family is CopulaFamily.FRANK:
        lo, hi = (1e-6, hi) if theta0 > 0 else (lo, -1e-6)

    def nll(th):
        val = pair_loglik(u, v, PairCopula(family, rotation, th))
        return -val if np.isfinite(val) else 1e300

    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-7, "maxiter": 500})
    if not np.isfinite(res.fun) or res.fun >= 1e300:
        raise ConvergenceFailure(f"{family.value} likelihood search failed")
    best, best_nll = float(res.x), float(res.fun)
    init_nll = nll(theta0)
    if init_nll < best_nll:
        best, best_nll = theta0, init_nll
    return PairCopula(family, rotation, best), -best_nll


def independence_test(u, v, level: float = 0.05):
    """Kendall-tau test of independence; returns ``(is_independent, statistic)``."""
    n = len(u)
    if n < 10:
        raise ValueError(f"independence test needs n >= 10, got {n}")
    tau = kendall_tau_empirical(u, v)
    stat = abs(tau) * math.sqrt(9.0 * n * (n - 1) / (2.0 * (2 * n + 5)))
    return bool(stat <= special.ndtri(1.0 - level / 2.0)), float(stat)


DEFAULT_CANDIDATES = tuple(
    [(CopulaFamily.FRANK, 0)]
    + [(f, r) for f in (CopulaFamily.CLAYTON, CopulaFamily.GUMBEL, CopulaFamily.JOE)
       for r in ROTATIONS]
)


def select_pair_family(u, v, candidates: Iterable = DEFAULT_CANDIDATES,
                       criterion: str = "bic", level: float = 0.05,
                       return_loglik: bool = False):
    """Pick the candidate minimising AIC or BIC.

    Returns the independence copula without fitting when the Kendall test
    does not reject at ``level``. Candidates whose rotation points the wrong
    way for the sign of the empirical tau are skipped.
    """
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    u, v = _clamp(u), _clamp(v)
    n = len(u)
    indep, _ = independence_test(u, v, level)
    if indep:
        return (INDEPENDENCE, 0.0) if return_loglik else INDEPENDENCE
    tau = kendall_tau_empirical(u, v)
    penalty = 2.0 if criterion == "aic" else math.log(n)
    best = (INDEPENDENCE, 0.0, 0.0)
    for family, rotation in candidates:
        family = CopulaFamily(family)
        if family is CopulaFamily.INDEPENDENCE:
            continue
        if family is not CopulaFamily.FRANK and _rotation_sign(rotation) * tau <= 0:
            continue
        try:
            pc, ll = fit_pair_copula(u, v, family, rotation, tau=tau)
        except OutOfRange:
            continue
        score = -2.0 * ll + penalty
        if score < best[2]:
            best = (pc, ll, score)
    return (best[0], best[1]) if return_loglik else best[0]


def sample_pair(n: int, pc: PairCopula, seed=None) -> np.ndarray:
    """Conditional-distribution sampler; returns an ``(n, 2)`` array."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = rng.random((n, 2))
    w1 = _clamp(w[:, 0])
    return np.column_stack([w1, hinv(w[:, 1], w1, pc, margin="first")])
