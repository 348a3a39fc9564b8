"""Stationary D-vine copula over time-stacked slices.

Positions in a block of ``m = (p + 1) * d`` variables are time-major: position
``q = s * d + a`` holds variable ``cross_order[a]`` at slice ``s``. Tree ``t``
of the D-vine has edges ``(j, j + t | j + 1 .. j + t - 1)`` and every edge is
assigned to the translation class ``(t, j mod d)``, so edges that coincide up
to a whole-slice time shift share one pair copula.

The same recursion runs on a whole series laid out as one long row. Each
distinct edge is then evaluated once; this is how classes are fitted and
how the series log-likelihood used by the information criteria is formed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (ConvergenceFailure, DataError, HorizonExceedsOrder,
                     InsufficientData, NonFiniteDensity, ZeroVariance)
from .paircopula import (DEFAULT_CANDIDATES, INDEPENDENCE, PairCopula,
                         copula_logpdf, hfunc, hinv, kendall_tau_empirical,
                         select_pair_family)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EPS = 1e-10


@dataclass(frozen=True)
class BlockMatrix:
    """Sliding windows ``(U_t, ..., U_{t+p})`` flattened time-major."""

    rows: np.ndarray
    d: int
    p: int

    @property
    def n_blocks(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return (self.p + 1) * self.d

    def series(self) -> np.ndarray:
        """Recover the underlying ``(n_blocks + p) x d`` series."""
        first = self.rows[0].reshape(self.p + 1, self.d)
        rest = self.rows[1:, -self.d:]
        return np.vstack([first, rest])


def build_blocks(pit_data, p: int) -> BlockMatrix:
    x = np.asarray(pit_data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if p < 0:
        raise ValueError("Markov order must be nonnegative")
    if n <= p + 1:
        raise InsufficientData(f"need more than p+1={p + 1} observations, got {n}")
    if not np.all((x > 0) & (x < 1)):
        raise DataError("PIT data must lie strictly inside (0, 1)")
    win = np.lib.stride_tricks.sliding_window_view(x, (p + 1, d))[:, 0]
    return BlockMatrix(np.ascontiguousarray(win.reshape(n - p, (p + 1) * d)), d, p)


def select_cross_section_order(pit_data) -> tuple:
    """Greedy maximum-weight path on |tau|; ties go to the lowest index."""
    x = np.asarray(pit_data, dtype=float)
    d = x.shape[1]
    if d == 1:
        return (0,)
    w = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            w[i, j] = w[j, i] = abs(kendall_tau_empirical(x[:, i], x[:, j]))
    best = max(((w[i, j], -i, -j) for i in range(d) for j in range(i + 1, d)))
    path = [-best[1], -best[2]]
    used = set(path)
    while len(path) < d:
        cand = []
        for k in range(d):
            if k in used:
                continue
            cand.append((w[path[0], k], -k, 0))
            cand.append((w[path[-1], k], -k, 1))
        # heaviest edge; then lowest new index; then prefer extending the tail
        weight, negk, end = max(cand, key=lambda c: (c[0], c[1], c[2]))
        if end == 0:
            path.insert(0, -negk)
        else:
            path.append(-negk)
        used.add(-negk)
    return tuple(int(k) for k in path)


@dataclass(frozen=True)
class VineStructure:
    m: int
    order: tuple
    edges: tuple  # edges[t-1] = tuple of (a, b, conditioning positions)


@dataclass(frozen=True)
class StationaryVine:
    d: int
    p: int
    cross_order: tuple
    classes: Mapping = field(default_factory=dict)
    marginals: tuple = ()

    def __post_init__(self):
        order = tuple(int(k) for k in self.cross_order)
        if sorted(order) != list(range(self.d)):
            raise ValueError(f"cross_order must be a permutation of 0..{self.d - 1}")
        object.__setattr__(self, "cross_order", order)
        clean = {}
        for (t, r), pc in dict(self.classes).items():
            if not (1 <= t < self.m and 0 <= r < self.d and r <= self.m - 1 - t):
                raise ValueError(f"class ({t}, {r}) does not exist for d={self.d}, p={self.p}")
            clean[(int(t), int(r))] = pc
        object.__setattr__(self, "classes", MappingProxyType(clean))

    @property
    def m(self) -> int:
        return (self.p + 1) * self.d

    def class_keys(self):
        return [(t, r) for t in range(1, self.m) for r in range(min(self.d, self.m - t))]

    def copula(self, t: int, r: int) -> PairCopula:
        return self.classes.get((t, r), INDEPENDENCE)

    def edge_copula(self, t: int, j: int) -> PairCopula:
        """Pair copula on block edge ``(j, j + t)`` in tree ``t``."""
        if not (1 <= t < self.m and 0 <= j <= self.m - 1 - t):
            raise IndexError(f"no edge ({t}, {j}) in a {self.m}-variable D-vine")
        return self.copula(t, j % self.d)

    @property
    def n_params(self) -> int:
        return sum(pc.n_params for pc in self.classes.values())

    def structure(self) -> VineStructure:
        m = self.m
        edges = tuple(
            tuple((j, j + t, tuple(range(j + 1, j + t))) for j in range(m - t))
            for t in range(1, m)
        )
        order = tuple((q // self.d, self.cross_order[q % self.d]) for q in range(m))
        return VineStructure(m, order, edges)

    def permutation(self, n_slices: Optional[int] = None) -> np.ndarray:
        """Natural time-major column index held at each vine position."""
        n_slices = self.p + 1 if n_slices is None else n_slices
        base = np.asarray(self.cross_order)
        return (np.arange(n_slices)[:, None] * self.d + base[None, :]).ravel()

    def to_dict(self) -> dict:
        classes = []
        for (t, r) in sorted(self.classes):
            pc = self.classes[(t, r)]
            classes.append({
                "tree": t,
                "position": r,
                "displacement": (r + t) // self.d,
                "pair": [self.cross_order[r], self.cross_order[(r + t) % self.d]],
                **pc.to_dict(),
            })
        return {"schema_version": SCHEMA_VERSION, "d": self.d, "p": self.p,
                "cross_order": list(self.cross_order), "classes": classes}

    @classmethod
    def from_dict(cls, data: dict, marginals: tuple = ()) -> "StationaryVine":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported vine schema {data.get('schema_version')!r}")
        classes = {(int(c["tree"]), int(c["position"])): PairCopula.from_dict(c)
                   for c in data["classes"]}
        return cls(int(data["d"]), int(data["p"]), tuple(data["cross_order"]), classes, marginals)


# --------------------------------------------------------------------------
# core recursions on arrays laid out in vine position order


def _forward(U, d, classes, tmax, select=None, m_block=None, want_w=False):
    """Run the D-vine tree recursion over the columns of ``U`` (S x M).

    Returns per-row log-density and, with ``want_w``, the Rosenblatt image.
    ``select(t, r, a, b)`` fits class copulas tree by tree from the pooled
    pseudo-observations; ``classes`` is updated in place.
    """
    S, M = U.shape
    tmax = min(tmax, M - 1)
    m_block = M if m_block is None else m_block
    loglik = np.zeros(S)
    W = U.copy() if want_w else None
    L, R = U[:, :-1], U[:, 1:]
    for t in range(1, tmax + 1):
        E = M - t
        hs = L.copy()
        hf = R.copy()
        for r in range(min(d, E)):
            idx = slice(r, E, d)
            a, b = L[:, idx], R[:, idx]
            if select is not None and r <= m_block - 1 - t:
                classes[(t, r)] = select(t, r, a.ravel(), b.ravel())
            pc = classes.get((t, r), INDEPENDENCE)
            if pc.is_independence:
                continue
            lc = copula_logpdf(a, b, pc)
            loglik += lc.sum(axis=1)
            hs[:, idx] = hfunc(a, b, pc, "second")
            hf[:, idx] = hfunc(a, b, pc, "first")
        if want_w:
            if t < tmax:
                W[:, t] = hf[:, 0]
            else:
                W[:, t:] = hf
        L, R = hs[:, :-1], hf[:, 1:]
    return loglik, W


def _inverse(W, d, classes, tmax, fixed=None):
    """Inverse Rosenblatt chain; the first ``fixed.shape[1]`` positions are given."""
    S, M = W.shape
    tmax = min(tmax, M - 1)
    n_fixed = 0 if fixed is None else fixed.shape[1]
    U = np.empty((S, M))
    # Lt[t][:, j] = F(u_j | u_{j+1} .. u_{j+t-1}); Lt[1] holds u itself
    Lt = {t: np.empty((S, M - t)) for t in range(1, tmax + 1)}
    for k in range(M):
        T = min(k, tmax)
        G = [None] * (T + 2)
        if k < n_fixed:
            G[1] = fixed[:, k]
            for t in range(1, T + 1):
                pc = classes.get((t, (k - t) % d), INDEPENDENCE)
                G[t + 1] = hfunc(Lt[t][:, k - t], G[t], pc, "first")
        else:
            G[T + 1] = W[:, k]
            for t in range(T, 0, -1):
                pc = classes.get((t, (k - t) % d), INDEPENDENCE)
                G[t] = hinv(G[t + 1], Lt[t][:, k - t], pc, "first")
        U[:, k] = G[1]
        if tmax >= 1 and k < M - 1:
            Lt[1][:, k] = G[1]
        for t in range(1, T + 1):
            if t + 1 <= tmax and k - t <= M - t - 2:
                pc = classes.get((t, (k - t) % d), INDEPENDENCE)
                Lt[t + 1][:, k - t] = hfunc(Lt[t][:, k - t], G[t], pc, "second")
    return U


def _as_rows(x, width):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != width:
        raise ValueError(f"expected rows of width {width}, got {arr.shape[1]}")
    return arr, single


def _clamp(x):
    return np.clip(x, EPS, 1.0 - EPS)


# --------------------------------------------------------------------------
# fitting and likelihoods


def fit_stationary_vine(blocks: BlockMatrix, cross_order: Optional[Sequence[int]] = None,
                        families: Iterable = DEFAULT_CANDIDATES, criterion: str = "bic",
                        level: float = 0.05, marginals: tuple = ()) -> StationaryVine:
    """Sequential tree-by-tree selection and fitting of all translation classes."""
    d, p = blocks.d, blocks.p
    series = blocks.series()
    if cross_order is None:
        cross_order = select_cross_section_order(series)
    vine = StationaryVine(d, p, tuple(cross_order))
    families = tuple(families)
    U = _clamp(series[:, list(vine.cross_order)].reshape(1, -1))

    def select(t, r, a, b):
        try:
            return select_pair_family(a, b, families, criterion=criterion, level=level)
        except (ConvergenceFailure, ZeroVariance, ValueError) as exc:
            log.warning("class (tree %d, position %d) falls back to independence: %s", t, r, exc)
            return INDEPENDENCE

    classes = {}
    _forward(U, d, classes, vine.m - 1, select=select, m_block=vine.m)
    fitted = {k: pc for k, pc in classes.items() if not pc.is_independence}
    return StationaryVine(d, p, vine.cross_order, fitted, tuple(marginals))


def vine_log_density(vine: StationaryVine, rows) -> np.ndarray:
    """Log copula density of each block row (natural column order)."""
    arr, _ = _as_rows(rows, vine.m)
    U = _clamp(arr[:, vine.permutation()])
    ll, _ = _forward(U, vine.d, vine.classes, vine.m - 1)
    return ll


def vine_loglik(vine: StationaryVine, blocks: BlockMatrix) -> float:
    ll = float(np.sum(vine_log_density(vine, blocks.rows)))
    if not np.isfinite(ll):
        raise NonFiniteDensity("vine log-likelihood is not finite")
    return ll


def series_loglik(vine: StationaryVine, series) -> float:
    """Log-likelihood of a whole PIT series, each distinct edge counted once."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    U = _clamp(x[:, list(vine.cross_order)].reshape(1, -1))
    ll, _ = _forward(U, vine.d, vine.classes, vine.m - 1)
    val = float(ll[0])
    if not np.isfinite(val):
        raise NonFiniteDensity("series log-likelihood is not finite")
    return val


def criteria_values(loglik: float, nu: int, n: int, q: Sequence[int], mt: Sequence[int],
                    psi0: float = 0.9) -> dict:
    """AIC, BIC and mBICV from their ingredients; ``q[t-1]`` and ``mt[t-1]`` per tree."""
    aic = -2.0 * loglik + 2.0 * nu
    bic = -2.0 * loglik + nu * math.log(n)
    pen = 0.0
    for t, (qt, m_t) in enumerate(zip(q, mt), start=1):
        pen += qt * t * math.log(psi0) + (m_t - qt) * math.log1p(-psi0 ** t)
    return {"aic": aic, "bic": bic, "mbicv": bic - 2.0 * pen}


def information_criteria(vine: StationaryVine, blocks: BlockMatrix, psi0: float = 0.9) -> dict:
    """AIC/BIC/mBICV with the series log-likelihood and ``n = n_blocks``."""
    if not 0.0 < psi0 < 1.0:
        raise ValueError("psi0 must lie in (0, 1)")
    ll = series_loglik(vine, blocks.series())
    trees = range(1, vine.m)
    q = [sum(1 for (t, _), pc in vine.classes.items() if t == tt and not pc.is_independence)
         for tt in trees]
    mt = [min(vine.d, vine.m - tt) for tt in trees]
    out = criteria_values(ll, vine.n_params, blocks.n_blocks, q, mt, psi0)
    out["loglik"] = ll
    out["n_params"] = vine.n_params
    return out


def select_markov_order(pit_data, orders: Iterable[int], cross_order=None,
                        families: Iterable = DEFAULT_CANDIDATES, criterion: str = "bic",
                        level: float = 0.05, psi0: float = 0.9) -> dict:
    """Fit one vine per order and tabulate the three criteria."""
    x = np.asarray(pit_data, dtype=float)
    if cross_order is None:
        cross_order = select_cross_section_order(x)
    table, vines = [], {}
    for p in orders:
        blocks = build_blocks(x, p)
        vine = fit_stationary_vine(blocks, cross_order, families, criterion, level)
        row = {"p": p, **information_criteria(vine, blocks, psi0)}
        table.append(row)
        vines[p] = vine
    best = {c: min(table, key=lambda r: (r[c], r["p"]))["p"] for c in ("aic", "bic", "mbicv")}
    return {"table": table, "selected": best, "vines": vines}


# --------------------------------------------------------------------------
# Rosenblatt transforms and simulation


def rosenblatt(row, vine: StationaryVine):
    arr, single = _as_rows(row, vine.m)
    perm = vine.permutation()
    _, W = _forward(_clamp(arr[:, perm]), vine.d, vine.classes, vine.m - 1, want_w=True)
    out = np.empty_like(W)
    out[:, perm] = W
    return out[0] if single else out


def inverse_rosenblatt(w, vine: StationaryVine):
    arr, single = _as_rows(w, vine.m)
    perm = vine.permutation()
    U = _inverse(_clamp(arr[:, perm]), vine.d, vine.classes, vine.m - 1)
    out = np.empty_like(U)
    out[:, perm] = U
    return out[0] if single else out


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def simulate_unconditional(vine: StationaryVine, n: int, seed=None) -> np.ndarray:
    """``n`` independent blocks of width ``m`` in natural column order."""
    return inverse_rosenblatt(_rng(seed).random((n, vine.m)), vine)


def simulate_series(vine: StationaryVine, length: int, seed=None, n_series: int = 1):
    """Stationary series of ``length`` slices; shape ``(n_series, length, d)``."""
    if length < 1:
        raise ValueError("length must be positive")
    d = vine.d
    W = _rng(seed).random((n_series, length * d))
    U = _inverse(_clamp(W), d, vine.classes, vine.m - 1)
    perm = vine.permutation(length)
    out = np.empty_like(U)
    out[:, perm] = U
    return out.reshape(n_series, length, d)


def simulate_conditional(vine: StationaryVine, conditioning_slice, k: int, n: int,
                         seed=None) -> np.ndarray:
    """Draw slices ``1..k`` given slice 0; returns ``n x (k*d)`` time-major.

    ``conditioning_slice`` is either one slice of length ``d`` or an
    ``n x d`` array with one conditioning slice per draw.
    """
    if k < 1:
        raise ValueError("horizon k must be at least 1")
    if k > vine.p:
        raise HorizonExceedsOrder(f"horizon k={k} exceeds Markov order p={vine.p}")
    cond = np.asarray(conditioning_slice, dtype=float)
    d = vine.d
    if cond.ndim == 1:
        cond = np.broadcast_to(cond, (n, d))
    if cond.shape != (n, d):
        raise ValueError(f"conditioning slice must have shape ({d},) or ({n}, {d})")
    width = (k + 1) * d
    perm = vine.permutation(k + 1)
    fixed = _clamp(cond[:, list(vine.cross_order)])
    W = _rng(seed).random((n, width))
    U = _inverse(_clamp(W), d, vine.classes, vine.m - 1, fixed=fixed)
    out = np.empty_like(U)
    out[:, perm] = U
    return out[:, d:]
