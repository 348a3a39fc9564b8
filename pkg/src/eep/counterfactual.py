"""Cause and impact events, world splitting and probabilities of causation.

Time indices are 0-based. A window starting at ``t`` conditions on row ``t``
and looks at rows ``t + 1 .. t + k``; future blocks are flattened time-major,
so weight ``w[s * d + i]`` multiplies variable ``i`` at step ``s + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AnchorViolation, EmptyWorld, HorizonExceedsOrder
from .margins import (GpdParams, MarginalModel, Transform, gpd_survival, pit_forward,
                      pit_inverse, transform_margin_H)
from .rng import substream
from .vine import StationaryVine, simulate_conditional

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class CauseEvent:
    variable_index: int
    threshold: float

    @classmethod
    def from_marginal(cls, variable_index: int, model: MarginalModel) -> "CauseEvent":
        """Cause threshold taken from the variable's fitted tail threshold."""
        return cls(variable_index, model.threshold)


def admissible_mask(d: int, k: int, cause_index: Optional[int] = None,
                    include_cause: bool = True) -> np.ndarray:
    mask = np.ones(k * d, dtype=bool)
    if not include_cause and cause_index is not None:
        mask[cause_index::d] = False
    return mask


@dataclass(frozen=True)
class ImpactEvent:
    horizon: int
    weights: tuple
    impact_threshold: float
    transform: Transform = field(default_factory=Transform)
    include_cause: bool = True
    cause_index: Optional[int] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if w.ndim != 1 or len(w) % self.horizon:
            raise ValueError("weights must be a vector of length k*d")
        if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        if not self.include_cause:
            if self.cause_index is None:
                raise ValueError("excluding the cause requires cause_index")
            if np.any(w[~self.mask] > SIMPLEX_TOL):
                raise ValueError("weights on cause columns must vanish when include_cause is off")

    @property
    def d(self) -> int:
        return len(self.weights) // self.horizon

    @property
    def mask(self) -> np.ndarray:
        return admissible_mask(self.d, self.horizon, self.cause_index, self.include_cause)

    @classmethod
    def uniform(cls, horizon: int, d: int, v: float, transform: Transform = Transform(),
                include_cause: bool = True, cause_index: Optional[int] = None) -> "ImpactEvent":
        mask = admissible_mask(d, horizon, cause_index, include_cause)
        w = mask / mask.sum()
        return cls(horizon, tuple(w), v, transform, include_cause, cause_index)

    def with_weights(self, weights) -> "ImpactEvent":
        return ImpactEvent(self.horizon, tuple(weights), self.impact_threshold, self.transform,
                           self.include_cause, self.cause_index)

    def with_threshold(self, v: float) -> "ImpactEvent":
        return ImpactEvent(self.horizon, self.weights, v, self.transform,
                           self.include_cause, self.cause_index)

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "weights": list(self.weights),
                "impact_threshold": self.impact_threshold, "transform": self.transform.to_dict(),
                "include_cause": self.include_cause, "cause_index": self.cause_index}


@dataclass(frozen=True)
class WorldSplit:
    factual_indices: np.ndarray
    counterfactual_indices: np.ndarray

    @property
    def n_f(self) -> int:
        return len(self.factual_indices)

    @property
    def n_cf(self) -> int:
        return len(self.counterfactual_indices)

    @property
    def p_cause(self) -> float:
        return self.n_f / (self.n_f + self.n_cf)


@dataclass(frozen=True)
class CausationReport:
    v: float
    p_f: float
    p_cf: float
    pn: float
    ps: float
    pns: float
    source: str
    n_f: int
    n_cf: int
    seed: Optional[int] = None
    flags: tuple = ()

    CSV_FIELDS = ("v", "p_f", "p_cf", "pn", "ps", "pns", "source")

    def csv_row(self) -> tuple:
        return tuple(getattr(self, f) for f in self.CSV_FIELDS)

    def to_dict(self) -> dict:
        return {"v": self.v, "p_f": self.p_f, "p_cf": self.p_cf, "pn": self.pn, "ps": self.ps,
                "pns": self.pns, "source": self.source, "n_f": self.n_f, "n_cf": self.n_cf,
                "seed": self.seed, "flags": list(self.flags)}


# --------------------------------------------------------------------------
# worlds and impacts


def split_worlds(data, cause: CauseEvent, k: int) -> WorldSplit:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if k < 1:
        raise ValueError("horizon must be at least 1")
    if n <= k:
        raise EmptyWorld(f"need more than k={k} rows, got {n}")
    t = np.arange(n - k)
    hit = x[: n - k, cause.variable_index] > cause.threshold
    split = WorldSplit(t[hit], t[~hit])
    if split.n_f == 0:
        raise EmptyWorld("no time point satisfies the cause event")
    if split.n_cf == 0:
        raise EmptyWorld("every time point satisfies the cause event")
    return split


def future_blocks(data, indices, k: int) -> np.ndarray:
    """Rows ``t+1 .. t+k`` for each ``t`` in ``indices``, flattened time-major."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    idx = np.asarray(indices, dtype=int)[:, None] + np.arange(1, k + 1)[None, :]
    return x[idx].reshape(len(idx), -1)


def transformed_blocks(blocks, transform: Transform,
                       marginals: Optional[Sequence[MarginalModel]] = None) -> np.ndarray:
    """Per-coordinate ``H(F(x))`` for an ``n x (k*d)`` array of future blocks."""
    b = np.atleast_2d(np.asarray(blocks, dtype=float))
    if transform.kind == "raw":
        return b.copy()
    if marginals is None:
        raise ValueError(f"transform {transform.kind!r} needs marginal models")
    d = len(marginals)
    u = np.empty_like(b)
    for i, model in enumerate(marginals):
        u[:, i::d] = pit_forward(b[:, i::d], model)
    return np.asarray(transform_margin_H(u, transform), dtype=float)


def impact_value(block_future, event: ImpactEvent,
                 marginals: Optional[Sequence[MarginalModel]] = None):
    """``sum_j w_j H(F_j(x_j))``; accepts one block or an array of blocks."""
    b = np.asarray(block_future, dtype=float)
    vals = transformed_blocks(b, event.transform, marginals) @ np.asarray(event.weights)
    return float(vals[0]) if b.ndim == 1 else vals


def impact_anchor(event: ImpactEvent, marginals: Sequence[MarginalModel]) -> float:
    """``w^T H(mu_0)``: the weighted transformed marginal thresholds."""
    if event.transform.kind == "raw":
        h0 = np.tile([m.threshold for m in marginals], event.horizon)
    else:
        p0 = np.array([m.splice_probability for m in marginals])
        h0 = np.asarray(transform_margin_H(np.tile(p0, event.horizon), event.transform))
    return float(np.dot(event.weights, h0))


def exceedance_probability(impacts, v: float) -> float:
    impacts = np.asarray(impacts)
    if impacts.size == 0:
        raise EmptyWorld("no impacts to average over")
    return float(np.mean(impacts > v))


def empirical_world_probability(data, split: WorldSplit, event: ImpactEvent, side: str,
                                marginals: Optional[Sequence[MarginalModel]] = None) -> float:
    if side not in ("factual", "counterfactual"):
        raise ValueError("side must be 'factual' or 'counterfactual'")
    idx = split.factual_indices if side == "factual" else split.counterfactual_indices
    if len(idx) == 0:
        raise EmptyWorld(f"{side} world is empty")
    imp = impact_value(future_blocks(data, idx, event.horizon), event, marginals)
    return exceedance_probability(imp, event.impact_threshold)


# --------------------------------------------------------------------------
# probabilities of causation


def probabilities_of_causation(p_f: float, p_cf: float, return_flags: bool = False):
    """``(pn, ps, pns)`` with ``x_+ = max(x, 0)``; degenerate denominators give 0."""
    if not (0.0 <= p_f <= 1.0 and 0.0 <= p_cf <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    flags = []
    if p_f > 0:
        pn = max(1.0 - p_cf / p_f, 0.0)
    else:
        pn = 0.0
        flags.append("p_f_zero")
    if p_cf < 1:
        ps = max(1.0 - (1.0 - p_f) / (1.0 - p_cf), 0.0)
    else:
        ps = 0.0
        flags.append("p_cf_one")
    pns = max(p_f - p_cf, 0.0)
    if p_f < p_cf:
        flags.append("monotonicity_violated")
    out = (pn, ps, pns)
    return (out, tuple(flags)) if return_flags else out


def pns_decomposition_gap(p_f: float, p_cf: float, p_cause: float) -> float:
    """``PN*P(C,E) + PS*P(C',E') - PNS`` using the unclipped formulas."""
    pn = 1.0 - p_cf / p_f
    ps = 1.0 - (1.0 - p_f) / (1.0 - p_cf)
    pns = p_f - p_cf
    return pn * p_cause * p_f + ps * (1.0 - p_cause) * (1.0 - p_cf) - pns


def make_report(v, p_f, p_cf, source, n_f, n_cf, seed=None) -> CausationReport:
    (pn, ps, pns), flags = probabilities_of_causation(p_f, p_cf, return_flags=True)
    return CausationReport(float(v), float(p_f), float(p_cf), pn, ps, pns, source,
                           int(n_f), int(n_cf), seed, flags)


# --------------------------------------------------------------------------
# synthetic worlds


@dataclass(frozen=True)
class CounterfactualSamples:
    """Vine draws of the next ``k`` slices in each world (data scale, time-major).

    ``*_rows`` hold the observed time index of each draw's conditioning slice
    and ``*_uniform`` the underlying PIT-scale draws.
    """

    factual: np.ndarray
    counterfactual: np.ndarray
    factual_rows: np.ndarray
    counterfactual_rows: np.ndarray
    factual_uniform: np.ndarray
    counterfactual_uniform: np.ndarray
    k: int
    seed: Optional[int] = None


def _pit_matrix(x, marginals):
    u = np.empty_like(x, dtype=float)
    for i, model in enumerate(marginals):
        u[:, i] = pit_forward(x[:, i], model)
    return u


def _to_data_scale(u, marginals):
    d = len(marginals)
    out = np.empty_like(u)
    for i, model in enumerate(marginals):
        out[:, i::d] = pit_inverse(u[:, i::d], model)
    return out


def generate_counterfactual_samples(vine: StationaryVine, data, cause: CauseEvent, k: int,
                                    n_per_world: int, seed: int,
                                    marginals: Optional[Sequence[MarginalModel]] = None,
                                    ) -> CounterfactualSamples:
    marginals = tuple(marginals if marginals is not None else vine.marginals)
    if len(marginals) != vine.d:
        raise ValueError("one marginal model per variable is required")
    if k > vine.p:
        raise HorizonExceedsOrder(f"horizon k={k} exceeds Markov order p={vine.p}")
    x = np.asarray(data, dtype=float)
    split = split_worlds(x, cause, k)
    out = {}
    for world, idx in (("factual", split.factual_indices),
                       ("counterfactual", split.counterfactual_indices)):
        rows = substream(seed, f"{world}-rows").choice(idx, size=n_per_world, replace=True)
        cond = _pit_matrix(x[rows], marginals)
        u = simulate_conditional(vine, cond, k, n_per_world, seed=substream(seed, f"{world}-vine"))
        out[world] = (_to_data_scale(u, marginals), rows, u)
    return CounterfactualSamples(out["factual"][0], out["counterfactual"][0],
                                 out["factual"][1], out["counterfactual"][1],
                                 out["factual"][2], out["counterfactual"][2], k, seed)


def synthetic_world_probabilities(samples: CounterfactualSamples, event: ImpactEvent,
                                  marginals: Optional[Sequence[MarginalModel]] = None):
    imp_f = impact_value(samples.factual, event, marginals)
    imp_cf = impact_value(samples.counterfactual, event, marginals)
    v = event.impact_threshold
    return exceedance_probability(imp_f, v), exceedance_probability(imp_cf, v)


# --------------------------------------------------------------------------
# tail approximation and curves


def tail_probability_approx(p_anchor: float, v: float, anchor: float,
                            gpd_ref: GpdParams) -> float:
    """``p_anchor * Fbar_GPD(v; anchor, shape, scale)`` for ``v >= anchor``."""
    if v < anchor:
        raise AnchorViolation(f"impact threshold {v} lies below the anchor {anchor}")
    surv = gpd_survival(v, GpdParams(gpd_ref.shape, gpd_ref.scale, anchor))
    return float(p_anchor) * float(surv)


def pc_curve_from_impacts(impacts_f, impacts_cf, v_grid, source: str,
                          seed: Optional[int] = None, n_f: Optional[int] = None,
                          n_cf: Optional[int] = None) -> list:
    f = np.sort(np.asarray(impacts_f, dtype=float))
    cf = np.sort(np.asarray(impacts_cf, dtype=float))
    if f.size == 0 or cf.size == 0:
        raise EmptyWorld("both worlds need at least one impact value")
    grid = np.asarray(v_grid, dtype=float)
    p_f = 1.0 - np.searchsorted(f, grid, side="right") / f.size
    p_cf = 1.0 - np.searchsorted(cf, grid, side="right") / cf.size
    n_f = f.size if n_f is None else n_f
    n_cf = cf.size if n_cf is None else n_cf
    return [make_report(v, a, b, source, n_f, n_cf, seed) for v, a, b in zip(grid, p_f, p_cf)]


def pc_curve(data_or_samples, cause: CauseEvent, event_template: ImpactEvent, v_grid,
             marginals: Optional[Sequence[MarginalModel]] = None) -> list:
    """PC reports over ``v_grid`` with the template's weights held fixed.

    ``data_or_samples`` is either the observed ``N x d`` array (empirical
    estimates) or a :class:`CounterfactualSamples` (synthetic estimates).
    """
    k = event_template.horizon
    w = np.asarray(event_template.weights)
    if isinstance(data_or_samples, CounterfactualSamples):
        s = data_or_samples
        imp_f = transformed_blocks(s.factual, event_template.transform, marginals) @ w
        imp_cf = transformed_blocks(s.counterfactual, event_template.transform, marginals) @ w
        return pc_curve_from_impacts(imp_f, imp_cf, v_grid, "synthetic", s.seed)
    split = split_worlds(data_or_samples, cause, k)
    imp_f = impact_value(future_blocks(data_or_samples, split.factual_indices, k),
                         event_template, marginals)
    imp_cf = impact_value(future_blocks(data_or_samples, split.counterfactual_indices, k),
                          event_template, marginals)
    return pc_curve_from_impacts(np.atleast_1d(imp_f), np.atleast_1d(imp_cf), v_grid, "empirical")


def tail_pc_curve(impacts_f, impacts_cf, anchor: float, v_grid, gpd_ref: GpdParams,
                  seed: Optional[int] = None) -> list:
    """PC reports from the GPD tail approximation anchored at ``anchor``."""
    pf0 = exceedance_probability(impacts_f, anchor)
    pcf0 = exceedance_probability(impacts_cf, anchor)
    reports = []
    for v in np.asarray(v_grid, dtype=float):
        a = tail_probability_approx(pf0, v, anchor, gpd_ref)
        b = tail_probability_approx(pcf0, v, anchor, gpd_ref)
        reports.append(make_report(v, a, b, "tail_approx", len(impacts_f), len(impacts_cf), seed))
    return reports
