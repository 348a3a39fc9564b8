"""Simplex-constrained maximisation of probabilities of causation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, optimize

from .counterfactual import (CounterfactualSamples, ImpactEvent, future_blocks, split_worlds,
                             transformed_blocks)
from .errors import ZeroVector
from .margins import GpdParams, gpd_survival
from .rng import substream

PC_KINDS = ("pn", "ps", "pns")


def project_to_simplex(x) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` by sorting."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return _project_rows(x[None, :])[0]
    return _project_rows(x)


def _project_rows(x):
    n = x.shape[1]
    s = -np.sort(-x, axis=1)
    css = np.cumsum(s, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = s - css / ks > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(len(x)), rho] / (rho + 1)
    w = np.maximum(x - tau[:, None], 0.0)
    # renormalise away the last ulp so sums are exact to 1e-15
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class RegSpec:
    norm: str = "L1"
    lam: float = 0.0

    def __post_init__(self):
        if self.norm not in ("L1", "L2"):
            raise ValueError("norm must be 'L1' or 'L2'")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")

    def penalty(self, w):
        w = np.asarray(w, dtype=float)
        if self.norm == "L1":
            return self.lam * np.abs(w).sum(axis=-1)
        return self.lam * np.sqrt((w * w).sum(axis=-1))


@dataclass(frozen=True)
class OptConfig:
    population_factor: int = 10
    generations: int = 300
    crossover: float = 0.9
    differential_weight: float = 0.8
    refine_iterations: int = 2000
    refine_step: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class OptResult:
    weights: np.ndarray
    pc_value: float
    objective: float
    pc_kind: str
    entropy: float
    trace: tuple
    lam: float
    norm: str
    p_f: float = float("nan")
    p_cf: float = float("nan")

    def to_dict(self) -> dict:
        return {"weights": [float(x) for x in self.weights], "pc_value": self.pc_value,
                "objective": self.objective, "pc_kind": self.pc_kind, "entropy": self.entropy,
                "trace": list(self.trace), "lambda": self.lam, "norm": self.norm,
                "p_f": self.p_f, "p_cf": self.p_cf}

    def weight_grid(self, d: int) -> np.ndarray:
        """``k x d`` matrix: rows are horizon steps, columns variables."""
        return np.asarray(self.weights).reshape(-1, d)


# --------------------------------------------------------------------------
# evaluation contexts


class PCContext:
    """Factual and counterfactual impact ingredients for weight evaluation.

    ``factual`` and ``counterfactual`` are ``n x (k*d)`` arrays of transformed
    future coordinates ``H(F(x))``; ``p_f(w)`` is the fraction of rows whose
    weighted sum exceeds ``v``. With ``tail`` set to ``(anchor_fn, gpd_ref)``
    the probabilities use the GPD tail approximation instead.
    """

    def __init__(self, factual, counterfactual, v: float, mask=None, source: str = "synthetic",
                 tail: Optional[tuple] = None):
        self.factual = np.ascontiguousarray(factual, dtype=float)
        self.counterfactual = np.ascontiguousarray(counterfactual, dtype=float)
        if self.factual.shape[1] != self.counterfactual.shape[1]:
            raise ValueError("both worlds must have the same dimension")
        self.v = float(v)
        dim = self.factual.shape[1]
        self.mask = np.ones(dim, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self.source = source
        self.tail = tail

    @property
    def dim(self) -> int:
        return self.factual.shape[1]

    def probabilities(self, W):
        """``(p_f, p_cf)`` for each row of ``W`` (full-dimension weights)."""
        W = np.atleast_2d(W)
        if self.tail is None:
            pf = np.mean(self.factual @ W.T > self.v, axis=0)
            pcf = np.mean(self.counterfactual @ W.T > self.v, axis=0)
            return pf, pcf
        anchor_fn, ref = self.tail
        pf = np.empty(len(W))
        pcf = np.empty(len(W))
        for i, w in enumerate(W):
            a = anchor_fn(w)
            surv = gpd_survival(max(self.v, a), GpdParams(ref.shape, ref.scale, a))
            pf[i] = np.mean(self.factual @ w > a) * surv
            pcf[i] = np.mean(self.counterfactual @ w > a) * surv
        return pf, pcf

    @classmethod
    def from_samples(cls, samples: CounterfactualSamples, event: ImpactEvent, marginals=None):
        hf = transformed_blocks(samples.factual, event.transform, marginals)
        hcf = transformed_blocks(samples.counterfactual, event.transform, marginals)
        return cls(hf, hcf, event.impact_threshold, event.mask, "synthetic")

    @classmethod
    def from_data(cls, data, cause, event: ImpactEvent, marginals=None):
        split = split_worlds(data, cause, event.horizon)
        hf = transformed_blocks(future_blocks(data, split.factual_indices, event.horizon),
                                event.transform, marginals)
        hcf = transformed_blocks(future_blocks(data, split.counterfactual_indices, event.horizon),
                                 event.transform, marginals)
        return cls(hf, hcf, event.impact_threshold, event.mask, "empirical")


def _pc_from_probs(pf, pcf, kind):
    pf = np.asarray(pf, dtype=float)
    pcf = np.asarray(pcf, dtype=float)
    if kind == "pns":
        return np.maximum(pf - pcf, 0.0)
    if kind == "pn":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(pf > 0, 1.0 - pcf / pf, 0.0)
        return np.maximum(out, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(pcf < 1, 1.0 - (1.0 - pf) / (1.0 - pcf), 0.0)
    return np.maximum(out, 0.0)


class RegularizedObjective:
    """``PC(w) - lambda * ||w||_p`` over admissible coordinates.

    Callable on reduced vectors (admissible coordinates only); ``batch``
    evaluates a population at once.
    """

    def __init__(self, pc_kind: str, reg: RegSpec, context: PCContext):
        if pc_kind not in PC_KINDS:
            raise ValueError(f"pc_kind must be one of {PC_KINDS}")
        self.pc_kind = pc_kind
        self.reg = reg
        self.context = context
        self.idx = np.flatnonzero(context.mask)

    @property
    def dim(self) -> int:
        return len(self.idx)

    def embed(self, W):
        W = np.atleast_2d(W)
        full = np.zeros((len(W), self.context.dim))
        full[:, self.idx] = W
        return full

    def pc(self, W):
        pf, pcf = self.context.probabilities(self.embed(W))
        return _pc_from_probs(pf, pcf, self.pc_kind)

    def batch(self, W):
        W = np.atleast_2d(W)
        return self.pc(W) - self.reg.penalty(W)

    def __call__(self, w):
        return float(self.batch(w)[0])


def regularized_pc_objective(w, pc_kind: str, reg: RegSpec, context: PCContext) -> float:
    """Objective at a full-dimension weight vector; masked coordinates are zeroed first."""
    w = np.asarray(w, dtype=float)
    obj = RegularizedObjective(pc_kind, reg, context)
    return obj(project_to_simplex(w[obj.idx]))


# --------------------------------------------------------------------------
# optimisers


def _evaluate(objective, X):
    batch = getattr(objective, "batch", None)
    if batch is not None:
        return np.asarray(batch(X), dtype=float)
    return np.array([objective(x) for x in X], dtype=float)


def differential_evolution_stage(objective: Callable, dimension: int,
                                 config: OptConfig = OptConfig()):
    """DE/rand/1/bin over [0, 1]^dim; trial vectors are projected before evaluation.

    Returns ``(best, best_value, trace)`` where ``trace`` holds the best value
    after initialisation and after every generation.
    """
    if dimension == 1:
        x = np.ones(1)
        val = float(_evaluate(objective, x[None, :])[0])
        return x, val, (val,) * (config.generations + 1)
    rng = substream(config.seed, "differential-evolution")
    npop = max(config.population_factor * dimension, 4)
    pop = np.empty((npop, dimension))
    pop[0] = 1.0 / dimension
    pop[1:] = rng.dirichlet(np.ones(dimension), size=npop - 1)
    fit = _evaluate(objective, pop)
    trace = [float(fit.max())]
    for _ in range(config.generations):
        keys = rng.random((npop, npop))
        np.fill_diagonal(keys, 2.0)
        r = np.argsort(keys, axis=1)[:, :3]
        mutant = np.clip(pop[r[:, 0]] + config.differential_weight * (pop[r[:, 1]] - pop[r[:, 2]]),
                         0.0, 1.0)
        cross = rng.random((npop, dimension)) < config.crossover
        cross[np.arange(npop), rng.integers(0, dimension, npop)] = True
        trial = np.where(cross, mutant, pop)
        # a zero trial vector has no projection direction; fall back to the parent
        zero = trial.sum(axis=1) <= 0
        trial[zero] = pop[zero]
        trial = project_to_simplex(trial)
        tfit = _evaluate(objective, trial)
        better = tfit >= fit
        pop[better] = trial[better]
        fit[better] = tfit[better]
        trace.append(float(fit.max()))
    best = int(np.argmax(fit))
    return pop[best].copy(), float(fit[best]), tuple(trace)


def _sum_zero_basis(dim: int) -> np.ndarray:
    """Orthonormal basis (as columns) of ``{x : sum x = 0}``."""
    return linalg.null_space(np.ones((1, dim)))


def local_refine_stage(objective: Callable, start, iterations: int = 2000,
                       step: float = 0.05, return_spread: bool = False):
    """Projected Nelder-Mead from ``start``; never returns a worse point."""
    start = project_to_simplex(start)
    dim = len(start)
    f0 = float(_evaluate(objective, start[None, :])[0])
    if dim == 1 or iterations <= 0:
        return (start, f0, 0.0) if return_spread else (start, f0)
    B = _sum_zero_basis(dim)

    def neg(z):
        return -float(_evaluate(objective, project_to_simplex(start + B @ z)[None, :])[0])

    init = np.vstack([np.zeros(dim - 1), step * np.eye(dim - 1)])
    res = optimize.minimize(neg, np.zeros(dim - 1), method="Nelder-Mead",
                            options={"maxiter": iterations, "maxfev": 4 * iterations,
                                     "xatol": 1e-10, "fatol": 1e-12,
                                     "initial_simplex": init})
    w = project_to_simplex(start + B @ res.x)
    f = -float(res.fun)
    spread = float(np.ptp(res.final_simplex[1]))
    if f < f0:
        w, f = start, f0
    return (w, f, spread) if return_spread else (w, f)


def standardize_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    top = np.max(w) if w.size else 0.0
    if not top > 0:
        raise ZeroVector("weights are all zero")
    return w / top


def relative_entropy(w) -> float:
    w = np.asarray(w, dtype=float)
    n = w.size
    if n < 2:
        return 0.0
    pos = w[w > 0]
    h = -float(np.sum(pos * np.log(pos))) / math.log(n)
    if np.all(w == w[0]):
        return 1.0
    return min(max(h, 0.0), 1.0) + 0.0


def maximize_pc(pc_kind: str, reg: RegSpec, context: PCContext,
                config: OptConfig = OptConfig()) -> OptResult:
    obj = RegularizedObjective(pc_kind, reg, context)
    if obj.dim == 0:
        raise ZeroVector("no admissible coordinates")
    best, _, trace = differential_evolution_stage(obj, obj.dim, config)
    w, f = local_refine_stage(obj, best, config.refine_iterations, config.refine_step)
    trace = trace + (max(trace[-1], f),)
    full = obj.embed(w)[0]
    pf, pcf = context.probabilities(full[None, :])
    pc = float(_pc_from_probs(pf, pcf, pc_kind)[0])
    return OptResult(full, pc, float(f), pc_kind, relative_entropy(full), trace,
                     reg.lam, reg.norm, float(pf[0]), float(pcf[0]))


def lambda_sweep(pc_kind: str, norm: str, lambdas: Sequence[float], context: PCContext,
                 config: OptConfig = OptConfig()) -> list:
    return [maximize_pc(pc_kind, RegSpec(norm, lam), context, config) for lam in lambdas]
