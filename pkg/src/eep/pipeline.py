"""End-to-end fitting: marginals, PIT, then the stationary vine."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .margins import DEFAULT_CANDIDATES, MarginalModel, fit_marginal_model, pit_forward
from .paircopula import DEFAULT_CANDIDATES as PAIR_CANDIDATES
from .vine import (StationaryVine, build_blocks, fit_stationary_vine, information_criteria,
                   select_cross_section_order, select_markov_order)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FittedModel:
    marginals: tuple
    vine: StationaryVine
    order_table: tuple = ()
    criteria: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.marginals)

    def pit(self, data) -> np.ndarray:
        return pit_matrix(data, self.marginals)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for i, m in enumerate(self.marginals):
            stem = f"margin_{i}"
            m.save(directory / stem)
            names.append(stem)
        doc = {"margins": names, "vine": self.vine.to_dict(),
               "order_table": list(self.order_table), "criteria": self.criteria}
        (directory / "model.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "FittedModel":
        directory = Path(directory)
        doc = json.loads((directory / "model.json").read_text())
        margins = tuple(MarginalModel.load(directory / stem) for stem in doc["margins"])
        vine = StationaryVine.from_dict(doc["vine"], margins)
        return cls(margins, vine, tuple(doc.get("order_table", ())), doc.get("criteria", {}))


def pit_matrix(data, marginals: Sequence[MarginalModel]) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    return np.column_stack([pit_forward(x[:, i], m) for i, m in enumerate(marginals)])


def fit_marginals(data, candidate_quantiles=DEFAULT_CANDIDATES, alpha: float = 0.05,
                  seed: int = 0, replicates: int = 500, names: Optional[Sequence[str]] = None,
                  threshold_quantiles: Optional[dict] = None) -> tuple:
    """One semiparametric margin per column; ``threshold_quantiles`` maps column to override."""
    x = np.asarray(data, dtype=float)
    names = list(names) if names is not None else [f"x{i}" for i in range(x.shape[1])]
    overrides = threshold_quantiles or {}
    out = []
    for i in range(x.shape[1]):
        out.append(fit_marginal_model(x[:, i], candidate_quantiles, alpha, seed=seed + i,
                                      name=names[i], replicates=replicates,
                                      threshold_quantile=overrides.get(i)))
    return tuple(out)


def fit_model(data, orders: Sequence[int], cross_order=None, select_by: str = "mbicv",
              families=PAIR_CANDIDATES, pair_criterion: str = "bic", level: float = 0.05,
              psi0: float = 0.9, candidate_quantiles=DEFAULT_CANDIDATES, alpha: float = 0.05,
              seed: int = 0, replicates: int = 500, names=None,
              threshold_quantiles: Optional[dict] = None,
              marginals: Optional[Sequence[MarginalModel]] = None) -> FittedModel:
    """Fit margins, transform, and fit a stationary vine for each candidate order.

    The order minimising ``select_by`` (one of aic, bic, mbicv) is kept.
    """
    if select_by not in ("aic", "bic", "mbicv"):
        raise ValueError("select_by must be aic, bic or mbicv")
    x = np.asarray(data, dtype=float)
    if marginals is None:
        marginals = fit_marginals(x, candidate_quantiles, alpha, seed, replicates, names,
                                  threshold_quantiles)
    u = pit_matrix(x, marginals)
    if cross_order is None:
        cross_order = select_cross_section_order(u)
    orders = list(orders)
    if len(orders) == 1:
        blocks = build_blocks(u, orders[0])
        vine = fit_stationary_vine(blocks, cross_order, families, pair_criterion, level)
        crit = information_criteria(vine, blocks, psi0)
        table = ({"p": orders[0], **crit},)
    else:
        res = select_markov_order(u, orders, cross_order, families, pair_criterion, level, psi0)
        vine = res["vines"][res["selected"][select_by]]
        table = tuple(res["table"])
        crit = next(r for r in table if r["p"] == vine.p)
    vine = StationaryVine(vine.d, vine.p, vine.cross_order, dict(vine.classes), tuple(marginals))
    log.info("fitted vine of order %d with %d non-independence classes", vine.p, vine.n_params)
    return FittedModel(tuple(marginals), vine, table, {k: v for k, v in crit.items() if k != "p"})
