"""Command-line front end: fit, causation, optimize, simulate, diagnose.

Settings are resolved as built-in defaults, then ``--config`` JSON, then
flags given explicitly on the command line. Every run directory receives a
``config.json`` with the resolved settings and their hash; nothing written
depends on the wall clock, so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .counterfactual import (CauseEvent, ImpactEvent, future_blocks, generate_counterfactual_samples,
                             pc_curve_from_impacts, split_worlds, transformed_blocks)
from .diagnostics import (adf_test, correlation_functions, empirical_extremal_correlation,
                          histogram, jitter_and_normalize)
from .errors import DataError, InsufficientExceedances, NumericalError
from .margins import DEFAULT_CANDIDATES, Transform, gpd_quantile, pit_inverse
from .optimize import OptConfig, PCContext, RegSpec, maximize_pc, standardize_weights
from .paircopula import CopulaFamily, DEFAULT_CANDIDATES as PAIR_CANDIDATES
from .pipeline import FittedModel, fit_model
from .rng import substream
from .vine import build_blocks, simulate_series, vine_loglik

log = logging.getLogger("eep")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
ARTIFACT_SCHEMA = 1
COMMANDS = ("fit", "causation", "optimize", "simulate", "diagnose")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    input_path: Optional[str] = None
    output_dir: str = "eep_run"
    model_dir: Optional[str] = None
    timestamp_column: Optional[str] = None
    columns: Optional[List[str]] = None
    cause_variable: Optional[str] = None
    horizon: int = 1
    markov_orders: List[int] = field(default_factory=lambda: [1])
    order_criterion: str = "mbicv"
    candidate_quantiles: List[float] = field(default_factory=lambda: list(DEFAULT_CANDIDATES))
    alpha: float = 0.05
    replicates: int = 500
    threshold_overrides: dict = field(default_factory=dict)
    families: List[str] = field(default_factory=lambda: ["clayton", "gumbel", "frank", "joe"])
    pair_criterion: str = "bic"
    level: float = 0.05
    psi0: float = 0.9
    transform: str = "exponential"
    transform_shape: float = 0.0
    transform_scale: float = 1.0
    impact_threshold: Optional[float] = None
    impact_quantile: float = 0.8
    v_grid: Optional[List[float]] = None
    pc_kind: str = "pns"
    lambdas: List[float] = field(default_factory=lambda: [0.0])
    norm: str = "L1"
    include_cause: str = "true"
    n_synthetic: int = 1500
    generations: int = 300
    population_factor: int = 10
    noise_fraction: float = 0.0
    n_steps: int = 1000
    max_lag: int = 24
    extremal_u: float = 0.95
    bins: int = 30
    seed: Optional[int] = None

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


FLAG_TYPES = {
    "input_path": str, "output_dir": str, "model_dir": str, "timestamp_column": str,
    "columns": "strlist", "cause_variable": str, "horizon": int, "markov_orders": "intlist",
    "order_criterion": str, "candidate_quantiles": "floatlist", "alpha": float,
    "replicates": int, "threshold_overrides": "overrides", "families": "strlist",
    "pair_criterion": str, "level": float, "psi0": float, "transform": str,
    "transform_shape": float, "transform_scale": float, "impact_threshold": float,
    "impact_quantile": float, "v_grid": "floatlist", "pc_kind": str, "lambdas": "floatlist",
    "norm": str, "include_cause": str, "n_synthetic": int, "generations": int,
    "population_factor": int, "noise_fraction": float, "n_steps": int, "max_lag": int,
    "extremal_u": float, "bins": int, "seed": int,
}

STOCHASTIC = {"fit", "causation", "optimize", "simulate", "diagnose"}


def _split(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _int_list(text):
    out = []
    for part in _split(text):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _float_list(text):
    # "a:b:n" expands to n evenly spaced values
    if ":" in str(text):
        a, b, n = str(text).split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    return [float(x) for x in _split(text)]


def _overrides(text):
    out = {}
    for part in _split(text):
        name, q = part.split("=")
        out[name.strip()] = float(q)
    return out


CONVERTERS = {"strlist": _split, "intlist": _int_list, "floatlist": _float_list,
              "overrides": _overrides}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eep", description="Extreme event propagation pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--log-level", default="WARNING")
        for key, typ in FLAG_TYPES.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None,
                           type=CONVERTERS[typ] if isinstance(typ, str) else typ)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in dataclasses.fields(RunConfig)}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            setattr(cfg, key, value)
    for key in FLAG_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return cfg


# --------------------------------------------------------------------------
# validation and data loading


def _read_header(path: Path) -> List[str]:
    if not path.exists():
        raise ConfigError(f"I/O error: input file not found: {path}")
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise ConfigError(f"I/O error: input file is empty: {path}")
    return [h.strip() for h in header]


def validate(cfg: RunConfig, command: str) -> List[str]:
    """Check the configuration before any data is read; returns variable names."""
    if command in STOCHASTIC and cfg.seed is None:
        raise ConfigError("--seed is required")
    if cfg.input_path is None:
        raise ConfigError("--input-path is required")
    header = _read_header(Path(cfg.input_path))
    if cfg.timestamp_column is not None and cfg.timestamp_column not in header:
        raise ConfigError(f"timestamp column {cfg.timestamp_column!r} not in input header")
    variables = cfg.columns or [h for h in header if h != cfg.timestamp_column]
    missing = [c for c in variables if c not in header]
    if missing:
        raise ConfigError(f"columns not in input header: {missing}")
    if cfg.cause_variable is not None and cfg.cause_variable not in variables:
        raise ConfigError(f"cause variable {cfg.cause_variable!r} not among {variables}")
    if command in ("causation", "optimize") and cfg.cause_variable is None:
        raise ConfigError("--cause-variable is required")
    bad = [k for k in cfg.threshold_overrides if k not in variables]
    if bad:
        raise ConfigError(f"threshold overrides name unknown columns: {bad}")
    if not cfg.markov_orders or min(cfg.markov_orders) < 0:
        raise ConfigError("markov orders must be a nonempty list of nonnegative integers")
    if cfg.horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if command == "fit" and cfg.cause_variable is not None and cfg.horizon > max(cfg.markov_orders):
        raise ConfigError(f"horizon {cfg.horizon} exceeds every candidate Markov order")
    if cfg.order_criterion not in ("aic", "bic", "mbicv"):
        raise ConfigError("order criterion must be aic, bic or mbicv")
    if cfg.pair_criterion not in ("aic", "bic"):
        raise ConfigError("pair criterion must be aic or bic")
    if any(f not in {c.value for c in CopulaFamily} - {"independence"} for f in cfg.families):
        raise ConfigError(f"unknown copula family in {cfg.families}")
    if cfg.transform not in Transform.KINDS:
        raise ConfigError(f"transform must be one of {Transform.KINDS}")
    if cfg.pc_kind not in ("pn", "ps", "pns"):
        raise ConfigError("pc kind must be pn, ps or pns")
    if cfg.norm not in ("L1", "L2"):
        raise ConfigError("norm must be L1 or L2")
    if command == "optimize" and not cfg.lambdas:
        raise ConfigError("lambda list is empty")
    if any(lam < 0 for lam in cfg.lambdas):
        raise ConfigError("lambdas must be nonnegative")
    if cfg.include_cause not in ("true", "false", "both"):
        raise ConfigError("include-cause must be true, false or both")
    cq = cfg.candidate_quantiles
    if not cq or any(not 0 < q < 1 for q in cq) or list(cq) != sorted(set(cq)):
        raise ConfigError("candidate quantiles must be strictly increasing values in (0, 1)")
    for name, val in (("alpha", cfg.alpha), ("level", cfg.level), ("psi0", cfg.psi0),
                      ("impact quantile", cfg.impact_quantile), ("extremal u", cfg.extremal_u)):
        if not 0 < val < 1:
            raise ConfigError(f"{name} must lie in (0, 1)")
    if cfg.noise_fraction < 0:
        raise ConfigError("noise fraction must be nonnegative")
    if cfg.replicates < 100:
        raise ConfigError("at least 100 bootstrap replicates are required")
    return variables


def load_table(cfg: RunConfig, variables: List[str]):
    """Numeric matrix for ``variables`` plus the optional timestamp column."""
    path = Path(cfg.input_path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        cols = [header.index(v) for v in variables]
        tcol = header.index(cfg.timestamp_column) if cfg.timestamp_column else None
        rows, stamps, bad = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                vals = [float(rec[c]) for c in cols]
            except (ValueError, IndexError):
                bad.append(lineno)
                continue
            if not all(np.isfinite(vals)):
                bad.append(lineno)
                continue
            rows.append(vals)
            if tcol is not None:
                stamps.append(rec[tcol])
    if bad:
        shown = ", ".join(str(b) for b in bad[:10])
        raise DataError(f"{len(bad)} rows with missing or non-numeric values (lines {shown})")
    if not rows:
        raise DataError(f"no data rows in {path}")
    return np.array(rows), stamps


def prepare_data(cfg: RunConfig, x: np.ndarray) -> np.ndarray:
    if cfg.noise_fraction <= 0:
        return x
    return np.column_stack([
        jitter_and_normalize(x[:, i], cfg.noise_fraction, substream(cfg.seed, "jitter", i))
        for i in range(x.shape[1])
    ])


# --------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return "" if x is None else str(x)


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj)}")


def write_run_config(out: Path, cfg: RunConfig, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / f"config_{command}.json" if command != "fit" else out / "config.json",
               {"command": command, "config": dataclasses.asdict(cfg), "config_hash": cfg.digest(),
                "eep_version": __version__, "seed_streams": "SeedSequence([seed, crc32(name), index])"})


def _transform(cfg: RunConfig) -> Transform:
    return Transform(cfg.transform, cfg.transform_shape, cfg.transform_scale)


def _reference_quantile(cfg: RunConfig, q: float) -> float:
    t = _transform(cfg)
    if t.kind in ("identity",):
        return q
    if t.kind == "raw":
        raise ConfigError("the raw transform needs an explicit --impact-threshold or --v-grid")
    return float(gpd_quantile(q, t.reference_gpd))


def impact_threshold(cfg: RunConfig) -> float:
    if cfg.impact_threshold is not None:
        return float(cfg.impact_threshold)
    return _reference_quantile(cfg, cfg.impact_quantile)


def v_grid(cfg: RunConfig) -> List[float]:
    if cfg.v_grid:
        return list(cfg.v_grid)
    return [_reference_quantile(cfg, q) for q in np.linspace(0.5, 0.99, 25)]


def _load_model(cfg: RunConfig) -> FittedModel:
    model_dir = Path(cfg.model_dir or cfg.output_dir)
    path = model_dir / "model.json"
    if not path.exists():
        raise ConfigError(f"I/O error: no fitted model at {path}; run 'eep fit' first")
    doc = json.loads(path.read_text())
    major = doc.get("artifact_schema")
    if major != ARTIFACT_SCHEMA:
        raise ConfigError(f"unsupported artifact schema {major!r}")
    return FittedModel.load(model_dir)


def _setup(cfg: RunConfig, command: str, needs_model: bool = False):
    variables = validate(cfg, command)
    model = None
    if needs_model:
        model = _load_model(cfg)
        if model.d != len(variables):
            raise ConfigError(f"model has {model.d} variables but {len(variables)} columns were selected")
        if command in ("causation", "optimize") and cfg.horizon > model.vine.p:
            raise ConfigError(f"horizon {cfg.horizon} exceeds the fitted Markov order {model.vine.p}")
    x, stamps = load_table(cfg, variables)
    x = prepare_data(cfg, x)
    out = Path(cfg.output_dir)
    write_run_config(out, cfg, command)
    return variables, x, stamps, out, model


# --------------------------------------------------------------------------
# commands


def cmd_fit(cfg: RunConfig) -> dict:
    variables, x, stamps, out, _ = _setup(cfg, "fit")
    overrides = {variables.index(k): q for k, q in cfg.threshold_overrides.items()}
    families = [(CopulaFamily(f), r) for f, r in PAIR_CANDIDATES if f.value in cfg.families]
    model = fit_model(x, cfg.markov_orders, select_by=cfg.order_criterion, families=families,
                      pair_criterion=cfg.pair_criterion, level=cfg.level, psi0=cfg.psi0,
                      candidate_quantiles=cfg.candidate_quantiles, alpha=cfg.alpha,
                      seed=cfg.seed, replicates=cfg.replicates, names=variables,
                      threshold_quantiles=overrides)
    blocks = build_blocks(model.pit(x), model.vine.p)
    ll_blocks = vine_loglik(model.vine, blocks)
    model.save(out)
    doc = json.loads((out / "model.json").read_text())
    doc.update({
        "artifact_schema": ARTIFACT_SCHEMA,
        "variables": variables,
        "config_hash": cfg.digest(),
        "training": {"n_rows": int(x.shape[0]), "vine_loglik": ll_blocks,
                     "first_timestamp": stamps[0] if stamps else None,
                     "last_timestamp": stamps[-1] if stamps else None},
    })
    write_json(out / "model.json", doc)
    write_csv(out / "criteria_by_order.csv", ("p", "loglik", "n_params", "aic", "bic", "mbicv"),
              [(r["p"], r["loglik"], r["n_params"], r["aic"], r["bic"], r["mbicv"])
               for r in model.order_table])
    rows = []
    for name, m in zip(variables, model.marginals):
        sel = m.selection
        rows.append((name, m.gpd.threshold_quantile, m.threshold, m.gpd.shape, m.gpd.scale,
                     m.fit.shape_se if m.fit else None, m.fit.scale_se if m.fit else None,
                     sel.rejected_count if sel else None))
    write_csv(out / "margins.csv", ("variable", "quantile", "threshold", "shape", "scale",
                                    "shape_se", "scale_se", "rejected_count"), rows)
    vd = model.vine.to_dict()
    write_csv(out / "vine_classes.csv",
              ("tree", "position", "displacement", "var_a", "var_b", "family", "rotation", "theta"),
              [(c["tree"], c["position"], c["displacement"], variables[c["pair"][0]],
                variables[c["pair"][1]], c["family"], c["rotation"], c["theta"])
               for c in vd["classes"]])
    print(f"fitted order p={model.vine.p} ({cfg.order_criterion}); "
          f"{model.vine.n_params} pair copulas; artifact in {out}")
    return doc


def _event_template(cfg: RunConfig, variables, model) -> tuple:
    cause_idx = variables.index(cfg.cause_variable)
    cause = CauseEvent.from_marginal(cause_idx, model.marginals[cause_idx])
    event = ImpactEvent.uniform(cfg.horizon, len(variables), impact_threshold(cfg),
                                _transform(cfg), True, cause_idx)
    return cause_idx, cause, event


def _samples(cfg, model, x, cause):
    return generate_counterfactual_samples(model.vine, x, cause, cfg.horizon, cfg.n_synthetic,
                                           cfg.seed, model.marginals)


def cmd_causation(cfg: RunConfig) -> list:
    variables, x, _, out, model = _setup(cfg, "causation", needs_model=True)
    _, cause, event = _event_template(cfg, variables, model)
    k = cfg.horizon
    try:
        split = split_worlds(x, cause, k)
    except DataError as exc:
        raise type(exc)(f"{exc} (cause {cfg.cause_variable} > {cause.threshold:.6g})") from exc
    w = np.asarray(event.weights)
    emp_f = transformed_blocks(future_blocks(x, split.factual_indices, k), event.transform,
                               model.marginals) @ w
    emp_cf = transformed_blocks(future_blocks(x, split.counterfactual_indices, k), event.transform,
                                model.marginals) @ w
    grid = v_grid(cfg)
    emp = pc_curve_from_impacts(emp_f, emp_cf, grid, "empirical", cfg.seed, split.n_f, split.n_cf)
    samples = _samples(cfg, model, x, cause)
    syn_f = transformed_blocks(samples.factual, event.transform, model.marginals) @ w
    syn_cf = transformed_blocks(samples.counterfactual, event.transform, model.marginals) @ w
    syn = pc_curve_from_impacts(syn_f, syn_cf, grid, "synthetic", cfg.seed)
    header = ("v", "p_f", "p_cf", "pn", "ps", "pns", "source", "n_f", "n_cf", "flags")
    for name, reps in (("pc_empirical.csv", emp), ("pc_synthetic.csv", syn)):
        write_csv(out / name, header,
                  [r.csv_row() + (r.n_f, r.n_cf, "|".join(r.flags)) for r in reps])
    cols = ("p_f", "p_cf", "pn", "ps", "pns")
    write_csv(out / "pc_comparison.csv",
              ("v",) + tuple(f"empirical_{c}" for c in cols) + tuple(f"synthetic_{c}" for c in cols),
              [(a.v,) + tuple(getattr(a, c) for c in cols) + tuple(getattr(b, c) for c in cols)
               for a, b in zip(emp, syn)])
    print(f"wrote {len(grid)} grid points for empirical and synthetic worlds to {out}")
    return emp + syn


def cmd_optimize(cfg: RunConfig) -> list:
    variables, x, _, out, model = _setup(cfg, "optimize", needs_model=True)
    cause_idx, cause, event = _event_template(cfg, variables, model)
    samples = _samples(cfg, model, x, cause)
    d = len(variables)
    toggles = {"true": [True], "false": [False], "both": [True, False]}[cfg.include_cause]
    opt = OptConfig(population_factor=cfg.population_factor, generations=cfg.generations,
                    seed=cfg.seed)
    results, rows = [], []
    base = PCContext.from_samples(samples, event, model.marginals)
    for include in toggles:
        mask = np.ones(cfg.horizon * d, dtype=bool)
        if not include:
            mask[cause_idx::d] = False
        ctx = PCContext(base.factual, base.counterfactual, base.v, mask, "synthetic")
        for lam in cfg.lambdas:
            res = maximize_pc(cfg.pc_kind, RegSpec(cfg.norm, lam), ctx, opt)
            tag = f"{cfg.norm}_lambda{fmt(lam)}_cause{'in' if include else 'out'}"
            grid = standardize_weights(res.weights).reshape(cfg.horizon, d)
            write_csv(out / f"weights_{tag}.csv", ("step",) + tuple(variables),
                      [(s + 1,) + tuple(row) for s, row in enumerate(grid)])
            rows.append((cfg.pc_kind, cfg.norm, lam, include, res.pc_value, res.objective,
                         res.entropy, res.p_f, res.p_cf))
            results.append((include, lam, res))
    write_csv(out / "optimize_results.csv",
              ("pc_kind", "norm", "lambda", "include_cause", "pc_value", "objective", "entropy",
               "p_f", "p_cf"), rows)
    if len(toggles) == 2:
        shift = []
        for lam in cfg.lambdas:
            a = next(r for inc, l_, r in results if inc and l_ == lam).weights.reshape(-1, d)
            b = next(r for inc, l_, r in results if not inc and l_ == lam).weights.reshape(-1, d)
            for j, name in enumerate(variables):
                shift.append((lam, name, a[:, j].sum(), b[:, j].sum(), b[:, j].sum() - a[:, j].sum()))
        write_csv(out / "mass_shift.csv",
                  ("lambda", "variable", "mass_with_cause", "mass_without_cause", "change"), shift)
    print(f"optimised {len(rows)} configurations; results in {out}")
    return results


def cmd_simulate(cfg: RunConfig) -> np.ndarray:
    variables, _, _, out, model = _setup(cfg, "simulate", needs_model=True)
    u = simulate_series(model.vine, cfg.n_steps, seed=substream(cfg.seed, "simulate"))[0]
    x = np.column_stack([pit_inverse(u[:, i], m) for i, m in enumerate(model.marginals)])
    write_csv(out / "simulated.csv", ("step",) + tuple(variables),
              [(t,) + tuple(row) for t, row in enumerate(x)])
    print(f"simulated {cfg.n_steps} steps into {out / 'simulated.csv'}")
    return x


def cmd_diagnose(cfg: RunConfig) -> dict:
    variables, x, _, out, _ = _setup(cfg, "diagnose")
    n, d = x.shape
    max_lag = min(cfg.max_lag, n - 1)
    rows = []
    for i in range(d):
        for kind in ("acf", "pacf"):
            cs = correlation_functions(x[:, i], max_lag=max_lag, kind=kind)
            rows += [(kind, variables[i], variables[i], h, v, cs.ci_halfwidth)
                     for h, v in zip(cs.lags, cs.values)]
        for j in range(d):
            if i == j:
                continue
            for kind in ("ccf", "pccf"):
                cs = correlation_functions(x[:, i], x[:, j], max_lag=max_lag, kind=kind)
                rows += [(kind, variables[i], variables[j], h, v, cs.ci_halfwidth)
                         for h, v in zip(cs.lags, cs.values)]
    for i in range(d):
        for j in range(d):
            for h in range(0, max_lag + 1):
                try:
                    chi = empirical_extremal_correlation(x[:, i], x[:, j], h, cfg.extremal_u)
                except InsufficientExceedances:
                    chi = float("nan")
                rows.append(("extremal", variables[i], variables[j], h, chi, None))
    write_csv(out / "diagnostics.csv", ("kind", "i", "j", "lag", "value", "ci"), rows)
    adf_rows = []
    for i in range(d):
        res = adf_test(x[:, i], 1)
        adf_rows.append((variables[i], res.statistic, res.lags_used, res.critical_value,
                         res.reject_at_1pct, float(np.var(x[:, i], ddof=1))))
    write_csv(out / "adf.csv", ("variable", "statistic", "lags", "critical_1pct", "reject",
                                "variance"), adf_rows)
    hist = []
    for i in range(d):
        counts, edges = histogram(x[:, i], cfg.bins)
        hist += [(variables[i], lo, hi, c) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    write_csv(out / "histograms.csv", ("variable", "bin_low", "bin_high", "count"), hist)
    print(f"diagnostics for {d} variables written to {out}")
    return {"adf": adf_rows}


def _origin(exc: BaseException) -> str:
    """Name of the package module where ``exc`` was raised."""
    tb = exc.__traceback__
    name = "eep"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("eep."):
            name = mod
        tb = tb.tb_next
    return name


HANDLERS = {"fit": cmd_fit, "causation": cmd_causation, "optimize": cmd_optimize,
            "simulate": cmd_simulate, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"eep {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"eep {args.command}: data error in {_origin(exc)} "
              f"[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"eep {args.command}: numerical failure in {_origin(exc)} "
              f"[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"eep {args.command}: invalid input in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
