import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from eep import cli
from eep.cli import _float_list, _int_list, _overrides, main
from eep.errors import ConvergenceFailure
from eep.pipeline import FittedModel
from eep.vine import build_blocks, vine_loglik

from synthetic import planted_vine, simulate_data

FIT = ["--markov-orders", "1-2", "--replicates", "100", "--candidate-quantiles", "0.85,0.9,0.95"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_data(path, x, names=("a", "b", "c")):
    np.savetxt(path, x, delimiter=",", header=",".join(names), comments="", fmt="%.10g")
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = write_data(root / "data.csv", simulate_data(planted_vine(0.6), 1500, 0))
    run = root / "run"
    base = ["--input-path", str(data), "--output-dir", str(run), "--seed", "5"]
    assert main(["fit"] + base + FIT) == 0
    return root, data, run, base


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- argument parsing and configuration

def test_list_parsers():
    assert _int_list("1-3") == [1, 2, 3]
    assert _int_list("1, 4,6-7") == [1, 4, 6, 7]
    assert _float_list("0.1,0.5") == [0.1, 0.5]
    assert _float_list("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert _float_list("") == []
    assert _overrides("a=0.9, c=0.95") == {"a": 0.9, "c": 0.95}


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"horizon": 2, "alpha": 0.1, "lambdas": [0, 1]}))
    args = cli.build_parser().parse_args(["fit", "--config", str(cfg_file), "--alpha", "0.2"])
    cfg = cli.resolve_config(args)
    assert cfg.horizon == 2 and cfg.alpha == 0.2 and cfg.lambdas == [0, 1]
    assert cfg.psi0 == 0.9


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"not_a_field": 1}))
    assert main(["fit", "--config", str(bad), "--seed", "1"]) == 2
    assert "unknown config keys" in capsys.readouterr().err
    assert main(["fit", "--config", str(tmp_path / "nope.json"), "--seed", "1"]) == 2


def test_digest_tracks_settings():
    a, b = cli.RunConfig(seed=1), cli.RunConfig(seed=1)
    assert a.digest() == b.digest()
    b.alpha = 0.1
    assert a.digest() != b.digest()


# -- validation happens before any data is touched

@pytest.mark.parametrize("extra, message", [
    (["--cause-variable", "zz"], "cause variable"),
    (["--columns", "a,q"], "columns not in input header"),
    (["--markov-orders", "1", "--cause-variable", "a", "--horizon", "3"], "exceeds"),
    (["--order-criterion", "hqic"], "order criterion"),
    (["--families", "clayton,student"], "unknown copula family"),
    (["--candidate-quantiles", "0.9,0.8"], "strictly increasing"),
    (["--replicates", "20"], "100 bootstrap"),
    (["--psi0", "1.5"], "psi0"),
])
def test_fit_config_errors(tmp_path, capsys, extra, message):
    data = write_data(tmp_path / "d.csv", np.random.default_rng(0).exponential(size=(50, 3)))
    out = tmp_path / "out"
    code = main(["fit", "--input-path", str(data), "--output-dir", str(out), "--seed", "1"] + extra)
    assert code == 2
    assert message in capsys.readouterr().err
    assert not out.exists()


def test_seed_required(tmp_path, capsys):
    data = write_data(tmp_path / "d.csv", np.ones((5, 3)))
    assert main(["fit", "--input-path", str(data)]) == 2
    assert "--seed" in capsys.readouterr().err


def test_missing_input_echoes_path(tmp_path, capsys):
    path = tmp_path / "absent.csv"
    assert main(["diagnose", "--input-path", str(path), "--seed", "1"]) == 2
    err = capsys.readouterr().err
    assert "I/O error" in err and str(path) in err


def test_rows_with_gaps_rejected_with_line_numbers(tmp_path, capsys):
    path = tmp_path / "gaps.csv"
    path.write_text("a,b\n1,2\n3,\n5,6\nx,1\n")
    assert main(["diagnose", "--input-path", str(path), "--seed", "1",
                 "--output-dir", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "lines 3, 5" in err


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise ConvergenceFailure("optimizer diverged")
    monkeypatch.setattr(cli, "fit_model", boom)
    data = write_data(tmp_path / "d.csv", np.random.default_rng(0).exponential(size=(50, 3)))
    assert main(["fit", "--input-path", str(data), "--output-dir", str(tmp_path / "o"),
                 "--seed", "1"]) == 4
    assert "ConvergenceFailure" in capsys.readouterr().err


def test_timestamp_column_excluded(tmp_path):
    path = tmp_path / "ts.csv"
    rng = np.random.default_rng(0)
    rows = ["time,a,b"] + [f"2020-01-01T{t:05d},{rng.normal()},{rng.normal()}" for t in range(300)]
    path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "o"
    assert main(["diagnose", "--input-path", str(path), "--timestamp-column", "time",
                 "--output-dir", str(out), "--seed", "1", "--max-lag", "2"]) == 0
    assert [r["variable"] for r in read_csv(out / "adf.csv")] == ["a", "b"]


# -- fit

def test_fit_outputs_and_artifact_roundtrip(workspace):
    root, data, run, base = workspace
    doc = json.loads((run / "model.json").read_text())
    assert doc["artifact_schema"] == cli.ARTIFACT_SCHEMA
    assert doc["variables"] == ["a", "b", "c"]
    table = read_csv(run / "criteria_by_order.csv")
    assert [int(r["p"]) for r in table] == [1, 2]
    model = FittedModel.load(run)
    x = np.loadtxt(data, delimiter=",", skiprows=1)
    ll = vine_loglik(model.vine, build_blocks(model.pit(x), model.vine.p))
    assert abs(ll - doc["training"]["vine_loglik"]) < 1e-9
    assert len(read_csv(run / "margins.csv")) == 3
    assert len(read_csv(run / "vine_classes.csv")) == model.vine.n_params


def test_fit_rerun_identical_artifact(workspace, tmp_path):
    root, data, run, base = workspace
    before = {p.name: digest(p) for p in run.iterdir() if p.name.startswith(("model", "margin", "criteria"))}
    assert main(["fit"] + base + FIT) == 0
    after = {p.name: digest(p) for p in run.iterdir() if p.name in before}
    assert before == after


def test_fit_mbicv_order_not_above_bic(tmp_path):
    data = write_data(tmp_path / "d.csv", simulate_data(planted_vine(0.5), 1200, 11))
    out = tmp_path / "o"
    assert main(["fit", "--input-path", str(data), "--output-dir", str(out), "--seed", "2",
                 "--markov-orders", "1-3", "--replicates", "100",
                 "--candidate-quantiles", "0.85,0.9,0.95"]) == 0
    table = read_csv(out / "criteria_by_order.csv")
    best = {c: int(min(table, key=lambda r: float(r[c]))["p"]) for c in ("bic", "mbicv")}
    assert best["mbicv"] <= best["bic"]


def test_unknown_schema_rejected(workspace, tmp_path, capsys):
    root, data, run, base = workspace
    other = tmp_path / "copy"
    other.mkdir()
    for p in run.iterdir():
        (other / p.name).write_bytes(p.read_bytes())
    doc = json.loads((other / "model.json").read_text())
    doc["artifact_schema"] = 99
    (other / "model.json").write_text(json.dumps(doc))
    code = main(["simulate", "--input-path", str(data), "--model-dir", str(other),
                 "--output-dir", str(tmp_path / "o"), "--seed", "1"])
    assert code == 2 and "schema" in capsys.readouterr().err


# -- causation

def test_causation_planted_direction(workspace):
    root, data, run, base = workspace
    assert main(["causation"] + base + ["--cause-variable", "a", "--v-grid", "0.5:2.5:5",
                                        "--n-synthetic", "800"]) == 0
    for name in ("pc_empirical.csv", "pc_synthetic.csv"):
        rows = read_csv(run / name)
        assert len(rows) == 5
        assert all(float(r["p_f"]) >= float(r["p_cf"]) for r in rows)
    comp = read_csv(run / "pc_comparison.csv")
    assert len(comp) == 5 and "synthetic_pns" in comp[0]


def test_causation_single_point_grid(workspace, tmp_path):
    root, data, run, base = workspace
    out = tmp_path / "one"
    args = ["--input-path", str(data), "--model-dir", str(run), "--output-dir", str(out),
            "--seed", "5", "--cause-variable", "a", "--v-grid", "1.2", "--n-synthetic", "300"]
    assert main(["causation"] + args) == 0
    for name in ("pc_empirical.csv", "pc_synthetic.csv", "pc_comparison.csv"):
        assert len(read_csv(out / name)) == 1


def test_causation_empty_world(workspace, tmp_path, capsys):
    root, data, run, base = workspace
    x = np.loadtxt(data, delimiter=",", skiprows=1)
    x[:, 0] *= 1e-3
    quiet = write_data(tmp_path / "quiet.csv", x)
    code = main(["causation", "--input-path", str(quiet), "--model-dir", str(run),
                 "--output-dir", str(tmp_path / "o"), "--seed", "5", "--cause-variable", "a"])
    err = capsys.readouterr().err
    assert code == 3
    assert "EmptyWorld" in err and "cause a >" in err


def test_causation_needs_model(tmp_path, capsys):
    data = write_data(tmp_path / "d.csv", np.random.default_rng(0).exponential(size=(50, 3)))
    code = main(["causation", "--input-path", str(data), "--output-dir", str(tmp_path / "none"),
                 "--seed", "1", "--cause-variable", "a"])
    assert code == 2 and "eep fit" in capsys.readouterr().err


# -- optimize

def test_optimize_lambda_grid_and_toggle(workspace, tmp_path):
    root, data, run, base = workspace
    out = tmp_path / "opt"
    args = ["--input-path", str(data), "--model-dir", str(run), "--output-dir", str(out),
            "--seed", "5", "--cause-variable", "a", "--n-synthetic", "600", "--generations", "40",
            "--lambdas", "0,0.01,0.1,1,10,100", "--norm", "L1", "--include-cause", "both"]
    assert main(["optimize"] + args) == 0
    res = read_csv(out / "optimize_results.csv")
    assert len(res) == 12
    assert {r["include_cause"] for r in res} == {"true", "false"}
    shift = read_csv(out / "mass_shift.csv")
    assert len(shift) == 6 * 3
    w = read_csv(out / "weights_L1_lambda0_causeout.csv")
    assert float(w[0]["a"]) == 0.0
    assert max(float(w[0][c]) for c in "abc") == 1.0


def test_optimize_empty_lambda_list(workspace, capsys):
    root, data, run, base = workspace
    assert main(["optimize"] + base + ["--cause-variable", "a", "--lambdas", ""]) == 2
    assert "lambda list is empty" in capsys.readouterr().err


def test_horizon_beyond_fitted_order(workspace, capsys):
    root, data, run, base = workspace
    model = FittedModel.load(run)
    code = main(["causation"] + base + ["--cause-variable", "a",
                                        "--horizon", str(model.vine.p + 1)])
    assert code == 2 and "exceeds the fitted Markov order" in capsys.readouterr().err


# -- simulate and diagnose

def test_simulate(workspace, tmp_path):
    root, data, run, base = workspace
    out = tmp_path / "sim"
    args = ["--input-path", str(data), "--model-dir", str(run), "--output-dir", str(out),
            "--seed", "3", "--n-steps", "150"]
    assert main(["simulate"] + args) == 0
    rows = read_csv(out / "simulated.csv")
    assert len(rows) == 150 and all(float(r["a"]) > 0 for r in rows)
    first = digest(out / "simulated.csv")
    assert main(["simulate"] + args) == 0
    assert digest(out / "simulated.csv") == first


def test_diagnose_outputs(tmp_path):
    rng = np.random.default_rng(0)
    n = 20000
    e = rng.normal(size=(n, 2))
    x = np.zeros_like(e)
    for t in range(1, n):
        x[t] = 0.6 * x[t - 1] + e[t]
    data = write_data(tmp_path / "ar.csv", x, ("p", "q"))
    out = tmp_path / "o"
    assert main(["diagnose", "--input-path", str(data), "--output-dir", str(out), "--seed", "1",
                 "--max-lag", "5", "--noise-fraction", "0.05"]) == 0
    adf = read_csv(out / "adf.csv")
    assert all(abs(float(r["variance"]) - 1) < 1e-9 for r in adf)
    assert all(r["reject"] == "true" for r in adf)
    diag = read_csv(out / "diagnostics.csv")
    acf = {int(r["lag"]): float(r["value"]) for r in diag if r["kind"] == "acf" and r["i"] == "p"}
    # 5% jitter shrinks lag correlations by the factor 1/(1 + 0.05^2)
    for h in range(1, 6):
        assert abs(acf[h] - 0.6 ** h) < 0.02
    kinds = {r["kind"] for r in diag}
    assert kinds == {"acf", "pacf", "ccf", "pccf", "extremal"}
    hist = read_csv(out / "histograms.csv")
    assert sum(int(r["count"]) for r in hist if r["variable"] == "p") == n


def test_full_pipeline_byte_identical(tmp_path):
    data = write_data(tmp_path / "d.csv", simulate_data(planted_vine(0.6), 800, 1))
    runs = []
    for label in ("first", "second"):
        out = tmp_path / "same"
        if out.exists():
            for p in out.iterdir():
                p.unlink()
        base = ["--input-path", str(data), "--output-dir", str(out), "--seed", "9"]
        assert main(["fit"] + base + ["--replicates", "100", "--candidate-quantiles", "0.9"]) == 0
        assert main(["causation"] + base + ["--cause-variable", "a", "--n-synthetic", "300",
                                            "--v-grid", "0.5:2:4"]) == 0
        assert main(["optimize"] + base + ["--cause-variable", "a", "--n-synthetic", "300",
                                           "--generations", "20", "--lambdas", "0,1"]) == 0
        runs.append({p.name: digest(p) for p in sorted(out.iterdir())})
    assert runs[0] == runs[1]
    assert any(name.endswith(".csv") for name in runs[0])
