import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from eep.errors import AllThresholdsRejected, ConvergenceFailure, InsufficientData
from eep.margins import (GpdParams, MarginalModel, Transform, bootstrap_gof_pvalue,
                         fit_gpd_mle, fit_marginal_model, forward_stop, gpd_loglik,
                         gpd_quantile, gpd_survival, pit_forward, pit_inverse,
                         select_threshold_forward_stop, transform_margin_H)

from synthetic import lognormal_body


def gpd_sample(n, shape, scale, seed, threshold=0.0):
    u = np.random.default_rng(seed).random(n)
    return gpd_quantile(u, GpdParams(shape, scale, threshold))


# -- survival / quantile

def test_survival_at_threshold_is_one():
    assert gpd_survival(3.0, GpdParams(0.3, 2.0, 3.0)) == 1.0
    assert gpd_survival(1.0, GpdParams(0.3, 2.0, 3.0)) == 1.0


def test_survival_exponential_case():
    assert gpd_survival(-math.log(0.2), GpdParams(0.0, 1.0)) == pytest.approx(0.2, abs=1e-12)
    assert gpd_survival(1.6094, GpdParams(0.0, 1.0)) == pytest.approx(0.2, abs=1e-4)


def test_survival_beyond_upper_endpoint():
    p = GpdParams(-0.5, 1.0)
    assert p.upper_endpoint == 2.0
    assert gpd_survival(2.5, p) == 0.0
    assert gpd_survival(2.0, p) == 0.0


def test_survival_continuous_in_shape():
    x = np.linspace(0, 10, 101)
    z = x / 1.3
    ref = gpd_survival(x, GpdParams(0.0, 1.3))
    for xi in (3e-8, -3e-8, 1e-9):
        assert np.max(np.abs(gpd_survival(x, GpdParams(xi, 1.3)) - ref)) < 1e-8
    # at |shape| = 1e-6 the gap is the true first-order term, no cancellation
    for xi in (1e-6, -1e-6):
        first_order = ref * (1.0 + xi * z ** 2 / 2)
        assert np.max(np.abs(gpd_survival(x, GpdParams(xi, 1.3)) - first_order)) < 1e-11


def test_survival_nonincreasing():
    x = np.linspace(-1, 20, 500)
    for xi in (-0.4, 0.0, 0.5):
        assert np.all(np.diff(gpd_survival(x, GpdParams(xi, 1.0))) <= 0)


def test_quantile_examples():
    assert gpd_quantile(0.0, GpdParams(0.2, 1.0, 4.0)) == 4.0
    assert gpd_quantile(0.8, GpdParams(0.0, 1.0)) == pytest.approx(1.6094, abs=1e-4)
    assert gpd_quantile(0.75, GpdParams(0.5, 2.0, 1.0)) == pytest.approx(5.0, rel=1e-14)


def test_quantile_matches_bisection():
    p = GpdParams(0.5, 2.0, 1.0)
    # root of survival(x) = 0.25
    from scipy.optimize import brentq
    x = brentq(lambda t: gpd_survival(t, p) - 0.25, 1.0, 100.0, xtol=1e-14)
    assert gpd_quantile(0.75, p) == pytest.approx(x, rel=1e-12)


@pytest.mark.parametrize("u", [-0.1, 1.0, 1.5, float("nan")])
def test_quantile_domain(u):
    with pytest.raises(ValueError):
        gpd_quantile(u, GpdParams(0.0, 1.0))


def test_quantile_survival_roundtrip_random_params():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        p = GpdParams(rng.uniform(-0.5, 0.8), rng.uniform(0.1, 5), rng.uniform(-3, 3))
        u = rng.uniform(0, 0.999)
        x = gpd_quantile(u, p)
        if p.shape < 0 and x >= p.upper_endpoint:
            continue
        back = gpd_quantile(1.0 - gpd_survival(x, p), p)
        worst = max(worst, abs(back - x) / max(1.0, abs(x)))
    assert worst < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.45, 0.9), st.floats(0.05, 10.0), st.floats(0.0, 0.99))
def test_quantile_inverts_survival(shape, scale, u):
    p = GpdParams(shape, scale)
    assert 1.0 - gpd_survival(gpd_quantile(u, p), p) == pytest.approx(u, abs=1e-10)


def test_params_validation():
    with pytest.raises(ValueError):
        GpdParams(0.1, 0.0)
    with pytest.raises(ValueError):
        GpdParams(0.1, 1.0, 0.0, 1.0)


# -- MLE

@pytest.mark.parametrize("shape,scale", [(0.2, 1.0), (0.0, 1.0), (-0.2, 1.0), (0.43, 0.5)])
def test_mle_recovers_parameters(shape, scale):
    x = gpd_sample(10000, shape, scale, seed=11)
    fit = fit_gpd_mle(x[x > 0], 0.0)
    assert abs(fit.params.shape - shape) < 0.06
    assert abs(fit.params.scale / scale - 1) < 0.08
    assert fit.loglik >= gpd_loglik(x, GpdParams(shape, scale)) - 1e-9
    assert fit.shape_se > 0 and fit.scale_se > 0


def test_mle_exponential_shape_close_to_zero():
    x = gpd_sample(10000, 0.0, 1.0, seed=4)
    assert abs(fit_gpd_mle(x, 0.0).params.shape) < 0.05


def test_mle_dominates_truth_over_seeds():
    for seed in range(20):
        x = gpd_sample(400, 0.25, 2.0, seed) + 1.0
        fit = fit_gpd_mle(x, 1.0)
        assert fit.loglik >= gpd_loglik(x, GpdParams(0.25, 2.0, 1.0)) - 1e-9


def test_mle_support_constraint_for_negative_shape():
    x = gpd_sample(3000, -0.4, 1.0, seed=2)
    p = fit_gpd_mle(x, 0.0).params
    assert np.all(1.0 + p.shape * x / p.scale > 0)


def test_mle_standard_errors_match_simulation():
    # observed-information SEs against the spread of estimates over replicate samples
    est = np.array([fit_gpd_mle(gpd_sample(1000, 0.2, 1.0, s), 0.0).params.shape
                    for s in range(60)])
    se = fit_gpd_mle(gpd_sample(1000, 0.2, 1.0, 999), 0.0).shape_se
    assert 0.7 < est.std(ddof=1) / se < 1.4


def test_mle_degenerate_and_short_inputs():
    with pytest.raises(ConvergenceFailure):
        fit_gpd_mle(np.full(50, 2.0), 1.0)
    with pytest.raises(InsufficientData):
        fit_gpd_mle(np.arange(1.0, 20.0), 0.0)
    with pytest.raises(ValueError):
        fit_gpd_mle(np.arange(0.0, 50.0), 0.0)


# -- goodness of fit and ForwardStop

def test_bootstrap_pvalue_deterministic_and_in_range():
    x = gpd_sample(500, 0.1, 1.0, seed=3)
    a = bootstrap_gof_pvalue(x, 0.0, 100, seed=5)
    assert a == bootstrap_gof_pvalue(x, 0.0, 100, seed=5)
    assert 0.0 <= a <= 1.0


def test_batch_refit_falls_back_to_boundary_fit():
    # shape -0.7 with 40 points: many samples have no interior likelihood maximum
    from eep.margins import _batch_loglik, _fit_batch
    u = np.random.default_rng(8).random((200, 40))
    y = np.sort(gpd_quantile(u, GpdParams(-0.7, 2.0)), axis=1)
    xi, sigma, ok = _fit_batch(y)
    assert ok.all()
    ridge = np.flatnonzero(xi == -1.0)
    assert len(ridge) > 0
    assert np.allclose(sigma[ridge], y[ridge, -1], rtol=1e-15)
    # no interior point beats the boundary value -n log max(y)
    gx, gs = np.meshgrid(np.linspace(-0.99, 0.5, 60), np.linspace(-1, 2, 60))
    for r in ridge[:5]:
        rows = np.repeat(y[r][None], gx.size, axis=0)
        ll = _batch_loglik(gx.ravel(), np.log(y[r, -1]) + gs.ravel(), rows)
        assert np.max(ll) <= -40 * np.log(y[r, -1]) + 1e-9
    assert 0.0 <= bootstrap_gof_pvalue(y[0] + 1.0, 1.0, 100, seed=2) <= 1.0


def test_bootstrap_needs_100_replicates():
    with pytest.raises(ValueError):
        bootstrap_gof_pvalue(gpd_sample(200, 0.1, 1.0, 0), 0.0, replicates=50)


def test_bootstrap_pvalue_size_under_null():
    # frozen from a 100-repetition run: 5 of 100 below 0.05
    p = np.array([bootstrap_gof_pvalue(gpd_sample(300, 0.1, 1.0, 1000 + s), 0.0, 100, seed=s)
                  for s in range(100)])
    assert abs(np.mean(p < 0.05) - 0.05) <= 0.04


def test_bootstrap_rejects_lognormal_body_at_low_threshold():
    rejections = 0
    for s in range(10):
        x = lognormal_body(5000, s)
        mu = np.quantile(x, 0.8)
        rejections += bootstrap_gof_pvalue(x[x > mu], mu, 100, seed=s) < 0.05
    assert rejections >= 9


def test_forward_stop_examples():
    assert forward_stop([0.9, 0.9, 0.9], 0.05) == 0
    assert forward_stop([1e-6, 0.9, 0.9], 0.05) == 1
    assert forward_stop([1e-9] * 4, 0.05) == 4
    # a later small p-value can pull the running mean back under alpha
    assert forward_stop([1e-6, 0.04, 1e-6, 0.9], 0.05) == 3


def test_forward_stop_matches_definition():
    rng = np.random.default_rng(8)
    for _ in range(200):
        p = rng.beta(0.3, 1.0, size=rng.integers(1, 10))
        vals = [np.mean(-np.log(1 - p[:k])) for k in range(1, len(p) + 1)]
        expect = max([k for k, v in zip(range(1, len(p) + 1), vals) if v <= 0.05], default=0)
        assert forward_stop(p, 0.05) == expect


def test_threshold_selection_on_gpd_picks_lowest():
    x = gpd_sample(2000, 0.2, 1.0, seed=21)
    res = select_threshold_forward_stop(x, np.arange(0.80, 0.985, 0.02), 0.05, seed=1,
                                        replicates=100)
    assert res.chosen_index == 0
    assert res.threshold == pytest.approx(np.quantile(x, 0.8))
    assert len(res.p_values) == 10


def test_threshold_selection_all_rejected(monkeypatch):
    import eep.margins as mg
    monkeypatch.setattr(mg, "bootstrap_gof_pvalue", lambda *a, **k: 1e-9)
    with pytest.raises(AllThresholdsRejected):
        select_threshold_forward_stop(gpd_sample(1000, 0.1, 1.0, 0), (0.8, 0.9), 0.05)


def test_threshold_selection_rejects_bad_candidates():
    x = gpd_sample(1000, 0.1, 1.0, 0)
    with pytest.raises(ValueError):
        select_threshold_forward_stop(x, (0.9, 0.8), 0.05)
    with pytest.raises(ValueError):
        select_threshold_forward_stop(x, (0.8, 0.9), 1.5)


def test_threshold_selection_affine_invariance():
    x = lognormal_body(3000, 7)
    q = (0.8, 0.85, 0.9, 0.95)
    a = select_threshold_forward_stop(x, q, 0.05, seed=3, replicates=100)
    b = select_threshold_forward_stop(2.5 * x + 10.0, q, 0.05, seed=3, replicates=100)
    assert a.rejected_count == b.rejected_count
    assert np.allclose(a.p_values, b.p_values, atol=0.03)


# -- semiparametric model

@pytest.fixture(scope="module")
def model():
    x = gpd_sample(2000, 0.2, 1.0, seed=5)
    return fit_marginal_model(x, (0.8, 0.9), 0.05, seed=0, name="m", replicates=100)


def test_model_invariants(model):
    n = model.n
    assert np.all(np.diff(model.sorted_sample) >= 0)
    q = model.gpd.threshold_quantile
    assert model.threshold == pytest.approx(np.quantile(model.sorted_sample, q))
    above = np.mean(model.sorted_sample > model.threshold)
    assert abs(above - (1 - q)) <= 1.0 / n


def test_model_short_sample():
    with pytest.raises(InsufficientData):
        fit_marginal_model(np.arange(100.0))


def test_model_manual_override():
    x = gpd_sample(1000, 0.2, 1.0, seed=5)
    m = fit_marginal_model(x, threshold_quantile=0.9)
    assert m.selection is None
    assert m.gpd.threshold_quantile == 0.9


def test_student_t_tail_shape():
    x = stats.t.rvs(3, size=20000, random_state=np.random.default_rng(1))
    m = fit_marginal_model(x, (0.95, 0.97, 0.98), seed=0, replicates=100)
    assert abs(m.gpd.shape - 1 / 3) < 0.1


def test_pit_examples(model):
    n = model.n
    assert pit_forward(model.sorted_sample[0], model) == pytest.approx(1 / (n + 1))
    assert pit_forward(model.threshold, model) == pytest.approx(model.gpd.threshold_quantile,
                                                                abs=1.0 / n)
    far = pit_forward(model.threshold + np.array([1, 10, 100, 1e4]), model)
    assert np.all(np.diff(far) > 0) and far[-1] > 1 - 1e-6 and far[-1] < 1.0


def test_pit_monotone_and_interior(model):
    x = np.linspace(model.sorted_sample[0] - 1, model.sorted_sample[-1] * 3, 5000)
    u = pit_forward(x, model)
    assert np.all(np.diff(u) >= 0)
    assert np.all((u > 0) & (u < 1))


def test_pit_inverse_examples(model):
    assert pit_inverse(model.splice_probability, model) == pytest.approx(model.threshold)
    # the nominal quantile sits within 1/n of the rank-based splice point
    assert pit_inverse(model.gpd.threshold_quantile, model) == pytest.approx(model.threshold,
                                                                             abs=0.01)
    x = model.threshold + np.array([0.01, 0.5, 3.0, 20.0])
    assert np.allclose(pit_inverse(pit_forward(x, model), model), x, rtol=1e-10, atol=1e-10)
    with pytest.raises(ValueError):
        pit_inverse(1.0, model)


def test_pit_inverse_body_within_one_gap(model):
    xs = model.sorted_sample
    body = xs[xs < model.threshold][5:-5:7]
    back = pit_inverse(pit_forward(body, model), model)
    gap = np.max(np.diff(xs[xs <= model.threshold]))
    assert np.max(np.abs(back - body)) <= gap


def test_pit_inverse_median_of_symmetric_sample():
    x = np.random.default_rng(3).normal(size=2001)
    m = fit_marginal_model(x, threshold_quantile=0.95)
    assert pit_inverse(0.5, m) == pytest.approx(np.median(x), abs=0.01)


def test_pit_uniformity_ks():
    passed = 0
    for s in range(100):
        x = gpd_sample(600, 0.1, 1.0, seed=s)
        m = fit_marginal_model(x, threshold_quantile=0.8)
        u = pit_forward(x, m)
        passed += stats.kstest(u, "uniform").statistic < 1.36 / math.sqrt(len(x))
    assert passed >= 95


def test_pit_ties_get_average_ranks():
    tail = 4.0 + gpd_sample(500, 0.1, 1.0, seed=9)
    x = np.concatenate([np.repeat([1.0, 2.0, 3.0], 200), tail])
    m = fit_marginal_model(x, threshold_quantile=0.9)
    assert pit_forward(1.0, m) == pytest.approx(100.5 / (len(x) + 1))


def test_model_save_load_roundtrip(model, tmp_path):
    model.save(tmp_path / "m")
    back = MarginalModel.load(tmp_path / "m")
    assert back.gpd == model.gpd and back.name == "m"
    assert np.array_equal(back.sorted_sample, model.sorted_sample)
    json.loads((tmp_path / "m.json").read_text())


# -- transforms

def test_transform_examples():
    assert transform_margin_H(0.3, Transform("identity")) == 0.3
    assert transform_margin_H(0.8, Transform("exponential")) == pytest.approx(1.6094, abs=1e-4)
    assert transform_margin_H(0.8, Transform("gpd", 0.0, 1.0)) == \
        transform_margin_H(0.8, Transform("exponential"))
    assert transform_margin_H(0.75, Transform("gpd", 0.5, 2.0)) == pytest.approx(4.0)


def test_transform_domain():
    with pytest.raises(ValueError):
        transform_margin_H(1.0, Transform("exponential"))
    with pytest.raises(ValueError):
        transform_margin_H(0.0, Transform("gpd", 0.2, 1.0))
    with pytest.raises(ValueError):
        Transform("log")
