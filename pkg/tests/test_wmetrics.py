import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eulerts import adcore as ad
from eulerts.sdesim import BsParams, OuParams, PathBatch, TimeGrid, simulate_bs, simulate_ou
from eulerts.wmetrics import (
    SCORE_DEVIATION,
    ConvergenceWarning,
    DegenerateCorrelationWarning,
    GaussianSummary,
    MetricReport,
    ScoreConfig,
    ScoreError,
    bures_sq,
    corr_mse,
    correlation_curve,
    discriminative_score,
    empirical_summary,
    envelope_curves,
    envelope_mse,
    evaluate,
    fid_avg,
    gaussian_w2_sq,
    hellinger,
    newton_schulz_sqrt,
    ns_residual,
    predictive_score,
    qvar_curve,
    qvar_mse,
    sqrtm_eig,
)

from constructions import commuting_pair, random_spd, trace_one

GRID = TimeGrid(0.0, 0.25, 30)


def test_bures_commuting_identity():
    g = np.random.default_rng(0)
    for n in (1, 2, 5, 10):
        a, b, q, wa, wb = commuting_pair(g, n)
        expected = np.sum((np.sqrt(wa) - np.sqrt(wb)) ** 2)
        assert bures_sq(a, b) == pytest.approx(expected, abs=1e-8)
        assert bures_sq(ad.Tensor(a), ad.Tensor(b)).item() == pytest.approx(expected, abs=1e-8)


def test_bures_is_symmetric_and_zero_on_diagonal():
    g = np.random.default_rng(1)
    a, b = random_spd(g, 4), random_spd(g, 4)
    assert bures_sq(a, b) == pytest.approx(bures_sq(b, a), abs=1e-10)
    assert bures_sq(a, a) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("cond", [1.0, 1e2, 1e4])
def test_newton_schulz_residual(cond):
    g = np.random.default_rng(2)
    for n in (1, 3, 8, 20):
        a = random_spd(g, n, cond)
        assert ns_residual(a) <= 1e-6
        s, s_inv = newton_schulz_sqrt(a)
        np.testing.assert_allclose(s, sqrtm_eig(a), atol=1e-6)
        np.testing.assert_allclose(s @ s_inv, np.eye(n), atol=1e-5)


def test_newton_schulz_warns_when_not_converged():
    a = random_spd(np.random.default_rng(3), 5, 1e8)
    with pytest.warns(ConvergenceWarning):
        newton_schulz_sqrt(a, iters=3)


def test_newton_schulz_rejects_non_square():
    with pytest.raises(ad.ShapeError):
        newton_schulz_sqrt(np.ones((2, 3)))
    with pytest.raises(ad.ShapeError):
        bures_sq(np.eye(2), np.eye(3))


def test_taped_bures_gradient_matches_finite_differences():
    g = np.random.default_rng(4)
    a = random_spd(g, 3)
    l = g.normal(size=(3, 3))
    b_of = lambda l: l @ l.T + 0.5 * np.eye(3)
    lt = ad.Tensor(l, requires_grad=True)
    tape = ad.Tape()
    with tape:
        val = bures_sq(a, ad.add(ad.matmul(lt, ad.transpose(lt)), 0.5 * np.eye(3)))
    grad = tape.backward(val)[lt]
    h = 1e-6
    num = np.zeros_like(l)
    for i in np.ndindex(l.shape):
        lp, lm = l.copy(), l.copy()
        lp[i] += h
        lm[i] -= h
        num[i] = (bures_sq(a, b_of(lp)) - bures_sq(a, b_of(lm))) / (2 * h)
    np.testing.assert_allclose(grad, num, rtol=1e-4, atol=1e-7)


def test_gaussian_w2_one_dimensional_closed_form():
    g1 = GaussianSummary(np.array([0.0]), np.array([[1.0]]))
    g2 = GaussianSummary(np.array([1.0]), np.array([[4.0]]))
    # (0 - 1)^2 + (1 - 2)^2
    assert gaussian_w2_sq(g1, g2) == pytest.approx(2.0, abs=1e-8)


def test_gaussian_w2_dimension_mismatch():
    with pytest.raises(ad.ShapeError):
        gaussian_w2_sq(GaussianSummary(np.zeros(2), np.eye(2)), GaussianSummary(np.zeros(3), np.eye(3)))


def test_empirical_summary_uses_population_covariance():
    x = np.array([[0.0], [2.0]])
    s = empirical_summary(x, reg=0.0)
    np.testing.assert_allclose(s.mean, [1.0])
    np.testing.assert_allclose(s.cov, [[1.0]])
    with pytest.raises(ValueError):
        empirical_summary(np.ones((1, 2)))


def test_hellinger_below_sqrt2_bures():
    g = np.random.default_rng(5)
    for _ in range(100):
        n = int(g.integers(1, 6))
        a, b = trace_one(g, n), trace_one(g, n)
        assert hellinger(a, b) <= np.sqrt(2.0) * np.sqrt(bures_sq(a, b)) + 1e-12


def test_hellinger_requires_unit_trace():
    with pytest.raises(ValueError):
        hellinger(np.eye(2), np.eye(2) / 2)


# -- path metrics ------------------------------------------------------------

def test_fid_is_zero_on_identical_batches_and_positive_otherwise():
    a = simulate_ou(OuParams(), GRID, 500, seed=1)
    assert fid_avg(a, a) == pytest.approx(0.0, abs=1e-10)
    b = simulate_ou(OuParams(mu=0.8), GRID, 500, seed=2)
    assert fid_avg(a, b) > 1e-3


def test_qvar_curve_by_hand():
    v = np.array([[0.0, 1.0, 3.0], [0.0, -1.0, -1.0]])[:, :, None]
    # increments^2: sample 0 -> 1, 4 ; sample 1 -> 1, 0
    np.testing.assert_allclose(qvar_curve(v), [0.0, 1.0, 3.0])
    assert qvar_mse(v, np.zeros_like(v)) == pytest.approx((0 + 1 + 9) / 3)


def test_qvar_matches_bs_expectation():
    # E sum (dX)^2 ~= sum E[X^2] sigma^2 dt for small dt
    b = simulate_bs(BsParams(), GRID, 20_000, seed=3)
    ex2 = np.mean(b.values[:, :-1, 0] ** 2, axis=0)
    expected = np.cumsum(ex2 * (0.09 * GRID.dt + (0.8 * GRID.dt) ** 2))
    np.testing.assert_allclose(qvar_curve(b)[1:], expected, rtol=0.02)


def test_metric_grid_mismatch_rejected():
    a = simulate_ou(OuParams(), GRID, 10, seed=1)
    b = simulate_ou(OuParams(), TimeGrid(0.0, 0.25, 20), 10, seed=1)
    with pytest.raises(ValueError):
        fid_avg(a, b)
    c = simulate_ou(OuParams(), TimeGrid(0.0, 0.5, 30), 10, seed=1)
    with pytest.raises(ValueError):
        qvar_mse(a, c)


def test_correlation_curve_recovers_and_excludes_pinned_date():
    corr = np.array([[1.0, 0.6], [0.6, 1.0]])
    b = simulate_bs(BsParams(0.8, (0.3, 0.3), (0.2, 0.2), corr), GRID, 20_000, seed=4)
    c, flagged = correlation_curve(b)
    assert c.shape == (30, 2, 2) and flagged == []
    np.testing.assert_allclose(c.mean(axis=0), corr, atol=0.03)


def test_corr_mse_needs_two_dims_and_warns_on_constant_coordinate():
    a = simulate_ou(OuParams(), GRID, 10, seed=1)
    with pytest.raises(ValueError):
        corr_mse(a, a)
    v = simulate_bs(BsParams(0.8, (0.3, 0.0), (0.2, 0.2)), GRID, 50, seed=1)
    with pytest.warns(DegenerateCorrelationWarning):
        val = corr_mse(v, v)
    assert val == 0.0


def test_envelope_mse_zero_on_self_and_positive_on_shift():
    a = simulate_ou(OuParams(), GRID, 300, seed=1)
    assert all(v == 0.0 for v in envelope_mse(a, a).values())
    shifted = PathBatch(a.values + 0.1, GRID)
    np.testing.assert_allclose(list(envelope_mse(a, shifted).values()), 0.01)
    cur = envelope_curves(a)
    assert np.all(cur["min"] <= cur["q05"]) and np.all(cur["q95"] <= cur["max"])


# -- recurrent scores ------------------------------------------------------------

FAST = ScoreConfig(iterations=150, batch=64, repetitions=2)


def test_scores_reject_tiny_datasets():
    a = simulate_ou(OuParams(), GRID, 50, seed=1)
    with pytest.raises(ScoreError):
        discriminative_score(a, a, seed=0, config=FAST)
    with pytest.raises(ScoreError):
        predictive_score(a, a, seed=0, config=FAST)


def test_discriminative_score_small_for_same_law_and_large_for_different_law():
    a = simulate_ou(OuParams(), GRID, 400, seed=1)
    b = simulate_ou(OuParams(), GRID, 400, seed=2)
    c = simulate_ou(OuParams(mu=1.2, sigma=0.4), GRID, 400, seed=3)
    same = discriminative_score(a, b, seed=0, config=FAST)
    diff = discriminative_score(a, c, seed=0, config=FAST)
    assert same < 0.1
    assert diff > 0.3
    assert discriminative_score(a, b, seed=0, config=FAST) == same


def test_predictive_score_prefers_matching_dynamics():
    a = simulate_ou(OuParams(), GRID, 400, seed=1)
    b = simulate_ou(OuParams(), GRID, 400, seed=2)
    c = simulate_ou(OuParams(theta=1.0, mu=0.1, sigma=0.5), GRID, 400, seed=3)
    assert predictive_score(a, b, seed=0, config=FAST) < predictive_score(a, c, seed=0, config=FAST)


# -- report ------------------------------------------------------------------

def test_evaluate_and_report_round_trip():
    a = simulate_ou(OuParams(), GRID, 200, seed=1)
    b = simulate_ou(OuParams(), GRID, 200, seed=2)
    rep = evaluate(a, b, ("fid", "qvar", "corr", "envelope", "disc"), seed=0, score_config=FAST)
    rep.check()
    assert rep.corr_mse is None and "corr" in rep.metadata["skipped"]
    assert rep.disc_score is not None
    assert SCORE_DEVIATION in rep.deviations
    back = MetricReport.from_dict(json.loads(rep.to_json()))
    assert back.flat() == rep.flat()
    assert back.deviations == rep.deviations
    lines = rep.to_text().splitlines()
    assert lines[0].startswith("fid_avg\t")


def test_evaluate_records_skipped_scores():
    a = simulate_ou(OuParams(), GRID, 30, seed=1)
    rep = evaluate(a, a, ("fid", "pred"), seed=0, score_config=FAST)
    assert rep.pred_score is None and "pred" in rep.metadata["skipped"]


def test_evaluate_rejects_unknown_metric():
    a = simulate_ou(OuParams(), GRID, 10, seed=1)
    with pytest.raises(ValueError):
        evaluate(a, a, ("fid", "bogus"))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_metrics_are_nonnegative_and_symmetric(m, seed):
    g = np.random.default_rng(seed)
    a = np.cumsum(g.normal(size=(m, 6, 2)), axis=1)
    b = np.cumsum(g.normal(size=(m, 6, 2)), axis=1)
    a[:, 0] = b[:, 0] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCorrelationWarning)
        for fn in (fid_avg, qvar_mse, corr_mse):
            v = fn(a, b)
            assert v >= 0
            assert v == pytest.approx(fn(b, a), rel=1e-8, abs=1e-12)
