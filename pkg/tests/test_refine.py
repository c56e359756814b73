"""Importance weighting, resampling, and evidence bounds."""

import math

import numpy as np
import pytest
from scipy import stats

from drivefit.dynamics import get_vehicle
from drivefit.nn import policy_new, value_new
from drivefit.prior import PriorConfig, sample_prior
from drivefit.prior import _scripted_burnin
from drivefit.refine import (
    OptimalityModel,
    importance_weights,
    log_evidence,
    refine,
    resample,
    score_s0,
)

HEAVY = get_vehicle("heavytruck")


def _scores_rng():
    return np.random.default_rng(2024)


# -- importance weights ----------------------------------------------------------

def test_weights_uniform_for_equal_scores():
    w = importance_weights(np.full(7, 3.25))
    np.testing.assert_allclose(w, np.full(7, 1.0 / 7.0), atol=1e-15)


def test_weights_two_to_one():
    w = importance_weights([math.log(2.0), 0.0])
    np.testing.assert_allclose(w, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)


def test_weights_dominant_score_takes_all():
    w = importance_weights([0.0, 800.0, 0.0])
    assert w[1] == pytest.approx(1.0, abs=1e-15)
    assert w[0] == 0.0 and w[2] == 0.0  # exp(-800) underflows to zero


def test_weights_shift_invariance():
    rng = _scores_rng()
    for _ in range(50):
        scores = rng.normal(0.0, 5.0, size=rng.integers(2, 40))
        base = importance_weights(scores)
        for c in (1e-3, 1.0, -7.0, 1e3, -1e3):
            np.testing.assert_allclose(importance_weights(scores + c), base,
                                       atol=1e-12)


def test_weights_normalized():
    rng = _scores_rng()
    for _ in range(200):
        scores = rng.normal(0.0, 10.0, size=rng.integers(1, 100))
        w = importance_weights(scores)
        assert abs(w.sum() - 1.0) < 1e-9
        assert np.all(w >= 0.0)


def test_weights_reject_bad_input():
    for bad in ([], [[0.0, 1.0]], [0.0, float("nan")], [0.0, float("inf")]):
        with pytest.raises(ValueError):
            importance_weights(bad)


# -- resampling ------------------------------------------------------------------

def test_resample_single_candidate():
    idx = resample([1.0], np.random.default_rng(0), count=32)
    assert idx.tolist() == [0] * 32


def test_resample_never_picks_zero_weight():
    idx = resample([0.5, 0.0, 0.5], np.random.default_rng(1), count=2000)
    assert set(idx.tolist()) <= {0, 2}


def test_resample_unnormalized_weights_ok():
    a = resample([2.0, 3.0, 5.0], np.random.default_rng(7), count=100)
    b = resample([0.2, 0.3, 0.5], np.random.default_rng(7), count=100)
    assert a.tolist() == b.tolist()


def test_resample_matches_weights_chi_square():
    # frequency test at alpha = 0.01
    w = np.array([0.2, 0.3, 0.5])
    draws = resample(w, np.random.default_rng(123), count=10_000)
    counts = np.bincount(draws, minlength=3)
    result = stats.chisquare(counts, f_exp=w * 10_000)
    assert result.pvalue > 0.01


def test_resample_rejects_bad_input():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        resample([], rng)
    with pytest.raises(ValueError):
        resample([0.5, -0.1], rng)
    with pytest.raises(ValueError):
        resample([0.0, 0.0], rng)
    with pytest.raises(ValueError):
        resample([float("nan"), 1.0], rng)
    with pytest.raises(ValueError):
        resample([1.0], rng, count=0)


def test_resample_deterministic_given_rng():
    a = resample([0.25, 0.75], np.random.default_rng(5), count=50)
    b = resample([0.25, 0.75], np.random.default_rng(5), count=50)
    assert a.tolist() == b.tolist()


# -- evidence --------------------------------------------------------------------

def test_log_evidence_frozen_value():
    scores = [0.0, 0.0, math.log(4.0), math.log(4.0)]
    # mean importance ratio (1 + 1 + 4 + 4) / 4 = 2.5
    assert log_evidence(scores) == pytest.approx(0.9162907318741551, abs=1e-15)


def test_log_evidence_single_score_is_identity():
    assert log_evidence([3.7]) == 3.7
    assert log_evidence([-120.0]) == -120.0


def test_log_evidence_jensen_lower_bound():
    rng = _scores_rng()
    for _ in range(1000):
        scores = rng.normal(0.0, 3.0, size=rng.integers(1, 30))
        assert log_evidence(scores) >= scores.mean() - 1e-12


def test_log_evidence_monotone_in_each_score():
    scores = np.array([0.5, -1.0, 2.0])
    base = log_evidence(scores)
    for i in range(3):
        bumped = scores.copy()
        bumped[i] += 0.1
        assert log_evidence(bumped) > base


def test_log_evidence_extreme_scores_stable():
    assert math.isfinite(log_evidence([1e4, 1e4 - 2.0]))
    assert log_evidence([1e4, 1e4]) == pytest.approx(1e4)


def test_log_evidence_rejects_bad_input():
    for bad in ([], [[1.0]], [float("inf")]):
        with pytest.raises(ValueError):
            log_evidence(bad)


def test_optimality_model_validation():
    assert OptimalityModel(eps=1.5).eps == 1.5
    with pytest.raises(ValueError):
        OptimalityModel(eps=0.0)
    with pytest.raises(ValueError):
        OptimalityModel(eps=float("inf"))


# -- end-to-end refine -----------------------------------------------------------

def _nets(window=8, seed=0):
    rng = np.random.default_rng(seed)
    return (policy_new(window, rng, hidden=16, encoder_out=16),
            value_new(window, rng, hidden=16, encoder_out=16))


def _sampler(horizon=30):
    cfg = PriorConfig(horizon=horizon)
    return lambda burnin, rng: sample_prior(burnin, cfg, rng)


def _burnin(vehicle=HEAVY):
    return _scripted_burnin(lambda i: 0.0, lambda i: 4.0, 10, vehicle, 10.0)


def test_refine_window_mismatch_rejected():
    policy, _ = _nets(window=8)
    _, valuenet = _nets(window=10)
    with pytest.raises(ValueError, match="window"):
        refine(_sampler(), policy, valuenet, HEAVY, _burnin(), 4,
               np.random.default_rng(0), eps=50.0)


def test_refine_count_validated():
    policy, valuenet = _nets()
    with pytest.raises(ValueError):
        refine(_sampler(), policy, valuenet, HEAVY, _burnin(), 0,
               np.random.default_rng(0), eps=50.0)


def test_refine_produces_consistent_result():
    # untrained nets give arbitrary but finite scores; the plumbing
    # invariants must hold regardless
    policy, valuenet = _nets()
    result = refine(_sampler(), policy, valuenet, HEAVY, _burnin(), 12,
                    np.random.default_rng(42), eps=50.0)
    assert len(result.candidates) == 12
    assert [c.index for c in result.candidates] == list(range(12))
    assert result.selected is result.candidates[result.selected.index]
    assert np.all(np.isfinite(result.scores))
    assert result.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert result.log_evidence >= result.scores.mean() - 1e-12
    ranked = np.argsort(result.scores)
    assert result.weights[ranked[-1]] == result.weights.max()
    s0_score = score_s0(valuenet, result.s0, result.selected.trajectory)
    assert s0_score == pytest.approx(result.selected.score)


def test_refine_reproducible_under_seed():
    policy, valuenet = _nets()
    a = refine(_sampler(), policy, valuenet, HEAVY, _burnin(), 8,
               np.random.default_rng(7), eps=50.0)
    b = refine(_sampler(), policy, valuenet, HEAVY, _burnin(), 8,
               np.random.default_rng(7), eps=50.0)
    assert a.selected.index == b.selected.index
    assert a.scores.tolist() == b.scores.tolist()
    assert a.log_evidence == b.log_evidence
