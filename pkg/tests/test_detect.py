import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lzanomaly.detect import (
    ClassifierConfig,
    Decision,
    auc_trapezoid,
    classify,
    false_positive_rate,
    majority_classify,
    majority_score,
    roc_curve,
    subsequence_scores,
    threshold_for_fpr,
)
from lzanomaly.errors import InsufficientDataError, TooShortError
from lzanomaly.model import new_model, train

scores = st.lists(st.integers(-40, 0).map(float), min_size=1, max_size=25)


def rank_auc(normal, anomalous):
    """Probability that a random normal outscores a random anomalous one, ties half."""
    total = 0.0
    for n in normal:
        for a in anomalous:
            total += 1.0 if n > a else 0.5 if n == a else 0.0
    return total / (len(normal) * len(anomalous))


# -- classify ----------------------------------------------------------------


def test_threshold_boundary_is_normal(worked_model, enc):
    s = worked_model.log_probability(enc("bdca"))
    assert classify(worked_model, enc("bdca"), ClassifierConfig(threshold=s)).label is Decision.NORMAL
    assert classify(worked_model, enc("bdca"), ClassifierConfig(threshold=math.nextafter(s, 0))).is_anomalous


def test_worked_example_decision(worked_model, enc):
    # P = 1/784 is about 1.28e-3
    assert classify(worked_model, enc("bdca"), ClassifierConfig(math.log2(2e-3))).is_anomalous
    assert not classify(worked_model, enc("bdca"), ClassifierConfig(math.log2(1e-3))).is_anomalous


def test_config_validation():
    with pytest.raises(ValueError):
        ClassifierConfig(0.0, subsequence_length=0)


# -- subsequences and majority ----------------------------------------------


def test_subsequence_blocks_match_direct_scores(worked_model, rng):
    seq = rng.integers(0, 4, size=47)
    got = subsequence_scores(worked_model, seq, 10)
    want = [worked_model.log_probability(seq[i : i + 10]) for i in range(0, 40, 10)]
    np.testing.assert_allclose(got, want, rtol=1e-12)
    assert subsequence_scores(worked_model, seq, 10, limit=2).size == 2


def test_too_short_for_one_block(worked_model):
    with pytest.raises(TooShortError):
        subsequence_scores(worked_model, [0] * 9, 10)


@pytest.mark.parametrize(
    "votes, expected",
    [
        ([-1, -1, -9], Decision.NORMAL),  # 2 of 3
        ([-1, -9, -9], Decision.ANOMALOUS),
        ([-1, -1, -9, -9], Decision.ANOMALOUS),  # even split
        ([-1, -1, -1, -9], Decision.NORMAL),
        ([-1], Decision.NORMAL),
        ([-9], Decision.ANOMALOUS),
    ],
)
def test_majority_rule(votes, expected):
    assert (majority_score(votes) >= -5) == (expected is Decision.NORMAL)


@settings(max_examples=200, deadline=None)
@given(scores, st.integers(-41, 1).map(float))
def test_majority_score_matches_vote_count(s, threshold):
    votes = sum(x >= threshold for x in s)
    assert (majority_score(s) >= threshold) == (2 * votes > len(s))


def test_majority_classify_counts_votes(worked_model, rng):
    seq = rng.integers(0, 4, size=90)
    blocks = subsequence_scores(worked_model, seq, 10)
    T = float(np.median(blocks))
    v = majority_classify(worked_model, seq, ClassifierConfig(T, subsequence_length=10))
    assert v.votes_normal == int((blocks >= T).sum())
    assert v.is_anomalous == (2 * v.votes_normal <= blocks.size)
    assert v.score == majority_score(blocks)


def test_majority_classify_minimum(worked_model):
    with pytest.raises(TooShortError):
        majority_classify(worked_model, [0] * 25, ClassifierConfig(0.0, subsequence_length=10, min_subsequences=3))


def test_majority_helps_on_perturbed_source():
    from lzanomaly.sources import markov1, perturb_matrix, random_transition_matrix

    P = random_transition_matrix(4, seed=3, concentration=0.5)
    good, bad = markov1(P), markov1(perturb_matrix(P, 0.5, seed=4))
    m = train(new_model(4), good.sequences(300, 100, seed=1))
    n_seqs, a_seqs = good.sequences(100, 90, seed=2), bad.sequences(100, 90, seed=3)

    def auc(limit):
        n = [majority_score(subsequence_scores(m, s, 10, limit)) for s in n_seqs]
        a = [majority_score(subsequence_scores(m, s, 10, limit)) for s in a_seqs]
        return roc_curve(n, a).auc

    assert auc(9) >= auc(1) - 0.01


# -- ROC ---------------------------------------------------------------------


def test_roc_single_pair():
    r = roc_curve([-5.0], [-10.0])
    pts = {(p.fpr, p.tpr) for p in r.points}
    assert {(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)} <= pts
    assert r.auc == 1.0


def test_roc_identical_multisets():
    x = [-3.0, -1.0, -1.0, -7.0]
    assert roc_curve(x, x).auc == pytest.approx(0.5)


def test_roc_perfect_inversion():
    assert roc_curve([-10.0, -11.0], [-1.0, -2.0]).auc == 0.0


def test_roc_interleaved_step():
    # horizontal then vertical at fpr 0.5: area is the rank statistic 0.5
    assert roc_curve([-5.0, -10.0], [-7.0]).auc == pytest.approx(0.5)


def test_roc_points_and_confusion_counts():
    r = roc_curve([-1.0, -2.0, -3.0], [-2.0, -6.0])
    ths = [p.threshold for p in r.points]
    assert ths == sorted(ths)
    assert ths[0] < -6.0 and ths[-1] > -1.0
    assert ths[1:-1] == [-6.0, -3.0, -2.0, -1.0]
    for p in r.points:
        assert p.tp + p.fn == 2 and p.fp + p.tn == 3
        assert p.tp == sum(a < p.threshold for a in [-2.0, -6.0])
        assert p.fp == sum(n < p.threshold for n in [-1.0, -2.0, -3.0])
    assert (r.points[0].fpr, r.points[0].tpr) == (0.0, 0.0)
    assert (r.points[-1].fpr, r.points[-1].tpr) == (1.0, 1.0)


def test_roc_handles_infinite_scores():
    r = roc_curve([-1.0, -2.0], [-math.inf, -5.0])
    assert r.auc == 1.0


def test_roc_needs_both_classes():
    with pytest.raises(InsufficientDataError):
        roc_curve([], [-1.0])
    with pytest.raises(InsufficientDataError):
        roc_curve([-1.0], [])


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_auc_equals_rank_statistic(normal, anomalous):
    r = roc_curve(normal, anomalous)
    assert r.auc == pytest.approx(rank_auc(normal, anomalous), abs=1e-12)
    assert np.all(np.diff(r.fpr) >= 0) and np.all(np.diff(r.tpr) >= 0)
    assert 0.0 <= r.auc <= 1.0


@settings(max_examples=100, deadline=None)
@given(scores, scores, st.integers(1, 5), st.integers(-20, 20))
def test_auc_invariant_under_monotone_transform(normal, anomalous, a, b):
    f = lambda xs: [a * x + b for x in xs]  # noqa: E731
    assert roc_curve(f(normal), f(anomalous)).auc == pytest.approx(roc_curve(normal, anomalous).auc)


def test_auc_trapezoid_direct():
    assert auc_trapezoid([0, 0.5, 1], [0, 0.5, 1]) == 0.5
    assert auc_trapezoid([1, 0, 0], [1, 1, 0]) == 1.0


def test_roc_csv():
    buf = io.StringIO()
    roc_curve([-1.0], [-2.0]).write_csv(buf, ["feature=td"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# feature=td"
    assert lines[1] == "threshold_log2,fpr,tpr,tp,fp,tn,fn"
    assert lines[-1] == "# auc=1.0"
    assert len(lines) == 2 + 4 + 1


# -- calibration -------------------------------------------------------------


def test_threshold_order_statistic():
    s = [-float(i) for i in range(1, 101)]  # -100 .. -1
    T = threshold_for_fpr(s, 0.05)
    assert T == -95.0
    assert false_positive_rate(s, T) == 0.05
    assert false_positive_rate(s, math.nextafter(T, 0)) > 0.05


def test_threshold_edges():
    assert threshold_for_fpr([-3.0, -1.0], 0.0) == -3.0
    assert threshold_for_fpr([-3.0, -1.0], 1.0) == math.inf
    with pytest.raises(InsufficientDataError):
        threshold_for_fpr([], 0.1)
    with pytest.raises(ValueError):
        threshold_for_fpr([1.0], 1.5)


@settings(max_examples=200, deadline=None)
@given(scores, st.floats(0, 1))
def test_calibration_is_sound_and_tight(s, target):
    T = threshold_for_fpr(s, target)
    assert false_positive_rate(s, T) <= target + 1e-12
    # any larger threshold would exceed the target, unless none exists
    if math.isfinite(T):
        above = [x for x in s if x > T]
        if above:
            assert false_positive_rate(s, min(above)) > target
