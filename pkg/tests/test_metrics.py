import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infodemic.errors import EmptyInput
from infodemic.metrics import classification_report, dcg, ndcg, regression_metrics


def brute_ndcg(scores, rel):
    # rank by score, ties broken by input position
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    got = sum(rel[i] / math.log2(r + 2) for r, i in enumerate(ranked))
    best = max(sum(rel[i] / math.log2(r + 2) for r, i in enumerate(p))
               for p in itertools.permutations(range(len(rel))))
    return 1.0 if best == 0 else got / best


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n),
    st.lists(st.floats(0, 10, allow_nan=False), min_size=n, max_size=n))))
def test_ndcg_matches_brute_force(case):
    scores, rel = case
    assert abs(ndcg(scores, rel) - brute_ndcg(scores, rel)) <= 1e-12


def test_ndcg_perfect_and_reversed():
    rel = [3.0, 2.0, 1.0]
    assert ndcg([3, 2, 1], rel) == 1.0
    worst = (1 + 2 / math.log2(3) + 3 / 2) / (3 + 2 / math.log2(3) + 1 / 2)
    assert abs(ndcg([1, 2, 3], rel) - worst) < 1e-12
    assert dcg([1.0]) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-40, 40), st.floats(0, 5, allow_nan=False)), min_size=1, max_size=8))
def test_ndcg_invariant_to_increasing_transform(pairs):
    # quarter-step grid keeps the transforms strictly increasing in floating point
    scores = np.array([p[0] / 4 for p in pairs])
    rel = [p[1] for p in pairs]
    assert ndcg(scores, rel) == ndcg(np.exp(scores), rel) == ndcg(3 * scores + 7, rel)


def test_confusion_matrix_by_hand():
    # truth: 4 rumor, 2 non-rumor; predictions give rumor tp=3 fn=1 fp=1, non-rumor tp=1 fn=1 fp=1
    true = ["rumor"] * 4 + ["non_rumor"] * 2
    pred = ["rumor", "rumor", "rumor", "non_rumor", "rumor", "non_rumor"]
    r = classification_report(pred, true)
    p_r, r_r = 3 / 4, 3 / 4
    p_n, r_n = 1 / 2, 1 / 2
    assert r["accuracy"] == pytest.approx(4 / 6, abs=1e-12)
    assert r["precision"] == pytest.approx((p_r + p_n) / 2, abs=1e-12)
    assert r["recall"] == pytest.approx((r_r + r_n) / 2, abs=1e-12)
    assert r["macF1"] == pytest.approx((0.75 + 0.5) / 2, abs=1e-12)


def test_degenerate_class_counts_as_zero():
    r = classification_report([1, 1, 1], [1, 1, 1])
    assert r["accuracy"] == 1.0
    assert r["precision"] == 0.5 and r["recall"] == 0.5 and r["macF1"] == 0.5


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.lists(st.integers(0, 1), min_size=2, max_size=40))
def test_balanced_accuracy_equals_mean_recall(k, pred_bits):
    true = [0] * k + [1] * k
    pred = (pred_bits * (2 * k))[: 2 * k]
    r = classification_report(pred, true)
    assert abs(r["accuracy"] - r["recall"]) <= 1e-12


def test_msle_hand_value():
    out = regression_metrics([3.0], [1.0])
    assert out["mse"] == 4.0
    assert abs(out["msle"] - math.log(2) ** 2) < 1e-12
    assert abs(out["msle"] - 0.4805) < 1e-4


def test_msle_floor_only_touches_msle():
    out = regression_metrics([-0.5], [0.0], floor_at_zero=True)
    assert out["mse"] == 0.25 and out["msle"] == 0.0
    with pytest.raises(ValueError):
        regression_metrics([-2.0], [0.0])


def test_empty_inputs_raise():
    with pytest.raises(EmptyInput):
        classification_report([], [])
    with pytest.raises(EmptyInput):
        regression_metrics([], [])
    with pytest.raises(EmptyInput):
        ndcg([], [])
    with pytest.raises(ValueError):
        ndcg([1.0, 2.0], [1.0])
