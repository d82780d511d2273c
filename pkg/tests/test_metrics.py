import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajanomaly.metrics import (LabeledScores, aupr, auroc, filter_ignore, fpr_at_95_tpr, headline,
                                 per_class_auroc, roc_points)


def mann_whitney(scores, labels):
    # pairwise comparisons, ties count one half
    pos, neg = scores[labels], scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def sweep_points(scores, labels):
    """(tp, fp) for every threshold 'score >= c' over the distinct scores, brute force."""
    out = []
    for c in np.unique(scores)[::-1]:
        pred = scores >= c
        out.append(((pred & labels).sum(), (pred & ~labels).sum()))
    return out


def brute_aupr(scores, labels):
    pts = sweep_points(scores, labels)
    P = labels.sum()
    rec = [tp / P for tp, fp in pts]
    prec = [tp / (tp + fp) for tp, fp in pts]
    area, prev = 0.0, 0.0
    for k in range(len(pts)):
        env = max(prec[k:])
        area += (rec[k] - prev) * env
        prev = rec[k]
    return area


def brute_fpr95(scores, labels):
    P, N = labels.sum(), (~labels).sum()
    return min(fp / N for tp, fp in [(0, 0)] + sweep_points(scores, labels) if tp / P >= 0.95)


def random_instance(rng, n):
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    labels[0], labels[1] = True, False
    scores = rng.integers(0, max(2, n // 3), n).astype(float) + labels * rng.uniform(0, 2)
    return np.round(scores, 1), labels


def test_filter_ignore():
    d = filter_ignore([0.1, 0.5, 0.9], ["normal", "transition", "abnormal"])
    assert len(d) == 2 and d.labels.tolist() == [False, True]
    same = filter_ignore([1.0, 2.0], ["normal", "abnormal"])
    assert same.scores.tolist() == [1.0, 2.0]
    with pytest.raises(ValueError, match="no evaluable frames"):
        filter_ignore([1.0, 2.0], ["transition", "transition"])


@given(st.lists(st.sampled_from(["normal", "transition", "abnormal"]), min_size=1, max_size=30))
def test_filter_counts_conserved(states):
    if all(s == "transition" for s in states):
        return
    d = filter_ignore(np.arange(len(states), dtype=float), states)
    assert len(d) + states.count("transition") == len(states)


def test_degenerate_scorers():
    labels = np.array([0, 0, 1, 1, 0, 1], dtype=bool)
    perfect = labels * 10.0 + np.arange(6) * 0.01
    assert auroc(perfect, labels) == 1.0
    assert auroc(-perfect, labels) == 0.0
    assert aupr(perfect, labels) == 1.0 and aupr(perfect, labels, positive=False) == 1.0
    assert fpr_at_95_tpr(perfect, labels) == 0.0
    assert fpr_at_95_tpr(-perfect, labels) == 1.0
    const = np.zeros(6)
    assert auroc(const, labels) == 0.5
    assert aupr(const, labels) == pytest.approx(labels.mean(), abs=1e-15)


def test_single_class_errors():
    with pytest.raises(ValueError):
        auroc([1.0, 2.0], [True, True])
    with pytest.raises(ValueError):
        fpr_at_95_tpr([1.0, 2.0], [False, False])
    with pytest.raises(ValueError):
        aupr([1.0, 2.0], [False, False])


def test_random_classifier_near_half(rng):
    n = 4000
    labels = rng.random(n) < 0.3
    value = auroc(rng.random(n), labels)
    n1, n0 = labels.sum(), (~labels).sum()
    sd = np.sqrt((n1 + n0 + 1) / (12 * n1 * n0))
    assert abs(value - 0.5) < 3 * sd


def test_oracles_fuzz(rng):
    for _ in range(200):
        s, y = random_instance(rng, int(rng.integers(2, 120)))
        assert auroc(s, y) == pytest.approx(mann_whitney(s, y), abs=1e-12)
        assert aupr(s, y) == pytest.approx(brute_aupr(s, y), abs=1e-12)
        assert aupr(s, y, positive=False) == pytest.approx(brute_aupr(-s, ~y), abs=1e-12)
        assert fpr_at_95_tpr(s, y) == brute_fpr95(s, y)


@given(st.integers(0, 2**31))
def test_invariances(seed):
    rng = np.random.default_rng(seed)
    s, y = random_instance(rng, 60)
    a = auroc(s, y)
    assert auroc(np.exp(s) * 3 + 1, y) == a
    assert 0 <= a <= 1 and 0 <= aupr(s, y) <= 1 and 0 <= fpr_at_95_tpr(s, y) <= 1
    distinct = s + rng.permutation(60) * 1e-6
    assert auroc(distinct, y) + auroc(-distinct, y) == pytest.approx(1.0, abs=1e-12)


def test_roc_endpoints(rng):
    s, y = random_instance(rng, 40)
    fpr, tpr = roc_points(s, y)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


def test_per_class(rng):
    n = 300
    classes = np.array([""] * n, dtype=object)
    labels = np.zeros(n, dtype=bool)
    labels[:60] = True
    classes[:30], classes[30:60] = "skidding", "wrong_way"
    scores = rng.normal(size=n)
    scores[:30] += 5.0  # skidding separable, wrong_way not
    a = per_class_auroc(scores, labels, classes, "skidding")
    b = per_class_auroc(scores, labels, classes, "wrong_way")
    assert a > b
    assert per_class_auroc(scores, labels, classes, "staggering") is None
    keep = ~labels | (classes == "skidding")
    assert keep.sum() == n - 30
    only = classes.copy()
    only[30:60] = "skidding"
    assert per_class_auroc(scores, labels, only, "skidding") == auroc(scores, labels)


def test_headline_keys(rng):
    s, y = random_instance(rng, 50)
    assert set(headline(LabeledScores(s, y))) == {"auroc", "aupr_abnormal", "aupr_normal", "fpr_at_95_tpr"}
