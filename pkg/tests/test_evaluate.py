import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffclust.evaluate import _lloyd, contingency, hungarian_accuracy, kmeans, metrics


# --- brute-force oracles (no contingency table, no assignment solver) --------


def _matchings(pred, truth):
    """Every injective pairing of predicted clusters with true classes, maximal in size."""
    P, T = sorted(set(pred)), sorted(set(truth))
    if len(P) <= len(T):
        for cols in itertools.permutations(T, len(P)):
            yield dict(zip(P, cols))
    else:
        for rows in itertools.permutations(P, len(T)):
            yield dict(zip(rows, T))


def oracle_acc(pred, truth):
    n = len(pred)
    return max(sum(m.get(p) == t for p, t in zip(pred, truth)) for m in _matchings(pred, truth)) / n


def _macro_f1_under(m, pred, truth):
    T = sorted(set(truth))
    inv = {t: p for p, t in m.items()}
    scores = []
    for t in T:
        if t not in inv:
            scores.append(0.0)
            continue
        p = inv[t]
        tp = sum(a == p and b == t for a, b in zip(pred, truth))
        n_pred = sum(a == p for a in pred)
        n_true = sum(b == t for b in truth)
        prec = tp / n_pred
        rec = tp / n_true
        scores.append(0.0 if tp == 0 else 2 * prec * rec / (prec + rec))
    return math.fsum(scores) / len(T)


def oracle_f1(pred, truth):
    # best macro F1 among the count-optimal matchings
    best_count = -1
    best_f1 = -1.0
    for m in _matchings(pred, truth):
        count = sum(m.get(p) == t for p, t in zip(pred, truth))
        f1 = _macro_f1_under(m, pred, truth)
        if count > best_count or (count == best_count and f1 > best_f1):
            best_count, best_f1 = count, f1
    return best_f1


def oracle_nmi(pred, truth):
    n = len(pred)

    def H(xs):
        return -math.fsum(xs.count(v) / n * math.log(xs.count(v) / n) for v in set(xs))
    hp, ht = H(list(pred)), H(list(truth))
    if hp == 0 or ht == 0:
        return 0.0
    terms = []
    for a in set(pred):
        for b in set(truth):
            joint = sum(x == a and y == b for x, y in zip(pred, truth)) / n
            if joint > 0:
                terms.append(joint * math.log(joint / ((list(pred).count(a) / n) * (list(truth).count(b) / n))))
    mi = math.fsum(terms)
    return mi / ((hp + ht) / 2)


def oracle_ari(pred, truth):
    a = b = c = d = 0
    for i, j in itertools.combinations(range(len(pred)), 2):
        sp, st_ = pred[i] == pred[j], truth[i] == truth[j]
        if sp and st_:
            a += 1
        elif sp:
            b += 1
        elif st_:
            c += 1
        else:
            d += 1
    denom = (a + b) * (b + d) + (a + c) * (c + d)
    if denom == 0:
        return 1.0
    return 2.0 * (a * d - b * c) / denom


# --- examples ----------------------------------------------------------------


def test_acc_examples():
    assert hungarian_accuracy([0, 1, 2, 2], [0, 1, 2, 2]) == 1.0
    assert hungarian_accuracy([2, 0, 1, 1], [0, 1, 2, 2]) == 1.0
    assert hungarian_accuracy([0, 0, 1, 1], [0, 1, 1, 1]) == 0.75


def test_perfect_metrics():
    m = metrics([0, 1, 1, 2, 2, 2], [5, 3, 3, 4, 4, 4])
    assert (m.acc, m.nmi, m.ari, m.f1) == (1.0, 1.0, 1.0, 1.0)


def test_constant_labels_nmi_zero():
    assert metrics([0, 0, 0], [1, 1, 1]).nmi == 0.0


def test_small_example_against_oracles():
    pred, truth = [0, 0, 1, 1], [0, 0, 1, 2]
    m = metrics(pred, truth)
    assert m.acc == pytest.approx(oracle_acc(pred, truth), abs=1e-12)
    assert m.nmi == pytest.approx(oracle_nmi(pred, truth), abs=1e-12)
    assert m.ari == pytest.approx(oracle_ari(pred, truth), abs=1e-12)
    assert m.f1 == pytest.approx(oracle_f1(pred, truth), abs=1e-12)


def test_constant_prediction_accuracy_is_majority_share():
    rng = np.random.default_rng(0)
    for _ in range(50):
        truth = rng.integers(4, size=rng.integers(1, 30))
        assert hungarian_accuracy(np.zeros_like(truth), truth) == np.bincount(truth).max() / len(truth)


def test_length_mismatch():
    with pytest.raises(ValueError):
        metrics([0, 1], [0, 1, 1])
    with pytest.raises(ValueError):
        contingency([], [])


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_metrics_match_oracles(data):
    n = data.draw(st.integers(1, 20))
    cp, ct = data.draw(st.integers(1, 5)), data.draw(st.integers(1, 5))
    pred = data.draw(st.lists(st.integers(0, cp - 1), min_size=n, max_size=n))
    truth = data.draw(st.lists(st.integers(0, ct - 1), min_size=n, max_size=n))
    m = metrics(pred, truth)
    assert abs(m.acc - oracle_acc(pred, truth)) <= 1e-12
    assert abs(m.nmi - oracle_nmi(pred, truth)) <= 1e-12
    assert abs(m.ari - oracle_ari(pred, truth)) <= 1e-12
    assert abs(m.f1 - oracle_f1(pred, truth)) <= 1e-12
    assert 0 <= m.acc <= 1 and 0 <= m.nmi <= 1 and 0 <= m.f1 <= 1 and -1 <= m.ari <= 1


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_metrics_invariant_under_bijections(data):
    n = data.draw(st.integers(1, 30))
    pred = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    truth = data.draw(st.lists(st.integers(0, 5), min_size=n, max_size=n))
    sp = data.draw(st.permutations(range(6)))
    stt = data.draw(st.permutations(range(6)))
    a = metrics(pred, truth)
    b = metrics([sp[x] + 10 for x in pred], [stt[x] for x in truth])
    assert a == b


def test_ari_of_independent_labelings_is_near_zero():
    rng = np.random.default_rng(2024)
    vals = [metrics(rng.integers(5, size=1000), rng.integers(5, size=1000)).ari for _ in range(100)]
    assert abs(np.mean(vals)) <= 0.02


def test_report_serialises():
    d = metrics([0, 1], [0, 1]).to_dict()
    assert set(d) == {"acc", "nmi", "ari", "f1"}


# --- k-means -----------------------------------------------------------------


def test_kmeans_each_point_own_cluster(rng):
    Z = rng.normal(size=(6, 2))
    res = kmeans(Z, 6, restarts=3)
    assert sorted(res.assignments) == list(range(6))
    assert res.inertia == pytest.approx(0.0, abs=1e-24)


def test_kmeans_single_cluster(rng):
    Z = rng.normal(size=(10, 3))
    res = kmeans(Z, 1)
    assert np.all(res.assignments == 0)
    assert res.inertia == pytest.approx(np.sum((Z - Z.mean(0)) ** 2), rel=1e-12)


def _sse(Z, mask):
    return sum(np.sum((Z[m] - Z[m].mean(0)) ** 2) for m in (mask, ~mask))


def test_kmeans_separated_blobs(rng):
    Z = np.vstack([rng.normal(0, 1, (6, 2)), rng.normal(100, 1, (5, 2))])
    truth = np.array([0] * 6 + [1] * 5)
    res = kmeans(Z, 2, seed=3)
    assert hungarian_accuracy(res.assignments, truth) == 1.0
    # brute force over every 2-partition (point 0 fixed on one side)
    masks = (np.array([False] + [(i >> b) & 1 == 1 for b in range(10)]) for i in range(1, 2**10))
    best = min(_sse(Z, m) for m in masks)
    assert res.inertia == pytest.approx(best, rel=1e-12)


def test_kmeans_deterministic_and_valid(rng):
    Z = rng.normal(size=(40, 3))
    a, b = kmeans(Z, 4, seed=7), kmeans(Z, 4, seed=7)
    assert np.array_equal(a.assignments, b.assignments) and a.inertia == b.inertia
    assert a.restarts_used == 10
    assert set(a.assignments) <= set(range(4)) and len(a.assignments) == 40
    assert a.inertia >= 0


def test_kmeans_inertia_non_increasing(rng):
    for seed in range(20):
        r = np.random.default_rng(seed)
        Z = r.normal(size=(60, 4))
        for child in np.random.SeedSequence(seed).spawn(3):
            g = np.random.default_rng(child)
            centers = Z[g.choice(60, 5, replace=False)]
            _, trace = _lloyd(Z, centers, 300)
            assert all(b <= a * (1 + 1e-12) for a, b in zip(trace, trace[1:]))


def test_kmeans_repairs_empty_clusters():
    # duplicate points force empty clusters when c exceeds the distinct count
    Z = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 5)
    res = kmeans(Z, 4, restarts=2)
    assert len(set(res.assignments)) == 4


def test_kmeans_errors(rng):
    with pytest.raises(ValueError):
        kmeans(rng.normal(size=(3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans(rng.normal(size=(3, 2)), 2, restarts=0)
