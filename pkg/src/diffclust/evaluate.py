"""K-means on the learned embedding and the four clustering metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

MAX_ITER = 300


@dataclass
class ClusterResult:
    assignments: np.ndarray
    inertia: float
    restarts_used: int
    # inertia after every Lloyd iteration of the winning restart
    inertia_trace: list[float] = field(default_factory=list, repr=False)


@dataclass
class MetricsReport:
    acc: float
    nmi: float
    ari: float
    f1: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _sq_dists(Z: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = Z[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(Z: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = Z.shape[0]
    centers = [Z[rng.integers(n)]]
    closest = np.sum((Z - centers[0]) ** 2, axis=1)
    for _ in range(1, c):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(Z[idx])
        closest = np.minimum(closest, np.sum((Z - Z[idx]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(Z: np.ndarray, centers: np.ndarray, max_iter: int):
    c = centers.shape[0]
    labels = None
    trace = []
    for _ in range(max_iter):
        d2 = _sq_dists(Z, centers)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=c)
        own = d2[np.arange(len(new)), new]
        for j in np.flatnonzero(counts == 0):
            # move the point farthest from its own centre into the empty cluster
            movable = counts[new] > 1
            far = int(np.argmax(np.where(movable, own, -1.0)))
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
            own[far] = -1.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([Z[labels == j].mean(axis=0) for j in range(c)])
        inertia = float(np.sum((Z - centers[labels]) ** 2))
        trace.append(inertia)
    return labels, trace


def kmeans(Z, c: int, restarts: int = 10, seed: int = 0, max_iter: int = MAX_ITER) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding; keeps the lowest-inertia restart."""
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if not 1 <= c <= n:
        raise ValueError(f"cluster count must satisfy 1 <= c <= n={n}, got {c}")
    if restarts < 1:
        raise ValueError(f"restarts must be positive, got {restarts}")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        labels, trace = _lloyd(Z, _kmeans_pp(Z, c, rng), max_iter)
        if best is None or trace[-1] < best.inertia:
            best = ClusterResult(labels, trace[-1], restarts, trace)
    return best


def _canonical(labels) -> np.ndarray:
    """Relabel ids by order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inverse.ravel()]


def contingency(pred, truth) -> np.ndarray:
    """Counts table with rows = predicted clusters, columns = true classes."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"label sequences differ in length: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("label sequences are empty")
    p = _canonical(pred)
    t = _canonical(truth)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def _matching(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # maximise matched count; among optimal matchings prefer higher macro F1
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    f1 = 2.0 * table / (rows[:, None] + cols[None, :])
    tie = 0.5 / (min(table.shape) + 1)
    return linear_sum_assignment(table + tie * f1, maximize=True)


def hungarian_accuracy(pred, truth) -> float:
    table = contingency(pred, truth)
    r, c = _matching(table)
    return int(table[r, c].sum()) / int(table.sum())


def _entropy(counts: np.ndarray, n: int) -> float:
    return -math.fsum(k / n * math.log(k / n) for k in counts.ravel() if k > 0)


def _nmi(table: np.ndarray) -> float:
    n = int(table.sum())
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    hp, ht = _entropy(rows, n), _entropy(cols, n)
    if hp == 0.0 or ht == 0.0:
        return 0.0
    mi = math.fsum(
        table[i, j] / n * math.log(n * table[i, j] / (rows[i] * cols[j]))
        for i, j in zip(*np.nonzero(table))
    )
    return min(max(mi / ((hp + ht) / 2.0), 0.0), 1.0)


def _comb2(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int(np.sum(x * (x - 1) // 2))


def _ari(table: np.ndarray) -> float:
    n = int(table.sum())
    pairs = n * (n - 1) // 2
    sum_ij = _comb2(table)
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    if pairs == 0:
        return 1.0
    expected = sum_a * sum_b / pairs
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)


def _macro_f1(table: np.ndarray) -> float:
    r, c = _matching(table)
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    scores = []
    for i, j in zip(r, c):
        tp = table[i, j]
        scores.append(2.0 * tp / (rows[i] + cols[j]) if tp else 0.0)
    # true classes with no matched cluster score 0
    return math.fsum(scores) / table.shape[1]


def metrics(pred, truth) -> MetricsReport:
    """ACC, NMI (arithmetic normalization), ARI and macro F1 from one contingency table."""
    table = contingency(pred, truth)
    r, c = _matching(table)
    acc = int(table[r, c].sum()) / int(table.sum())
    return MetricsReport(acc=acc, nmi=_nmi(table), ari=_ari(table), f1=_macro_f1(table))
