"""Attributed graphs, dataset loading and the fixed graph operators.

Everything here is computed once per dataset and never trained: the
self-loop normalized adjacency, its degree vector, and the Student-t
weighted kNN graph over node features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)


class DatasetError(Exception):
    """A dataset directory is missing a required file or cannot be read."""


class ValidationError(ValueError):
    """Dataset content violates the attributed-graph invariants."""


@dataclass
class LoadReport:
    self_loops_dropped: int = 0
    duplicates_dropped: int = 0


@dataclass(eq=False)
class AttributedGraph:
    """Undirected graph with a dense feature matrix and optional labels.

    ``edges`` is an ``(m, 2)`` integer array of unordered pairs stored with
    ``i < j``, sorted and unique.
    """

    n: int
    edges: np.ndarray
    X: np.ndarray
    labels: np.ndarray | None = None
    name: str = "graph"
    report: LoadReport = field(default_factory=LoadReport)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"node count must be positive, got {self.n}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValidationError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValidationError("self-loops are not allowed in edges")
        edges = np.sort(edges, axis=1)
        uniq = np.unique(edges, axis=0)
        if len(uniq) != len(edges):
            raise ValidationError("duplicate edges")
        self.edges = uniq
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != self.n:
            raise ValidationError(
                f"feature matrix must have {self.n} rows, got shape {self.X.shape}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise ValidationError(
                    f"expected {self.n} labels, got {self.labels.shape[0]}"
                )
            if self.labels.min() < 0:
                raise ValidationError("labels must be nonnegative")

    @property
    def num_features(self) -> int:
        return self.X.shape[1]

    @property
    def num_classes(self) -> int | None:
        if self.labels is None:
            return None
        return int(np.unique(self.labels).size)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency without self-loops."""
        A = np.zeros((self.n, self.n))
        if len(self.edges):
            A[self.edges[:, 0], self.edges[:, 1]] = 1.0
            A[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return A


@dataclass(frozen=True)
class KernelParams:
    k: int
    v: float = 1.0
    sigma: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if not self.v > 0:
            raise ValueError(f"degrees of freedom must be positive, got {self.v}")
        if not self.sigma > 0:
            raise ValueError(f"kernel scale must be positive, got {self.sigma}")


@dataclass(eq=False)
class GraphOperators:
    W: np.ndarray
    deg: np.ndarray
    Wknn: np.ndarray
    Wneg: np.ndarray
    Lpos: np.ndarray
    Lneg: np.ndarray


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="ascii")
    except FileNotFoundError:
        raise DatasetError(f"missing dataset file: {path.name} (in {path.parent})")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}")
    # splitlines handles both LF and CRLF
    return text.splitlines()


def load_dataset(dir_path, *, require_labels: bool = False) -> AttributedGraph:
    """Read ``edges.tsv``, ``features.csv`` and optional ``labels.txt``.

    Self-loops and repeated pairs in the edge file are dropped and counted
    in ``graph.report``; a warning is logged when anything was dropped.
    """
    root = Path(dir_path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")

    rows = []
    for lineno, line in enumerate(_read_lines(root / "features.csv"), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise ValidationError(f"features.csv line {lineno}: not a list of reals")
    if not rows:
        raise ValidationError("features.csv is empty")
    width = len(rows[0])
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise ValidationError(
                f"features.csv line {lineno}: expected {width} columns, got {len(row)}"
            )
    X = np.array(rows, dtype=np.float64)
    n = X.shape[0]

    report = LoadReport()
    seen = set()
    pairs = []
    for lineno, line in enumerate(_read_lines(root / "edges.tsv"), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise ValidationError(f"edges.tsv line {lineno}: expected two integers")
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise ValidationError(f"edges.tsv line {lineno}: expected two integers")
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(
                f"edges.tsv line {lineno}: node index out of range for n={n}"
            )
        if i == j:
            report.self_loops_dropped += 1
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            report.duplicates_dropped += 1
            continue
        seen.add(key)
        pairs.append(key)

    labels = None
    label_path = root / "labels.txt"
    if label_path.exists():
        vals = []
        for lineno, line in enumerate(_read_lines(label_path), 1):
            if not line.strip():
                continue
            try:
                vals.append(int(line))
            except ValueError:
                raise ValidationError(f"labels.txt line {lineno}: not an integer")
        if len(vals) != n:
            raise ValidationError(
                f"labels.txt has {len(vals)} entries but features.csv has {n} rows"
            )
        labels = np.array(vals, dtype=np.int64)
    elif require_labels:
        raise DatasetError(f"missing dataset file: labels.txt (in {root})")

    if report.self_loops_dropped or report.duplicates_dropped:
        log.warning(
            "%s: dropped %d self-loops and %d duplicate edges",
            root.name,
            report.self_loops_dropped,
            report.duplicates_dropped,
        )
    return AttributedGraph(
        n=n,
        edges=np.array(pairs, dtype=np.int64).reshape(-1, 2),
        X=X,
        labels=labels,
        name=root.name,
        report=report,
    )


def normalize_adjacency(graph: AttributedGraph) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(W, deg)`` with ``W = D^-1/2 (A + I) D^-1/2`` and ``deg = 1 + degree``."""
    A = graph.adjacency()
    A[np.diag_indices(graph.n)] = 1.0
    deg = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    W = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    return W, deg


def t_kernel(dist, params: KernelParams):
    """Student-t similarity ``(1 + (d/sigma)^2 / v) ** (-(v+1)/2)``.

    Accepts a scalar or an array of distances.
    """
    d = np.asarray(dist, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    out = (1.0 + (d / params.sigma) ** 2 / params.v) ** (-(params.v + 1.0) / 2.0)
    if out.ndim == 0:
        return float(out)
    return out


def build_knn_graph(X: np.ndarray, params: KernelParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if params.k >= n:
        raise ValueError(f"k={params.k} must be smaller than the node count {n}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature matrix contains non-finite values")

    # exact pairwise differences so identical rows sit at distance 0
    d2 = cdist(X, X, metric="sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    # stable sort: ties go to the smaller index
    order = np.argsort(d2, axis=1, kind="stable")[:, : params.k]
    rows = np.repeat(np.arange(n), params.k)
    cols = order.ravel()
    weights = t_kernel(np.sqrt(d2[rows, cols]), params)

    Wknn = np.zeros((n, n))
    Wknn[rows, cols] = weights
    Wknn = np.maximum(Wknn, Wknn.T)
    np.fill_diagonal(Wknn, 0.0)
    return Wknn


def edge_density(graph: AttributedGraph) -> float:
    if graph.n < 2:
        return 0.0
    return 2.0 * len(graph.edges) / (graph.n * (graph.n - 1))
