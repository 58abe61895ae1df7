"""Shared fixtures: random graphs, synthetic dataset directories, acceptance summary."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from diffclust.graph import AttributedGraph

REPO = Path(__file__).resolve().parents[1]


def dataset_dir(name: str) -> Path:
    root = Path(os.environ.get("DIFFCLUST_DATA", REPO / "data"))
    return root / name


def require_dataset(name: str):
    """Load a benchmark dataset or fail loudly; a missing dataset is not a pass."""
    from diffclust.graph import load_dataset

    path = dataset_dir(name)
    if not (path / "edges.tsv").exists():
        pytest.fail(
            f"benchmark dataset {name!r} not found at {path}; place edges.tsv, "
            "features.csv and labels.txt there or point DIFFCLUST_DATA at a directory "
            f"containing {name}/",
            pytrace=False,
        )
    return load_dataset(path, require_labels=True)


def random_graph(rng, n, p=0.3, d=4, classes=None, connected=False) -> AttributedGraph:
    A = np.triu(rng.random((n, n)) < p, 1)
    if connected:
        # a random spanning path guarantees connectivity
        order = rng.permutation(n)
        for a, b in zip(order[:-1], order[1:]):
            A[min(a, b), max(a, b)] = True
    edges = np.argwhere(A)
    X = rng.normal(size=(n, d))
    labels = rng.integers(classes, size=n) if classes else None
    return AttributedGraph(n=n, edges=edges, X=X, labels=labels)


def planted_partition(seed=0, n=150, c=3, p_in=0.12, p_out=0.01, noise=0.8, extra=5):
    """Stochastic block graph whose features carry a noisy one-hot of the block."""
    rng = np.random.default_rng(seed)
    y = rng.integers(c, size=n)
    P = np.where(y[:, None] == y[None, :], p_in, p_out)
    edges = np.argwhere(np.triu(rng.random((n, n)) < P, 1))
    X = np.hstack([np.eye(c)[y] + rng.normal(0, noise, (n, c)), rng.normal(0, 1, (n, extra))])
    return AttributedGraph(n=n, edges=edges, X=X, labels=y, name="planted")


def write_dataset(path: Path, graph: AttributedGraph, *, crlf=False) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    nl = "\r\n" if crlf else "\n"
    (path / "edges.tsv").write_text("".join(f"{i}\t{j}{nl}" for i, j in graph.edges))
    (path / "features.csv").write_text(
        "".join(",".join(repr(float(x)) for x in row) + nl for row in graph.X)
    )
    if graph.labels is not None:
        (path / "labels.txt").write_text("".join(f"{y}{nl}" for y in graph.labels))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def planted_dir(tmp_path):
    return write_dataset(tmp_path / "planted", planted_partition())


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}
_DETAILS: dict[int, str] = {}


def note(num: int, text: str) -> None:
    """Attach a measured value to a criterion's summary line."""
    _DETAILS[num] = text


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _ACCEPTANCE[num] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[num]
        detail = f" ({_DETAILS[num]})" if num in _DETAILS else ""
        terminalreporter.write_line(f"[{status}] criterion {num:>2}: {title}{detail}")
