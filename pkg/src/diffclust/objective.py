"""Positive/negative sampling operators and the self-contrastive loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Var
from .graph import AttributedGraph, GraphOperators, KernelParams, build_knn_graph, normalize_adjacency


@dataclass
class LossTerms:
    lp: float
    ln: float
    lr: float
    total: float
    beta: float
    gamma: float
    node: Var | None = field(default=None, repr=False, compare=False)


def negative_adjacency(graph: AttributedGraph, Wknn: np.ndarray) -> np.ndarray:
    """Pairs that are neither graph neighbours nor kNN neighbours (self excluded)."""
    Wknn = np.asarray(Wknn)
    if Wknn.shape != (graph.n, graph.n):
        raise ShapeError(f"negative_adjacency: Wknn {Wknn.shape} for n={graph.n}")
    related = (graph.adjacency() != 0) | (Wknn != 0) | (Wknn.T != 0)
    np.fill_diagonal(related, True)
    return (~related).astype(np.float64)


def normalized_laplacian(A: np.ndarray) -> np.ndarray:
    """``I - D^-1/2 A D^-1/2``; zero-degree nodes keep a unit diagonal."""
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    L = -(inv_sqrt[:, None] * A * inv_sqrt[None, :])
    L[np.diag_indices_from(L)] += 1.0
    return L


def build_operators(graph: AttributedGraph, kernel: KernelParams) -> GraphOperators:
    W, deg = normalize_adjacency(graph)
    Wknn = build_knn_graph(graph.X, kernel)
    Wneg = negative_adjacency(graph, Wknn)
    return GraphOperators(
        W=W,
        deg=deg,
        Wknn=Wknn,
        Wneg=Wneg,
        Lpos=normalized_laplacian(graph.adjacency()),
        Lneg=normalized_laplacian(Wneg),
    )


def _terms(lp: Var, ln: Var, lr: Var, cp: float, cn: float, cr: float, beta, gamma) -> LossTerms:
    total = ad.combine([(cp, lp), (cn, ln), (cr, lr)])
    return LossTerms(
        lp=lp.item(),
        ln=ln.item(),
        lr=lr.item(),
        total=total.item(),
        beta=beta,
        gamma=gamma,
        node=total,
    )


def contrastive_loss(Z: Var, Lpos, Lneg, beta: float, gamma: float) -> LossTerms:
    """``trace(Z^T Lpos Z) - beta trace(Z^T Lneg Z) + gamma ||Z Z^T - I||_F^2``."""
    if beta < 0 or gamma < 0:
        raise ValueError("beta and gamma must be nonnegative")
    n = Z.shape[0]
    for name, L in (("Lpos", Lpos), ("Lneg", Lneg)):
        if L.shape != (n, n):
            raise ShapeError(f"contrastive_loss: {name} {L.shape} vs embedding {Z.shape}")
    lp = ad.trace_quadratic(Z, Lpos)
    ln = ad.trace_quadratic(Z, Lneg)
    lr = ad.gram_identity_distance(Z)
    return _terms(lp, ln, lr, 1.0, -beta, gamma, beta, gamma)


def random_negative_loss(Z: Var, Lpos, Lnegs, eta: float, gamma: float) -> LossTerms:
    """Loss with ``Ln`` replaced by the mean over random negative Laplacians.

    ``total = Lp - eta * mean_k trace(Z^T L_k Z) + gamma * Lr``.
    """
    lp = ad.trace_quadratic(Z, Lpos)
    parts = [ad.trace_quadratic(Z, L) for L in Lnegs]
    ln = ad.combine([(1.0 / len(parts), p) for p in parts])
    lr = ad.gram_identity_distance(Z)
    return _terms(lp, ln, lr, 1.0, -eta, gamma, eta, gamma)


def coles_random_negatives(n: int, kappa: int, density: float, seed: int) -> list[np.ndarray]:
    """``kappa`` Erdos-Renyi negative graphs, returned as normalized Laplacians."""
    if kappa < 1:
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    if not 0 <= density <= 1:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    out = []
    for _ in range(kappa):
        A = np.zeros((n, n))
        A[iu] = (rng.random(iu[0].size) < density).astype(np.float64)
        A = A + A.T
        out.append(normalized_laplacian(A))
    return out
