"""Attentional encoder: attentional graphs, normalized similarity, MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import ShapeError, Var

THETA_NOISE = 1e-2


@dataclass(eq=False)
class AttmParams:
    theta1: np.ndarray  # n x n
    theta2: np.ndarray  # n x n
    phi1: np.ndarray  # n x hidden
    phi2: np.ndarray  # hidden x dprime

    def __post_init__(self):
        n = self.theta1.shape[0]
        h, dp = self.phi2.shape
        expected = {
            "theta1": (n, n),
            "theta2": (n, n),
            "phi1": (n, h),
            "phi2": (h, dp),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def n(self) -> int:
        return self.theta1.shape[0]

    @property
    def hidden(self) -> int:
        return self.phi1.shape[1]

    @property
    def dprime(self) -> int:
        return self.phi2.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        """Live references to the four matrices (mutations write through)."""
        return {k: getattr(self, k) for k in ("theta1", "theta2", "phi1", "phi2")}

    def copy(self) -> AttmParams:
        return AttmParams(**{k: v.copy() for k, v in self.as_dict().items()})


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(n: int, hidden: int, dprime: int, seed: int) -> AttmParams:
    """Identity-plus-noise attention matrices and Glorot-uniform MLP weights."""
    for name, val in (("n", n), ("hidden", hidden), ("dprime", dprime)):
        if val < 1:
            raise ValueError(f"{name} must be positive, got {val}")
    rng = np.random.default_rng(seed)
    eye = np.eye(n)
    theta1 = eye + THETA_NOISE * rng.standard_normal((n, n))
    theta2 = eye + THETA_NOISE * rng.standard_normal((n, n))
    phi1 = glorot_uniform(rng, n, hidden)
    phi2 = glorot_uniform(rng, hidden, dprime)
    return AttmParams(theta1, theta2, phi1, phi2)


def _const(tape: ad.Tape, m) -> Var:
    if isinstance(m, Var):
        return m
    return tape.constant(m)


def attention_forward(W, Wknn, theta1: Var, theta2: Var) -> Var:
    """Cross-attentional graph ``Pc = (W Theta1 W^T) Theta2 Wknn``.

    ``W`` and ``Wknn`` are fixed operators (dense, sparse, or constant
    handles on the same tape as the parameters).
    """
    tape = theta1.tape
    Wc = _const(tape, W)
    Kc = _const(tape, Wknn)
    n = theta1.shape[0]
    for name, v in (("W", Wc), ("Wknn", Kc), ("theta2", theta2)):
        if v.shape != (n, n):
            raise ShapeError(f"attention_forward: {name} has shape {v.shape}, expected {(n, n)}")
    Ps = ad.matmul(ad.matmul(Wc, theta1), ad.transpose(Wc))
    return ad.matmul(ad.matmul(Ps, theta2), Kc)


def similarity_normalize(Pc: Var) -> Var:
    """Row-wise unit-norm version of the Gram matrix ``Pc Pc^T``."""
    return ad.row_normalize(ad.matmul(Pc, ad.transpose(Pc)))


def mlp_encode(S: Var, phi1: Var, phi2: Var) -> Var:
    """``relu(S Phi1) Phi2`` with no biases."""
    if S.shape[1] != phi1.shape[0] or phi1.shape[1] != phi2.shape[0]:
        raise ShapeError(
            f"mlp_encode: S {S.shape}, phi1 {phi1.shape}, phi2 {phi2.shape} do not chain"
        )
    return ad.matmul(ad.relu(ad.matmul(S, phi1)), phi2)


def sparse_if_worthwhile(m: np.ndarray, max_density: float = 0.1):
    """Return a CSR copy when ``m`` is sparse enough for it to pay off."""
    if sp.issparse(m):
        return m
    if np.count_nonzero(m) <= max_density * m.size:
        return sp.csr_array(m)
    return m
