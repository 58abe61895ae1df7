"""Laplacian diffusion of the encoder output and the fused, standardized embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import ShapeError, Var


@dataclass(frozen=True)
class DiffusionConfig:
    time: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        if not self.time >= 0:
            raise ValueError(f"diffusion time must be nonnegative, got {self.time}")
        if not 0 < self.dt <= 1:
            raise ValueError(f"dt must lie in (0, 1] for explicit Euler, got {self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.time / self.dt))


def step_operator(W, dt: float):
    """Euler update matrix ``I + dt (W - I)``; exactly ``W`` when ``dt == 1``."""
    if dt == 1.0:
        return W
    if sp.issparse(W):
        n = W.shape[0]
        return sp.csr_array(dt * W + (1.0 - dt) * sp.eye_array(n, format="csr"))
    W = np.asarray(W, dtype=np.float64)
    return dt * W + (1.0 - dt) * np.eye(W.shape[0])


def euler_diffuse(H: Var, W, cfg: DiffusionConfig) -> Var:
    """Integrate ``dZ/dt = (W - I) Z`` from ``Z(0) = H`` with explicit Euler.

    Each step is recorded on the tape as one product with the fixed update
    matrix, so the reverse pass is the exact unrolled adjoint.
    """
    if W.shape != (H.shape[0], H.shape[0]):
        raise ShapeError(f"euler_diffuse: operator {W.shape} vs state {H.shape}")
    steps = cfg.steps
    if steps == 0:
        return H
    A = H.tape.constant(step_operator(W, cfg.dt), name="euler_step")
    Z = H
    for _ in range(steps):
        Z = ad.matmul(A, Z)
    return Z


def euler_trajectory(H: np.ndarray, W, cfg: DiffusionConfig) -> list[np.ndarray]:
    """All states ``Z_0 .. Z_steps`` of :func:`euler_diffuse` as plain arrays."""
    tape = ad.Tape()
    start = tape.variable(H)
    euler_diffuse(start, W, cfg)
    states = [start.value]
    states += [nd.value for nd in tape.nodes if nd.op == "matmul"]
    return states


def fuse_and_normalize(Ztilde: Var, H: Var, deg) -> Var:
    """``zscore(relu(diag(sqrt(2 deg)) Ztilde + H))``."""
    deg = np.asarray(deg, dtype=np.float64)
    if Ztilde.shape != H.shape:
        raise ShapeError(f"fuse_and_normalize: {Ztilde.shape} vs {H.shape}")
    omega = np.sqrt(2.0 * deg)
    return ad.zscore(ad.relu(ad.add(ad.diag_mul(omega, Ztilde), H)))
