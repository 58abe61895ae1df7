"""Training loop: forward pass, self-contrastive loss, backward, Adam."""

from __future__ import annotations

import dataclasses
import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import AttmParams, attention_forward, init_params, mlp_encode, similarity_normalize, sparse_if_worthwhile
from .diffusion import DiffusionConfig, euler_diffuse, fuse_and_normalize
from .graph import AttributedGraph, GraphOperators, KernelParams, edge_density
from .objective import LossTerms, build_operators, coles_random_negatives, contrastive_loss, random_negative_loss

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_negative", "no_redundancy", "redundancy_only", "random_negative")
THETA_KEYS = ("theta1", "theta2")
PHI_KEYS = ("phi1", "phi2")

# keys accepted in JSON run configurations
CONFIG_KEYS = (
    "beta",
    "gamma",
    "k",
    "time",
    "dt",
    "hidden",
    "epochs",
    "lr_theta",
    "lr_phi",
    "seed",
    "variant",
    "kmeans_restarts",
)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, terms: LossTerms):
        self.epoch = epoch
        self.terms = terms
        super().__init__(
            f"non-finite loss at epoch {epoch}: Lp={terms.lp}, Ln={terms.ln}, "
            f"Lr={terms.lr}, total={terms.total}"
        )


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 1.0
    gamma: float = 1.0
    k: int = 10
    time: float = 10.0
    dt: float = 1.0
    hidden: int = 64
    dprime: int | None = None
    epochs: int = 20
    lr_theta: float = 1e-3
    lr_phi: float = 1e-5
    seed: int = 0
    variant: str = "full"
    kmeans_restarts: int = 10
    kernel_sigma: float = 0.5
    kernel_dof: float = 1.0
    # random_negative variant: number of graphs and edge density (None: match the graph)
    kappa: int = 5
    negative_density: float | None = None

    def __post_init__(self):
        if self.dprime is None:
            object.__setattr__(self, "dprime", self.hidden)
        problems = []
        if self.beta < 0:
            problems.append("beta must be nonnegative")
        if self.gamma < 0:
            problems.append("gamma must be nonnegative")
        for name in ("k", "hidden", "dprime", "kmeans_restarts", "kappa"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be a positive integer")
        if self.epochs < 0:
            problems.append("epochs must be nonnegative")
        if not self.lr_theta > 0 or not self.lr_phi > 0:
            problems.append("learning rates must be positive")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {', '.join(VARIANTS)}")
        if problems:
            raise ValueError("; ".join(problems))
        # DiffusionConfig owns the time/dt checks
        self.diffusion

    @property
    def diffusion(self) -> DiffusionConfig:
        return DiffusionConfig(time=self.time, dt=self.dt)

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(k=self.k, v=self.kernel_dof, sigma=self.kernel_sigma)

    def replace(self, **changes) -> TrainConfig:
        # the embedding width follows the hidden width unless set explicitly
        if "hidden" in changes and "dprime" not in changes and self.dprime == self.hidden:
            changes["dprime"] = None
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, data: dict, base: TrainConfig | None = None) -> TrainConfig:
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise KeyError(f"unknown config key(s): {', '.join(unknown)}")
        base = base or cls()
        return base.replace(**data)

    def to_mapping(self) -> dict:
        return {k: getattr(self, k) for k in CONFIG_KEYS}


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: AdamState, lrs: dict) -> None:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``.

    ``lrs`` maps each parameter name to its learning rate.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise ValueError(f"missing gradient for parameter(s): {', '.join(missing)}")
    for k in params:
        if grads[k].shape != params[k].shape:
            raise ValueError(f"gradient for {k} has shape {grads[k].shape}, expected {params[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, p in params.items():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lrs[k] * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class EpochRecord:
    lp: float
    ln: float
    lr: float
    total: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def totals(self) -> list[float]:
        return [r.total for r in self.records]


@dataclass(eq=False)
class TrainResult:
    Z: np.ndarray
    history: TrainHistory
    params: AttmParams
    # loss of the returned embedding
    final_terms: LossTerms | None = None


@dataclass(eq=False)
class PreparedOperators:
    """Graph operators converted to the storage each product runs fastest with."""

    W: object
    Wknn: object
    deg: np.ndarray
    Lpos: object
    Lneg: object
    random_Lnegs: list | None = None

    @classmethod
    def from_operators(cls, ops: GraphOperators) -> PreparedOperators:
        return cls(
            W=sparse_if_worthwhile(ops.W),
            Wknn=sparse_if_worthwhile(ops.Wknn),
            deg=ops.deg,
            Lpos=sparse_if_worthwhile(ops.Lpos),
            Lneg=sparse_if_worthwhile(ops.Lneg),
        )


def forward(params: AttmParams, ops: PreparedOperators, cfg: TrainConfig, tape: ad.Tape):
    """Record one full forward pass; returns ``(Z, parameter handles)``."""
    vs = {k: tape.variable(v, name=k) for k, v in params.as_dict().items()}
    Pc = attention_forward(ops.W, ops.Wknn, vs["theta1"], vs["theta2"])
    S = similarity_normalize(Pc)
    H = mlp_encode(S, vs["phi1"], vs["phi2"])
    Zt = euler_diffuse(H, ops.W, cfg.diffusion)
    Z = fuse_and_normalize(Zt, H, ops.deg)
    return Z, vs


def variant_loss(variant: str, Z: ad.Var, ops: PreparedOperators, cfg: TrainConfig) -> LossTerms:
    """Loss for one of the ablation variants.

    Every variant evaluates all three terms so histories stay comparable;
    switched-off terms get a zero coefficient.
    """
    if variant == "full":
        return contrastive_loss(Z, ops.Lpos, ops.Lneg, cfg.beta, cfg.gamma)
    if variant == "no_negative":
        return contrastive_loss(Z, ops.Lpos, ops.Lneg, 0.0, cfg.gamma)
    if variant == "no_redundancy":
        return contrastive_loss(Z, ops.Lpos, ops.Lneg, cfg.beta, 0.0)
    if variant == "redundancy_only":
        lp = ad.trace_quadratic(Z, ops.Lpos)
        ln = ad.trace_quadratic(Z, ops.Lneg)
        lr = ad.gram_identity_distance(Z)
        total = ad.combine([(0.0, lp), (0.0, ln), (cfg.gamma, lr)])
        return LossTerms(lp.item(), ln.item(), lr.item(), total.item(), 0.0, cfg.gamma, total)
    if variant == "random_negative":
        if ops.random_Lnegs is None:
            raise ValueError("random_negative variant needs prepared random Laplacians")
        return random_negative_loss(Z, ops.Lpos, ops.random_Lnegs, cfg.beta, cfg.gamma)
    raise ValueError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")


def prepare(graph: AttributedGraph, cfg: TrainConfig, operators: GraphOperators | None = None) -> PreparedOperators:
    if cfg.k >= graph.n:
        raise ValueError(f"k={cfg.k} must be smaller than the node count {graph.n}")
    ops = operators if operators is not None else build_operators(graph, cfg.kernel)
    prepared = PreparedOperators.from_operators(ops)
    if cfg.variant == "random_negative":
        density = cfg.negative_density
        if density is None:
            density = edge_density(graph)
        Ls = coles_random_negatives(graph.n, cfg.kappa, density, cfg.seed)
        prepared.random_Lnegs = [sparse_if_worthwhile(L) for L in Ls]
    return prepared


def _loss_and_grads(params: AttmParams, ops: PreparedOperators, cfg: TrainConfig):
    # the tape lives only inside this frame, so its memory is released on return
    tape = ad.Tape()
    Z, vs = forward(params, ops, cfg, tape)
    terms = variant_loss(cfg.variant, Z, ops, cfg)
    if not np.isfinite(terms.total):
        return dataclasses.replace(terms, node=None), None
    grads = ad.backward(tape, terms.node)
    return dataclasses.replace(terms, node=None), {k: grads[v] for k, v in vs.items()}


def train(graph: AttributedGraph, cfg: TrainConfig, operators: GraphOperators | None = None) -> TrainResult:
    """Fit the encoder on ``graph`` and return the final embedding.

    ``operators`` may be passed to reuse a precomputed set across runs that
    share ``k`` and the kernel settings.  The returned ``Z`` comes from a
    forward pass with the parameters left after the last update.
    """
    ops = prepare(graph, cfg, operators)
    params = init_params(graph.n, cfg.hidden, cfg.dprime, cfg.seed)
    lrs = {k: cfg.lr_theta for k in THETA_KEYS} | {k: cfg.lr_phi for k in PHI_KEYS}
    state = AdamState()
    history = TrainHistory()

    for epoch in range(cfg.epochs):
        start = _time.perf_counter()
        terms, grads = _loss_and_grads(params, ops, cfg)
        if not all(np.isfinite([terms.lp, terms.ln, terms.lr, terms.total])):
            raise TrainingDiverged(epoch, terms)
        adam_step(params.as_dict(), grads, state, lrs)
        elapsed = _time.perf_counter() - start
        history.records.append(EpochRecord(terms.lp, terms.ln, terms.lr, terms.total, elapsed))
        log.debug("epoch %d: total=%.6g (%.2fs)", epoch, terms.total, elapsed)

    tape = ad.Tape()
    Z, _ = forward(params, ops, cfg, tape)
    final = dataclasses.replace(variant_loss(cfg.variant, Z, ops, cfg), node=None)
    return TrainResult(Z=np.array(Z.value), history=history, params=params, final_terms=final)
