"""Reverse-mode differentiation for dense matrix programs.

A :class:`Tape` records every primitive application in execution order.
Primitives are plain functions taking :class:`Var` handles; each one runs
its forward rule, appends a node to the tape the handles belong to, and
returns a new handle.  :func:`backward` walks the tape in reverse and
accumulates vector-Jacobian products into the differentiable leaves.

Constants may hold ``scipy.sparse`` matrices; they only ever appear as
fixed operands of :func:`matmul` and :func:`transpose`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
import scipy.sparse as sp

ROW_NORM_EPS = 1e-12
ZSCORE_EPS = 1e-9


class ShapeError(ValueError):
    pass


class GradientCheckError(RuntimeError):
    pass


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple[int, ...]
    value: Any
    requires_grad: bool
    params: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)
    name: str | None = None


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: Tape, id: int):
        self.tape = tape
        self.id = id

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.id]

    @property
    def value(self):
        return self.node.value

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.value) if not sp.issparse(self.value) else self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Var(id={self.id}, op={self.node.op}, shape={self.shape})"


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def variable(self, value, name: str | None = None) -> Var:
        """Add a differentiable leaf holding a copy of ``value``."""
        arr = np.array(value, dtype=np.float64)
        return self._push(Node("leaf", (), arr, True, name=name))

    def constant(self, value, name: str | None = None) -> Var:
        if sp.issparse(value):
            val = sp.csr_array(value, dtype=np.float64)
        else:
            val = np.asarray(value, dtype=np.float64)
        return self._push(Node("const", (), val, False, name=name))

    @property
    def leaves(self) -> list[Var]:
        return [Var(self, i) for i, nd in enumerate(self.nodes) if nd.op == "leaf"]

    @property
    def leaf_count(self) -> int:
        return sum(1 for nd in self.nodes if nd.op in ("leaf", "const"))

    def _push(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def record(self, op: str, inputs, **params) -> Var:
        for v in inputs:
            if v.tape is not self:
                raise ValueError(f"{op}: input {v!r} belongs to a different tape")
        fwd = _FORWARD[op]
        value, cache = fwd(*(v.value for v in inputs), **params)
        requires = any(v.node.requires_grad for v in inputs)
        return self._push(
            Node(op, tuple(v.id for v in inputs), value, requires, params, cache)
        )

    def replay(self) -> list:
        """Recompute every node from the stored leaves and constants."""
        values: list = []
        for nd in self.nodes:
            if nd.op in ("leaf", "const"):
                values.append(nd.value)
            else:
                val, _ = _FORWARD[nd.op](*(values[i] for i in nd.inputs), **nd.params)
                values.append(val)
        return values


class GradientSet(dict):
    """Leaf id -> gradient array.  Also indexable by the leaf's :class:`Var`."""

    def __getitem__(self, key):
        if isinstance(key, Var):
            key = key.id
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Var):
            key = key.id
        return super().__contains__(key)


# ---------------------------------------------------------------------------
# forward and vector-Jacobian rules
#
# forward(*input_values, **params) -> (value, cache)
# vjp(g, inputs, value, cache, needs, **params) -> tuple of input grads
#   ``needs[i]`` is False when input i is constant; return None there.
# ---------------------------------------------------------------------------

_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def _rule(name):
    def deco(cls):
        _FORWARD[name] = cls.forward
        _VJP[name] = cls.vjp
        return cls

    return deco


def _dense(x):
    return x.toarray() if sp.issparse(x) else x


def _mm(a, b):
    if sp.issparse(b) and not sp.issparse(a):
        return np.asarray((b.T @ a.T).T)
    return np.asarray(a @ b) if sp.issparse(a) else a @ b


@_rule("matmul")
class _MatMul:
    @staticmethod
    def forward(a, b):
        return _mm(a, b), None

    @staticmethod
    def vjp(g, inputs, value, cache, needs):
        a, b = inputs
        ga = _mm(g, b.T) if needs[0] else None
        gb = _mm(a.T, g) if needs[1] else None
        return ga, gb


@_rule("transpose")
class _Transpose:
    @staticmethod
    def forward(a):
        return a.T, None

    @staticmethod
    def vjp(g, inputs, value, cache, needs):
        return (g.T,)


@_rule("add")
class _Add:
    @staticmethod
    def forward(a, b):
        return a + b, None

    @staticmethod
    def vjp(g, inputs, value, cache, needs):
        return g, g


@_rule("scale")
class _Scale:
    @staticmethod
    def forward(a, c):
        return c * a, None

    @staticmethod
    def vjp(g, inputs, value, cache, needs, c):
        return (c * g,)


@_rule("diag_mul")
class _DiagMul:
    @staticmethod
    def forward(a, d):
        return d[:, None] * a, None

    @staticmethod
    def vjp(g, inputs, value, cache, needs, d):
        return (d[:, None] * g,)


@_rule("relu")
class _Relu:
    @staticmethod
    def forward(a):
        return np.maximum(a, 0.0), None

    @staticmethod
    def vjp(g, inputs, value, cache, needs):
        return (np.where(inputs[0] > 0.0, g, 0.0),)


@_rule("row_normalize")
class _RowNormalize:
    @staticmethod
    def forward(a, eps):
        norms = np.sqrt(np.sum(a * a, axis=1))
        denom = np.maximum(norms, eps)
        return a / denom[:, None], {"denom": denom, "active": norms > eps}

    @staticmethod
    def vjp(g, inputs, value, cache, needs, eps):
        denom, active = cache["denom"], cache["active"]
        # rows on the floor are divided by a constant
        proj = np.sum(value * g, axis=1) * active
        return ((g - value * proj[:, None]) / denom[:, None],)


@_rule("zscore")
class _ZScore:
    @staticmethod
    def forward(a, eps):
        centered = a - a.mean(axis=0)
        std = np.sqrt(np.mean(centered * centered, axis=0))
        denom = np.maximum(std, eps)
        return centered / denom, {"denom": denom, "active": std > eps}

    @staticmethod
    def vjp(g, inputs, value, cache, needs, eps):
        denom, active = cache["denom"], cache["active"]
        gbar = g.mean(axis=0)
        proj = np.mean(g * value, axis=0) * active
        return ((g - gbar - value * proj) / denom,)


@_rule("trace_quadratic")
class _TraceQuadratic:
    @staticmethod
    def forward(z, L):
        LZ = _mm(L, z)
        return np.float64(np.sum(z * LZ)), {"LZ": LZ}

    @staticmethod
    def vjp(g, inputs, value, cache, needs, L):
        # L is symmetric by contract, so (L + L^T) Z = 2 L Z
        return (2.0 * g * cache["LZ"],)


@_rule("gram_identity_distance")
class _GramIdentityDistance:
    @staticmethod
    def forward(z):
        R = z @ z.T
        R[np.diag_indices_from(R)] -= 1.0
        return np.float64(np.sum(R * R)), {"R": R}

    @staticmethod
    def vjp(g, inputs, value, cache, needs):
        return (4.0 * g * (cache["R"] @ inputs[0]),)


@_rule("combine")
class _Combine:
    @staticmethod
    def forward(*scalars, coeffs):
        total = np.float64(0.0)
        for c, s in zip(coeffs, scalars):
            total = total + c * s
        return np.float64(total), None

    @staticmethod
    def vjp(g, inputs, value, cache, needs, coeffs):
        return tuple(c * g for c in coeffs)


# ---------------------------------------------------------------------------
# public primitives
# ---------------------------------------------------------------------------


def _check2d(op, *vs):
    for v in vs:
        if len(v.shape) != 2:
            raise ShapeError(f"{op}: expected a matrix, got shape {v.shape}")


def matmul(a: Var, b: Var) -> Var:
    _check2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return a.tape.record("matmul", (a, b))


def transpose(a: Var) -> Var:
    _check2d("transpose", a)
    return a.tape.record("transpose", (a,))


def add(a: Var, b: Var) -> Var:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return a.tape.record("add", (a, b))


def scale(a: Var, c: float) -> Var:
    return a.tape.record("scale", (a,), c=float(c))


def diag_mul(d, a: Var) -> Var:
    """Left-multiply ``a`` by the fixed diagonal matrix ``diag(d)``."""
    _check2d("diag_mul", a)
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (a.shape[0],):
        raise ShapeError(f"diag_mul: diagonal of length {d.shape} vs matrix {a.shape}")
    return a.tape.record("diag_mul", (a,), d=d)


def relu(a: Var) -> Var:
    return a.tape.record("relu", (a,))


def row_normalize(a: Var, eps: float = ROW_NORM_EPS) -> Var:
    _check2d("row_normalize", a)
    return a.tape.record("row_normalize", (a,), eps=eps)


def zscore(a: Var, eps: float = ZSCORE_EPS) -> Var:
    """Standardize each column to mean 0 and population std 1."""
    _check2d("zscore", a)
    return a.tape.record("zscore", (a,), eps=eps)


def trace_quadratic(z: Var, L) -> Var:
    """``trace(Z^T L Z)`` for a fixed symmetric ``L`` (dense or sparse)."""
    _check2d("trace_quadratic", z)
    if L.shape != (z.shape[0], z.shape[0]):
        raise ShapeError(
            f"trace_quadratic: operator {L.shape} does not match embedding {z.shape}"
        )
    if not sp.issparse(L):
        L = np.asarray(L, dtype=np.float64)
    return z.tape.record("trace_quadratic", (z,), L=L)


def gram_identity_distance(z: Var) -> Var:
    """``||Z Z^T - I||_F^2``."""
    _check2d("gram_identity_distance", z)
    return z.tape.record("gram_identity_distance", (z,))


def combine(terms) -> Var:
    """Scalar linear combination of ``(coefficient, scalar Var)`` pairs."""
    terms = list(terms)
    if not terms:
        raise ValueError("combine: need at least one term")
    for _, v in terms:
        if v.shape != ():
            raise ShapeError(f"combine: expected scalars, got shape {v.shape}")
    coeffs = tuple(float(c) for c, _ in terms)
    return terms[0][1].tape.record("combine", tuple(v for _, v in terms), coeffs=coeffs)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def backward(tape: Tape, root: Var) -> GradientSet:
    """Gradient of the scalar ``root`` with respect to every variable leaf."""
    if not isinstance(root, Var) or root.tape is not tape or root.id >= len(tape.nodes):
        raise ValueError("backward: root is not a node of this tape")
    if np.ndim(root.value) != 0:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")

    nodes = tape.nodes
    pending: dict[int, Any] = {root.id: np.float64(1.0)}
    out = GradientSet()
    for i in range(root.id, -1, -1):
        g = pending.pop(i, None)
        nd = nodes[i]
        if g is None or not nd.requires_grad:
            continue
        if nd.op == "leaf":
            out[i] = g
            continue
        inputs = [nodes[j].value for j in nd.inputs]
        needs = [nodes[j].requires_grad for j in nd.inputs]
        grads = _VJP[nd.op](g, inputs, nd.value, nd.cache, needs, **nd.params)
        for j, need, gj in zip(nd.inputs, needs, grads):
            if not need or gj is None:
                continue
            pending[j] = pending[j] + gj if j in pending else gj

    for i, nd in enumerate(nodes):
        if nd.op == "leaf" and i not in out:
            out[i] = np.zeros_like(nd.value)
    for i in list(out):
        if np.ndim(out[i]) == 0:
            out[i] = np.asarray(out[i], dtype=np.float64).reshape(np.shape(nodes[i].value))
    return out


def finite_diff_check(
    program: Callable[[Tape, dict[str, Var]], Var],
    leaves: Mapping[str, np.ndarray],
    h: float = 1e-5,
    seed: int = 0,
    coords: int = 50,
) -> float:
    """Largest relative error between :func:`backward` and central differences.

    ``program(tape, vars)`` must build a scalar root from the variables in
    ``vars`` (same keys as ``leaves``).  For each leaf a seeded subsample of
    at least ``coords`` coordinates (all of them for small leaves) is
    perturbed by ``+-h``.  The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    base = {k: np.array(v, dtype=np.float64) for k, v in leaves.items()}

    def evaluate(values):
        tape = Tape()
        vs = {k: tape.variable(v, name=k) for k, v in values.items()}
        return tape, vs, program(tape, vs)

    tape, vs, root = evaluate(base)
    grads = backward(tape, root)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for name, arr in base.items():
        count = min(arr.size, max(coords, 50))
        picks = np.sort(rng.choice(arr.size, size=count, replace=False))
        analytic_all = grads[vs[name]]
        for flat in picks:
            idx = np.unravel_index(flat, arr.shape)
            shifted = dict(base)
            probe = arr.copy()
            probe[idx] = arr[idx] + h
            shifted[name] = probe
            f_plus = evaluate(shifted)[2].item()
            probe = arr.copy()
            probe[idx] = arr[idx] - h
            shifted[name] = probe
            f_minus = evaluate(shifted)[2].item()
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(analytic_all[idx])
            if not (np.isfinite(numeric) and np.isfinite(analytic)):
                raise GradientCheckError(
                    f"non-finite value at {name}{list(idx)}: "
                    f"analytic={analytic}, numeric={numeric}"
                )
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
