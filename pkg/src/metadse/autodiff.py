"""Minimal dense-matrix reverse-mode differentiation.

All values are 2-D float64 numpy arrays. A Tape records nodes in creation
order (a topological order of the DAG); backward() sweeps it once in reverse,
accumulating gradients into zero-initialized buffers. Every op validates
shapes and rejects non-finite outputs, so divergence surfaces immediately
instead of as silent NaN checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError, ShapeError


class Node:
    __slots__ = ("tape", "value", "grad", "requires_grad", "_backward", "name")

    def __init__(self, tape, value, requires_grad, backward=None, name=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


class Tape:
    """Single-threaded op recorder; one backward sweep per tape."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.finished = False

    def _push(self, value, requires_grad, backward=None, name=None) -> Node:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ShapeError(f"values must be 2-D matrices, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite value in {name or 'op'}")
        node = Node(self, value, requires_grad, backward, name)
        self.nodes.append(node)
        return node

    def leaf(self, value, name=None) -> Node:
        """Differentiable input (model parameter or learnable mask)."""
        return self._push(np.array(value, dtype=np.float64), True, name=name)

    def constant(self, value, name=None) -> Node:
        return self._push(np.asarray(value, dtype=np.float64), False, name=name)


def _as2d(value) -> np.ndarray:
    a = np.asarray(value, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def _same_tape(*nodes) -> Tape:
    tapes = {n.tape for n in nodes if isinstance(n, Node)}
    if len(tapes) != 1:
        raise ContractError("operands must live on one tape")
    return tapes.pop()


def backward(loss: Node) -> None:
    """Reverse sweep seeding d(loss)/d(loss) = 1; rejects a second sweep."""
    tape = loss.tape
    if tape.finished:
        raise ContractError("backward already ran on this tape")
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
    tape.finished = True
    loss.grad = np.ones((1, 1))
    for node in reversed(tape.nodes):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")
    value = a.value @ b.value

    def back(g):
        if a.requires_grad:
            a.accumulate(g @ b.value.T)
        if b.requires_grad:
            b.accumulate(a.value.T @ g)

    return tape._push(value, a.requires_grad or b.requires_grad, back, "matmul")


def add(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add {a.shape} + {b.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return tape._push(a.value + b.value, a.requires_grad or b.requires_grad, back, "add")


def add_rowvec(a: Node, v: Node) -> Node:
    """Broadcast a 1 x cols row vector (bias) over every row of a."""
    tape = _same_tape(a, v)
    if v.shape != (1, a.shape[1]):
        raise ShapeError(f"add_rowvec {a.shape} + {v.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g)
        if v.requires_grad:
            v.accumulate(g.sum(axis=0, keepdims=True))

    return tape._push(a.value + v.value, a.requires_grad or v.requires_grad, back, "add_rowvec")


def mul_rowvec(a: Node, v: Node) -> Node:
    """Broadcast-multiply each row of a by a 1 x cols vector (layernorm gain)."""
    tape = _same_tape(a, v)
    if v.shape != (1, a.shape[1]):
        raise ShapeError(f"mul_rowvec {a.shape} * {v.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g * v.value)
        if v.requires_grad:
            v.accumulate((g * a.value).sum(axis=0, keepdims=True))

    return tape._push(a.value * v.value, a.requires_grad or v.requires_grad, back, "mul_rowvec")


def scale(a: Node, c: float) -> Node:
    c = float(c)

    def back(g):
        if a.requires_grad:
            a.accumulate(g * c)

    return a.tape._push(a.value * c, a.requires_grad, back, "scale")


def scale_rows(a: Node, factors) -> Node:
    """Multiply row i by constant factors[i] (value-conditioned embeddings)."""
    f = np.asarray(factors, dtype=np.float64).reshape(-1, 1)
    if f.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rows needs {a.shape[0]} factors, got {f.shape[0]}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g * f)

    return a.tape._push(a.value * f, a.requires_grad, back, "scale_rows")


def tile_rows(a: Node, reps: int) -> Node:
    """Stack a vertically reps times (shared embedding table over a batch)."""
    if reps < 1:
        raise ContractError("reps must be >= 1")
    value = np.tile(a.value, (reps, 1))

    def back(g):
        if a.requires_grad:
            a.accumulate(g.reshape(reps, *a.shape).sum(axis=0))

    return a.tape._push(value, a.requires_grad, back, "tile_rows")


def hadamard(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard {a.shape} * {b.shape}")

    def back(g):
        if a.requires_grad:
            a.accumulate(g * b.value)
        if b.requires_grad:
            b.accumulate(g * a.value)

    return tape._push(a.value * b.value, a.requires_grad or b.requires_grad, back, "hadamard")


def relu(a: Node) -> Node:
    mask = a.value > 0

    def back(g):
        if a.requires_grad:
            a.accumulate(g * mask)

    return a.tape._push(np.maximum(a.value, 0.0), a.requires_grad, back, "relu")


def softmax_rows(a: Node) -> Node:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        if a.requires_grad:
            a.accumulate(y * (g - (g * y).sum(axis=1, keepdims=True)))

    return a.tape._push(y, a.requires_grad, back, "softmax_rows")


LAYERNORM_EPS = 1e-12


def layernorm_rows(a: Node) -> Node:
    """Normalize each row to mean 0, variance 1 (no affine; eps guards constant rows)."""
    mu = a.value.mean(axis=1, keepdims=True)
    xc = a.value - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    y = xc * inv

    def back(g):
        if a.requires_grad:
            gm = g.mean(axis=1, keepdims=True)
            gym = (g * y).mean(axis=1, keepdims=True)
            a.accumulate(inv * (g - gm - y * gym))

    return a.tape._push(y, a.requires_grad, back, "layernorm_rows")


def mean_pool(a: Node, n_samples: int) -> Node:
    """Average each sample's block of rows: (n_samples*P, d) -> (n_samples, d)."""
    rows, cols = a.shape
    if rows % n_samples != 0:
        raise ShapeError(f"{rows} rows not divisible by {n_samples} samples")
    p = rows // n_samples
    value = a.value.reshape(n_samples, p, cols).mean(axis=1)

    def back(g):
        if a.requires_grad:
            a.accumulate(np.repeat(g / p, p, axis=0))

    return a.tape._push(value, a.requires_grad, back, "mean_pool")


def mse(pred: Node, target) -> Node:
    """Scalar mean of squared residuals over all entries."""
    t = _as2d(target)
    if t.shape != pred.shape:
        raise ShapeError(f"mse {pred.shape} vs target {t.shape}")
    if t.size == 0:
        raise ContractError("mse over an empty batch")
    diff = pred.value - t
    value = np.array([[np.mean(diff * diff)]])

    def back(g):
        if pred.requires_grad:
            pred.accumulate((2.0 / diff.size) * diff * g[0, 0])

    return pred.tape._push(value, pred.requires_grad, back, "mse")


def attention(q: Node, k: Node, v: Node, heads: int, n_samples: int, mask=None):
    """Fused multi-head self-attention over a batch of token blocks.

    q, k, v are (n_samples * P, d) with d divisible by heads. Rows are grouped
    per sample; attention is restricted to each sample's own P tokens. When a
    mask is given (constant array or learnable Node, P x P in [0, 1]), weights
    become the row-renormalized product softmax(QK'/sqrt(hd)) * mask, computed
    in fused form so an all-ones mask is bitwise identical to no mask.

    Returns (context node, weights) where weights is the (heads, n_samples,
    P, P) array of post-mask attention rows (detached copy).
    """
    tape = _same_tape(q, k, v)
    if not (q.shape == k.shape == v.shape):
        raise ShapeError(f"attention shapes differ: {q.shape} {k.shape} {v.shape}")
    rows, d = q.shape
    if d % heads != 0:
        raise ShapeError(f"width {d} not divisible by {heads} heads")
    if rows % n_samples != 0:
        raise ShapeError(f"{rows} rows not divisible by {n_samples} samples")
    p = rows // n_samples
    hd = d // heads

    mask_node = mask if isinstance(mask, Node) else None
    m = None
    if mask is not None:
        m = mask.value if mask_node is not None else np.asarray(mask, dtype=np.float64)
        if m.shape != (p, p):
            raise ShapeError(f"mask shape {m.shape}, expected ({p}, {p})")

    def split(x):
        return x.reshape(n_samples, p, heads, hd).transpose(0, 2, 1, 3)

    q4, k4, v4 = split(q.value), split(k.value), split(v.value)
    s = q4 @ k4.transpose(0, 1, 3, 2) / math.sqrt(hd)
    e = np.exp(s - s.max(axis=3, keepdims=True))
    u = e * m if m is not None else e
    t = u.sum(axis=3, keepdims=True)
    a = u / t
    ctx = (a @ v4).transpose(0, 2, 1, 3).reshape(rows, d)

    needs = q.requires_grad or k.requires_grad or v.requires_grad or (
        mask_node is not None and mask_node.requires_grad)

    def back(g):
        g4 = split(g)
        ga = g4 @ v4.transpose(0, 1, 3, 2)
        if v.requires_grad:
            dv = a.transpose(0, 1, 3, 2) @ g4
            v.accumulate(dv.transpose(0, 2, 1, 3).reshape(rows, d))
        # d(loss)/dU with A = U / rowsum(U)
        gu = (ga - (ga * a).sum(axis=3, keepdims=True)) / t
        if mask_node is not None and mask_node.requires_grad:
            mask_node.accumulate((gu * e).sum(axis=(0, 1)))
        ge = gu * m if m is not None else gu
        gs = ge * e / math.sqrt(hd)
        if q.requires_grad:
            dq = gs @ k4
            q.accumulate(dq.transpose(0, 2, 1, 3).reshape(rows, d))
        if k.requires_grad:
            dk = gs.transpose(0, 1, 3, 2) @ q4
            k.accumulate(dk.transpose(0, 2, 1, 3).reshape(rows, d))

    out = tape._push(ctx, needs, back, "attention")
    return out, a.transpose(1, 0, 2, 3).copy()


# ---------------------------------------------------------------------------
# optimizers


def sgd_step(params, grads, lr: float):
    """p' = p - lr * g, segment-wise; inputs untouched."""
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: grad shape {g.shape} vs param {p.shape}")
        out[name] = p - lr * g
    return out


@dataclass
class AdamState:
    """First/second moment accumulators; conventional constants."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: AdamState, params, grads, lr: float):
    """One Adam update; returns (state', params') without mutating inputs."""
    t = state.t + 1
    new = AdamState(m={}, v={}, t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    out = {}
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: grad shape {g.shape} vs param {p.shape}")
        m = state.beta1 * state.m.get(name, 0.0) + (1 - state.beta1) * g
        v = state.beta2 * state.v.get(name, 0.0) + (1 - state.beta2) * (g * g)
        new.m[name] = m
        new.v[name] = v
        out[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return new, out


def clip_grads(grads, max_norm: float):
    """Global-norm clip across all segments; returns grads scaled if needed."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}
