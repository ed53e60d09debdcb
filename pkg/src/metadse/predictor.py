"""Attention-based surrogate mapping encoded design points to IPC/power.

Each architectural parameter is one token: a learned per-parameter embedding
scaled by the normalized feature value plus a learned per-parameter base
vector. Pre-LN residual self-attention blocks mix tokens, a mean pool over
tokens feeds a two-layer MLP head. An optional P x P architectural mask gates
attention multiplicatively (post-softmax, row-renormalized); an all-ones mask
is bitwise identical to running unmasked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DegenerateMask, ShapeError

OUTPUTS = ("ipc", "power", "both")


@dataclass(frozen=True)
class PredictorConfig:
    embed_dim: int = 32
    heads: int = 4
    layers: int = 2
    mlp_hidden: int = 64
    outputs: str = "ipc"

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ContractError(f"embed_dim {self.embed_dim} not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ContractError("need at least one attention layer")
        if self.outputs not in OUTPUTS:
            raise ContractError(f"outputs must be one of {OUTPUTS}")

    @property
    def n_outputs(self) -> int:
        return 2 if self.outputs == "both" else 1


def segment_shapes(config: PredictorConfig, p: int) -> dict[str, tuple[int, int]]:
    """Named parameter segments in flatten order."""
    d, m, o = config.embed_dim, config.mlp_hidden, config.n_outputs
    shapes: dict[str, tuple[int, int]] = {
        "embed_scale": (p, d),
        "embed_base": (p, d),
    }
    for i in range(config.layers):
        shapes[f"layer{i}.ln_gain"] = (1, d)
        shapes[f"layer{i}.ln_bias"] = (1, d)
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"layer{i}.{proj}"] = (d, d)
            shapes[f"layer{i}.b{proj[1]}"] = (1, d)
    shapes["final.ln_gain"] = (1, d)
    shapes["final.ln_bias"] = (1, d)
    shapes["head.w1"] = (d, m)
    shapes["head.b1"] = (1, m)
    shapes["head.w2"] = (m, o)
    shapes["head.b2"] = (1, o)
    return shapes


def param_count(config: PredictorConfig, p: int) -> int:
    """Closed form: 2*P*d + L*(4*d^2 + 6*d) + 2*d + m*(d + 1 + o) + o."""
    d, m, o, layers = config.embed_dim, config.mlp_hidden, config.n_outputs, config.layers
    return 2 * p * d + layers * (4 * d * d + 6 * d) + 2 * d + m * (d + 1 + o) + o


def init_params(config: PredictorConfig, p: int, seed: int) -> dict[str, np.ndarray]:
    """Xavier-uniform weight matrices and embeddings, unit LN gains, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in segment_shapes(config, p).items():
        if ".ln_gain" in name:
            params[name] = np.ones(shape)
        elif ".b" in name or ".ln_bias" in name:
            params[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, shape)
    return params


def flatten(params: dict[str, np.ndarray], config: PredictorConfig, p: int) -> np.ndarray:
    shapes = segment_shapes(config, p)
    if set(params) != set(shapes):
        raise ContractError("parameter segments do not match the config layout")
    return np.concatenate([params[name].reshape(-1) for name in shapes])


def unflatten(flat: np.ndarray, config: PredictorConfig, p: int) -> dict[str, np.ndarray]:
    shapes = segment_shapes(config, p)
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (param_count(config, p),):
        raise ShapeError(f"flat vector length {flat.shape}, expected {param_count(config, p)}")
    out = {}
    at = 0
    for name, shape in shapes.items():
        n = shape[0] * shape[1]
        out[name] = flat[at:at + n].reshape(shape).copy()
        at += n
    return out


def copy_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


@dataclass
class AttentionRecord:
    """Post-mask attention rows from the most recent forward.

    One array per layer, shaped (heads, n_samples, P, P); every row sums to 1.
    """

    layers: list[np.ndarray] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.layers[-1].shape[1]

    def last_layer_sample_means(self) -> np.ndarray:
        """Head-averaged per-sample matrices from the last layer: (n_samples, P, P)."""
        return self.layers[-1].mean(axis=0)


def validate_mask(mask: np.ndarray, p: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (p, p):
        raise ShapeError(f"mask shape {mask.shape}, expected ({p}, {p})")
    if np.any(mask < 0.0) or np.any(mask > 1.0):
        raise ContractError("mask entries must lie in [0, 1]")
    if np.any(mask.max(axis=1) == 0.0):
        raise DegenerateMask("mask has an all-zero row")
    return mask


def make_leaves(tape: ad.Tape, params: dict[str, np.ndarray]) -> dict[str, ad.Node]:
    return {name: tape.leaf(arr, name=name) for name, arr in params.items()}


def predict_nodes(tape, leaves, x, config: PredictorConfig, mask=None, record=False):
    """Build the forward graph for a (B, P) feature batch on an existing tape.

    mask may be a constant array or a learnable tape Node. Returns
    (prediction node (B, n_outputs), AttentionRecord | None).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a (batch, P) feature matrix, got shape {x.shape}")
    n_samples, p = x.shape
    if n_samples < 1:
        raise ContractError("empty batch")
    if mask is not None:
        mv = mask.value if isinstance(mask, ad.Node) else mask
        validate_mask(mv, p)

    rec = AttentionRecord() if record else None
    tokens = ad.add(
        ad.scale_rows(ad.tile_rows(leaves["embed_scale"], n_samples), x.reshape(-1)),
        ad.tile_rows(leaves["embed_base"], n_samples),
    )
    h = tokens
    for i in range(config.layers):
        ln = ad.add_rowvec(
            ad.mul_rowvec(ad.layernorm_rows(h), leaves[f"layer{i}.ln_gain"]),
            leaves[f"layer{i}.ln_bias"],
        )
        q = ad.add_rowvec(ad.matmul(ln, leaves[f"layer{i}.wq"]), leaves[f"layer{i}.bq"])
        k = ad.add_rowvec(ad.matmul(ln, leaves[f"layer{i}.wk"]), leaves[f"layer{i}.bk"])
        v = ad.add_rowvec(ad.matmul(ln, leaves[f"layer{i}.wv"]), leaves[f"layer{i}.bv"])
        ctx, weights = ad.attention(q, k, v, config.heads, n_samples, mask)
        if record:
            rec.layers.append(weights)
        out = ad.add_rowvec(ad.matmul(ctx, leaves[f"layer{i}.wo"]), leaves[f"layer{i}.bo"])
        h = ad.add(h, out)
    final = ad.add_rowvec(
        ad.mul_rowvec(ad.layernorm_rows(h), leaves["final.ln_gain"]), leaves["final.ln_bias"]
    )
    pooled = ad.mean_pool(final, n_samples)
    hidden = ad.relu(ad.add_rowvec(ad.matmul(pooled, leaves["head.w1"]), leaves["head.b1"]))
    pred = ad.add_rowvec(ad.matmul(hidden, leaves["head.w2"]), leaves["head.b2"])
    return pred, rec


def predict(params, x, config: PredictorConfig, mask=None) -> np.ndarray:
    """Prediction values for a (B, P) batch; pure in (params, x, mask)."""
    tape = ad.Tape()
    leaves = {name: tape.constant(arr, name=name) for name, arr in params.items()}
    pred, _ = predict_nodes(tape, leaves, x, config, mask)
    return pred.value.copy()


def forward(params, features, config: PredictorConfig, mask=None):
    """Single design point forward: returns (predictions (n_outputs,), AttentionRecord)."""
    features = np.asarray(features, dtype=np.float64).reshape(1, -1)
    tape = ad.Tape()
    leaves = {name: tape.constant(arr, name=name) for name, arr in params.items()}
    pred, rec = predict_nodes(tape, leaves, features, config, mask, record=True)
    return pred.value[0].copy(), rec


@dataclass
class BatchLoss:
    value: float
    grads: dict[str, np.ndarray] | None = None
    mask_grad: np.ndarray | None = None
    record: AttentionRecord | None = None
    predictions: np.ndarray | None = None


def batch_loss(params, x, y, config: PredictorConfig, mask=None, *,
               learnable_mask=False, want_grads=False, record=False) -> BatchLoss:
    """Mean squared error of the batch plus, optionally, parameter gradients.

    y is (B, n_outputs). With learnable_mask the mask joins the tape as a leaf
    and its gradient is returned alongside the parameter gradients.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ContractError("empty batch")
    if y.shape != (x.shape[0], config.n_outputs):
        raise ShapeError(f"labels shape {y.shape}, expected ({x.shape[0]}, {config.n_outputs})")
    tape = ad.Tape()
    if want_grads:
        leaves = make_leaves(tape, params)
    else:
        leaves = {name: tape.constant(arr, name=name) for name, arr in params.items()}
    mask_node = None
    if mask is not None and learnable_mask:
        mask_node = tape.leaf(mask, name="arch_mask")
    pred, rec = predict_nodes(tape, leaves, x, config, mask_node if mask_node is not None else mask,
                              record=record)
    loss = ad.mse(pred, y)
    result = BatchLoss(value=float(loss.value[0, 0]), record=rec, predictions=pred.value.copy())
    if want_grads:
        ad.backward(loss)
        result.grads = {name: (node.grad if node.grad is not None else np.zeros_like(node.value))
                        for name, node in leaves.items()}
        if mask_node is not None:
            result.mask_grad = (mask_node.grad if mask_node.grad is not None
                                else np.zeros_like(mask_node.value))
    return result
