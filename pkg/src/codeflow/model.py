"""Bidirectional transformer encoder over masked attention.

Residual order is post-norm: the layer output is LN(sublayer(H) + H) for both
the multi-head attention and the feed-forward block. Input states are the sum
of token and position embeddings, with no extra norm before layer 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    vocab_size: int = 512
    max_positions: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        for name in ("hidden_dim", "num_heads", "ffn_dim", "vocab_size", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "hidden_dim": self.hidden_dim,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "vocab_size": self.vocab_size,
            "max_positions": self.max_positions,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: int(v) for k, v in d.items()})


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor]

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.config,
            {k: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad) for k, t in self.tensors.items()},
        )


@dataclass
class Activations:
    hidden: list[Tensor] = field(default_factory=list)  # H^0 .. H^N, each |X| x d_h
    attention: list[list[Tensor]] = field(default_factory=list)  # [layer][head], |X| x |X|

    @property
    def final(self) -> Tensor:
        return self.hidden[-1]


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape table; single source of truth for init and checkpoint checks."""
    d_h, d_k = config.hidden_dim, config.head_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d_h),
        "pos_emb": (config.max_positions, d_h),
        "mlm.w": (d_h, config.vocab_size),
        "mlm.b": (config.vocab_size,),
    }
    for n in range(config.num_layers):
        for i in range(config.num_heads):
            shapes[f"layer{n}.head{i}.wq"] = (d_h, d_k)
            shapes[f"layer{n}.head{i}.wk"] = (d_h, d_k)
            shapes[f"layer{n}.head{i}.wv"] = (d_h, d_k)
        shapes[f"layer{n}.wo"] = (d_h, d_h)
        shapes[f"layer{n}.attn_ln.gain"] = (d_h,)
        shapes[f"layer{n}.attn_ln.bias"] = (d_h,)
        shapes[f"layer{n}.ffn.w1"] = (d_h, config.ffn_dim)
        shapes[f"layer{n}.ffn.b1"] = (config.ffn_dim,)
        shapes[f"layer{n}.ffn.w2"] = (config.ffn_dim, d_h)
        shapes[f"layer{n}.ffn.b2"] = (d_h,)
        shapes[f"layer{n}.ffn_ln.gain"] = (d_h,)
        shapes[f"layer{n}.ffn_ln.bias"] = (d_h,)
    return shapes


def _trunc_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float, dtype) -> np.ndarray:
    # Resample out-of-range entries so the distribution is truly truncated at 2 sigma.
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(dtype)


def init_params(config: ModelConfig, dtype=np.float32) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("gain",):
            data = np.ones(shape, dtype=dtype)
        elif leaf in ("bias", "b", "b1", "b2"):
            data = np.zeros(shape, dtype=dtype)
        else:
            data = _trunc_normal(rng, shape, 0.02, dtype)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(config, tensors)


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def attention_scores(h: Tensor, params: ModelParams, layer: int, additive_mask: np.ndarray) -> list[Tensor]:
    """Per-head attention weight matrices for one layer (softmax over keys)."""
    cfg = params.config
    if additive_mask.shape != (h.shape[0], h.shape[0]):
        raise ShapeMismatch(f"mask shape {additive_mask.shape} does not match sequence length {h.shape[0]}")
    mask_t = Tensor(additive_mask.astype(h.dtype, copy=False))
    scale = 1.0 / math.sqrt(cfg.head_dim)
    weights = []
    for i in range(cfg.num_heads):
        q = ag.matmul(h, params.tensors[f"layer{layer}.head{i}.wq"])
        k = ag.matmul(h, params.tensors[f"layer{layer}.head{i}.wk"])
        scores = ag.add(ag.mul(ag.matmul(q, ag.transpose(k)), scale), mask_t)
        weights.append(ag.softmax(scores, axis=-1))
    return weights


def _multi_head_block(h: Tensor, params: ModelParams, layer: int, additive_mask: np.ndarray) -> tuple[list[Tensor], Tensor]:
    cfg = params.config
    weights = attention_scores(h, params, layer, additive_mask)
    contexts = []
    for i in range(cfg.num_heads):
        v = ag.matmul(h, params.tensors[f"layer{layer}.head{i}.wv"])
        contexts.append(ag.matmul(weights[i], v))
    merged = ag.concat(contexts, axis=1)
    return weights, ag.matmul(merged, params.tensors[f"layer{layer}.wo"])


def forward(params: ModelParams, ids, position_ids, additive_mask: np.ndarray) -> Activations:
    cfg = params.config
    ids = np.asarray(ids, dtype=np.intp)
    position_ids = np.asarray(position_ids, dtype=np.intp)
    if ids.shape != position_ids.shape:
        raise ShapeMismatch("ids and position_ids must have equal length")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ShapeMismatch("token id out of vocabulary range")
    if position_ids.size and (position_ids.min() < 0 or position_ids.max() >= cfg.max_positions):
        raise ShapeMismatch("position id out of range")

    h = ag.add(ag.take_rows(params.tensors["tok_emb"], ids), ag.take_rows(params.tensors["pos_emb"], position_ids))
    acts = Activations(hidden=[h])
    for n in range(cfg.num_layers):
        weights, ctx = _multi_head_block(h, params, n, additive_mask)
        g = ag.layer_norm(
            ag.add(ctx, h),
            params.tensors[f"layer{n}.attn_ln.gain"],
            params.tensors[f"layer{n}.attn_ln.bias"],
        )
        ffn_hidden = ag.gelu(ag.add(ag.matmul(g, params.tensors[f"layer{n}.ffn.w1"]), params.tensors[f"layer{n}.ffn.b1"]))
        ffn_out = ag.add(ag.matmul(ffn_hidden, params.tensors[f"layer{n}.ffn.w2"]), params.tensors[f"layer{n}.ffn.b2"])
        h = ag.layer_norm(
            ag.add(ffn_out, g),
            params.tensors[f"layer{n}.ffn_ln.gain"],
            params.tensors[f"layer{n}.ffn_ln.bias"],
        )
        acts.attention.append(weights)
        acts.hidden.append(h)
    return acts


def mlm_logits(params: ModelParams, final_hidden: Tensor) -> Tensor:
    return ag.add(ag.matmul(final_hidden, params.tensors["mlm.w"]), params.tensors["mlm.b"])


def compute_gradients(loss_fn, params: ModelParams) -> tuple[float, dict[str, np.ndarray]]:
    """Run loss_fn(params), backprop, and return (loss value, grads by name).

    Tensors with no influence on the loss get zero gradients.
    """
    for t in params.tensors.values():
        t.requires_grad = True
        t.grad = None
    loss = loss_fn(params)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss is {value}")
    loss.backward()
    return value, {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in params.tensors.items()
    }
