"""Parameter containers and the layers shared by encoders and heads."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def fan_in_std(n_in: int) -> float:
    return 1.0 / math.sqrt(n_in)


class Module:
    """Owns a flat, ordered ``name -> Tensor`` parameter dict."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True)
        self.params[name] = t
        return t

    def normal(self, rng: np.random.Generator, name: str, shape, std: float) -> Tensor:
        return self.add(name, rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self.add(name, np.ones(shape))

    def linear_params(self, rng, name: str, n_in: int, n_out: int, std: float | None = None) -> None:
        """Weight ``[n_in, n_out]`` and zero bias; ``std=None`` means fan-in scaling 1/sqrt(n_in)."""
        self.normal(rng, f"{name}.w", (n_in, n_out), fan_in_std(n_in) if std is None else std)
        self.zeros(f"{name}.b", (n_out,))

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def linear(x: Tensor, params: dict[str, Tensor], name: str) -> Tensor:
    out = x @ params[f"{name}.w"]
    bias = params.get(f"{name}.b")
    return out if bias is None else out + bias


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def block_params(m: Module, rng, prefix: str, d: int, mlp_ratio: int, std: float) -> None:
    m.ones(f"{prefix}.ln1.g", (d,))
    m.zeros(f"{prefix}.ln1.b", (d,))
    for proj in ("q", "k", "v", "o"):
        m.linear_params(rng, f"{prefix}.attn.{proj}", d, d, std)
    # a key bias adds the same q.b to every score of a query, which softmax cancels
    del m.params[f"{prefix}.attn.k.b"]
    m.ones(f"{prefix}.ln2.g", (d,))
    m.zeros(f"{prefix}.ln2.b", (d,))
    m.linear_params(rng, f"{prefix}.mlp.fc1", d, d * mlp_ratio, std)
    m.linear_params(rng, f"{prefix}.mlp.fc2", d * mlp_ratio, d, std)


def self_attention(x: Tensor, p: dict[str, Tensor], prefix: str, heads: int,
                   return_weights: bool = False):
    """Multi-head scaled dot-product self-attention over [B, T, d] tokens."""
    B, L, d = x.shape
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(B, L, heads, dh).transpose(0, 2, 1, 3)

    q = split(linear(x, p, f"{prefix}.q") * (1.0 / math.sqrt(dh)))
    k = split(linear(x, p, f"{prefix}.k"))
    v = split(linear(x, p, f"{prefix}.v"))
    scores = q @ k.transpose(0, 1, 3, 2)
    weights = T.softmax(scores, axis=-1)
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, L, d)
    out = linear(ctx, p, f"{prefix}.o")
    return (out, weights) if return_weights else out


def transformer_block(x: Tensor, p: dict[str, Tensor], prefix: str, heads: int,
                      dropout_rate: float = 0.0, train: bool = False,
                      rng: np.random.Generator | None = None) -> Tensor:
    """Pre-norm block: x + MHA(LN(x)), then x + MLP(LN(x)) with a GELU hidden layer."""
    h = T.layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    x = x + dropout(self_attention(h, p, f"{prefix}.attn", heads), dropout_rate, train, rng)
    h = T.layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    h = linear(T.gelu(linear(h, p, f"{prefix}.mlp.fc1")), p, f"{prefix}.mlp.fc2")
    return x + dropout(h, dropout_rate, train, rng)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / (10000.0 ** (i / d))
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe
