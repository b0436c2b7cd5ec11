"""Image and climate-series backbones.

Image side: a ViT (patch tokens + learned CLS token) or a small residual CNN.
Series side: a Transformer (sinusoidal positions, mean-pooled) or an LSTM
(final hidden state).  All take plain numpy batches and return ``[B, d]``
tensors.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import EncoderConfig
from .nn import Module, block_params, fan_in_std, linear, sinusoidal_positions, transformer_block
from .tensor import ShapeError, Tensor


class MissingValuesError(ValueError):
    pass


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """[B, C, H, W] -> [B, (H/p)*(W/p), C*p*p], patches in row-major order."""
    B, C, H, W = images.shape
    if H != W:
        raise ShapeError(f"images must be square, got {H}x{W}")
    if H % patch:
        raise ShapeError(f"image side {H} is not divisible by patch size {patch}")
    n = H // patch
    x = images.reshape(B, C, n, patch, n, patch).transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(B, n * n, C * patch * patch)


class ViTEncoder(Module):
    def __init__(self, cfg: EncoderConfig, channels: int, image_size: int,
                 rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.cfg, self.channels, self.image_size = cfg, channels, image_size
        d, p = cfg.embed_dim, cfg.patch_size
        self.n_patches = (image_size // p) ** 2
        self.linear_params(rng, "patch", channels * p * p, d)
        self.normal(rng, "cls", (1, 1, d), std)
        self.normal(rng, "pos", (self.n_patches + 1, d), std)
        for i in range(cfg.depth):
            block_params(self, rng, f"block{i}", d, cfg.mlp_ratio, std)
        self.ones("norm.g", (d,))
        self.zeros("norm.b", (d,))

    def patch_embed(self, images: np.ndarray) -> Tensor:
        B, C = images.shape[:2]
        if C != self.channels:
            raise ShapeError(f"expected {self.channels} image channels, got {C}")
        tokens = linear(Tensor(patchify(images, self.cfg.patch_size)), self.params, "patch")
        cls = T.broadcast_to(self.params["cls"], (B, 1, self.cfg.embed_dim))
        return T.concat([cls, tokens], axis=1) + self.params["pos"]

    def __call__(self, images: np.ndarray, train: bool = False, rng=None) -> Tensor:
        x = self.patch_embed(images)
        for i in range(self.cfg.depth):
            x = transformer_block(x, self.params, f"block{i}", self.cfg.heads, self.cfg.dropout, train, rng)
        return T.layer_norm(x[:, 0], self.params["norm.g"], self.params["norm.b"])


class CNNEncoder(Module):
    """Residual CNN: stem, three stages of two basic blocks (stride 2 entering
    stages 2 and 3), global average pool, linear projection to ``d``."""

    def __init__(self, cfg: EncoderConfig, channels: int, image_size: int,
                 rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.cfg, self.channels, self.image_size = cfg, channels, image_size
        w = max(cfg.embed_dim // 4, 4)
        self.widths = (w, 2 * w, 4 * w)
        self._conv(rng, "stem", channels, w, 3)
        c_in = w
        for s, c_out in enumerate(self.widths):
            for b in range(2):
                name = f"stage{s}.block{b}"
                self._conv(rng, f"{name}.conv1", c_in, c_out, 3)
                self._conv(rng, f"{name}.conv2", c_out, c_out, 3)
                if c_in != c_out:
                    self._conv(rng, f"{name}.skip", c_in, c_out, 1)
                c_in = c_out
        self.linear_params(rng, "out", c_in, cfg.embed_dim)

    def _conv(self, rng, name, c_in, c_out, k):
        self.normal(rng, f"{name}.w", (c_out, c_in, k, k), fan_in_std(c_in * k * k))
        self.zeros(f"{name}.b", (c_out,))

    def _apply(self, x: Tensor, name: str, stride: int = 1) -> Tensor:
        w = self.params[f"{name}.w"]
        return T.conv2d(x, w, self.params[f"{name}.b"], stride=stride, padding=w.shape[-1] // 2)

    def __call__(self, images: np.ndarray, train: bool = False, rng=None) -> Tensor:
        if images.shape[1] != self.channels:
            raise ShapeError(f"expected {self.channels} image channels, got {images.shape[1]}")
        x = T.gelu(self._apply(Tensor(images), "stem"))
        for s in range(3):
            for b in range(2):
                name = f"stage{s}.block{b}"
                stride = 2 if (s > 0 and b == 0) else 1
                h = T.gelu(self._apply(x, f"{name}.conv1", stride))
                h = self._apply(h, f"{name}.conv2")
                skip = self._apply(x, f"{name}.skip", stride) if f"{name}.skip.w" in self.params else x
                x = T.gelu(h + skip)
        pooled = x.mean(axis=(2, 3))
        return linear(pooled, self.params, "out")


def _check_series(series: np.ndarray, n_vars: int) -> None:
    if series.ndim != 3 or series.shape[2] != n_vars:
        raise ShapeError(f"expected series [B, L, {n_vars}], got {series.shape}")
    if np.isnan(series).any():
        raise MissingValuesError("series contains missing values; run knn_impute first")


class SeriesTransformer(Module):
    def __init__(self, cfg: EncoderConfig, n_vars: int, length: int,
                 rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.cfg, self.n_vars, self.length = cfg, n_vars, length
        self.linear_params(rng, "in", n_vars, cfg.embed_dim)
        for i in range(cfg.depth):
            block_params(self, rng, f"block{i}", cfg.embed_dim, cfg.mlp_ratio, std)
        self.ones("norm.g", (cfg.embed_dim,))
        self.zeros("norm.b", (cfg.embed_dim,))

    def __call__(self, series: np.ndarray, train: bool = False, rng=None,
                 use_positions: bool = True) -> Tensor:
        _check_series(series, self.n_vars)
        x = linear(Tensor(series), self.params, "in")
        if use_positions:
            x = x + sinusoidal_positions(series.shape[1], self.cfg.embed_dim)
        for i in range(self.cfg.depth):
            x = transformer_block(x, self.params, f"block{i}", self.cfg.heads, self.cfg.dropout, train, rng)
        return T.layer_norm(x.mean(axis=1), self.params["norm.g"], self.params["norm.b"])


class LSTMEncoder(Module):
    """Single-layer unidirectional LSTM; gate order (input, forget, cell, output)."""

    def __init__(self, cfg: EncoderConfig, n_vars: int, length: int,
                 rng: np.random.Generator, std: float = 0.02):
        super().__init__()
        self.cfg, self.n_vars, self.length = cfg, n_vars, length
        d = cfg.embed_dim
        self.normal(rng, "wx", (n_vars, 4 * d), fan_in_std(n_vars))
        self.normal(rng, "wh", (d, 4 * d), fan_in_std(d))
        self.zeros("b", (4 * d,))

    def cell(self, x_t: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        d = self.cfg.embed_dim
        gates = x_t @ self.params["wx"] + h @ self.params["wh"] + self.params["b"]
        i = T.sigmoid(gates[:, :d])
        f = T.sigmoid(gates[:, d:2 * d])
        g = T.tanh(gates[:, 2 * d:3 * d])
        o = T.sigmoid(gates[:, 3 * d:])
        c = f * c + i * g
        return o * T.tanh(c), c

    def __call__(self, series: np.ndarray, train: bool = False, rng=None) -> Tensor:
        _check_series(series, self.n_vars)
        B, L, _ = series.shape
        h = Tensor(np.zeros((B, self.cfg.embed_dim)))
        c = Tensor(np.zeros((B, self.cfg.embed_dim)))
        for t in range(L):
            h, c = self.cell(Tensor(series[:, t]), h, c)
        return h


def build_image_encoder(cfg: EncoderConfig, channels: int, image_size: int, rng, std=0.02):
    cls = ViTEncoder if cfg.image_kind == "vit" else CNNEncoder
    return cls(cfg, channels, image_size, rng, std)


def build_series_encoder(cfg: EncoderConfig, n_vars: int, length: int, rng, std=0.02):
    cls = SeriesTransformer if cfg.series_kind == "transformer" else LSTMEncoder
    return cls(cfg, n_vars, length, rng, std)
