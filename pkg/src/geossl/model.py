"""The two-branch network: backbones, shared projection head, regression head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .encoders import build_image_encoder, build_series_encoder
from .nn import Module, linear
from .tensor import Tensor


class MLP(Module):
    """Two linear layers with a ReLU in between."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator, std: float | None = None):
        super().__init__()
        self.linear_params(rng, "fc1", n_in, n_hidden, std)
        self.linear_params(rng, "fc2", n_hidden, n_out, std)

    def __call__(self, x: Tensor) -> Tensor:
        return linear(T.relu(linear(x, self.params, "fc1")), self.params, "fc2")


class ProjectionHead(MLP):
    """d -> d -> d_proj. One instance serves both modalities."""


class RegressionHead(MLP):
    """[I || T] -> hidden -> 1, softplus output so predictions are >= 0."""

    def __call__(self, x: Tensor) -> Tensor:
        return T.softplus(super().__call__(x)).reshape(-1)


@dataclass
class Batch:
    images: np.ndarray          # [B, C, H, W], active channels only
    series: np.ndarray | None   # [B, L, V], None when climate toggles are all off
    labels: np.ndarray | None = None
    location_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return self.images.shape[0]


class SoilNet:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        enc, std = cfg.encoder, cfg.init_std
        d = enc.embed_dim
        self.image_encoder = build_image_encoder(enc, cfg.toggles.n_channels, cfg.image_size, rng, std)
        self.series_encoder = None
        if cfg.toggles.n_variables:
            self.series_encoder = build_series_encoder(enc, cfg.toggles.n_variables, cfg.series_length, rng, std)
        self.projection = ProjectionHead(d, d, cfg.projection_dim, rng)
        n_in = 2 * d if self.series_encoder is not None else d
        self.head = RegressionHead(n_in, d, 1, rng)

    @property
    def modules(self) -> dict[str, Module]:
        out = {"image": self.image_encoder}
        if self.series_encoder is not None:
            out["series"] = self.series_encoder
        out["projection"] = self.projection
        out["head"] = self.head
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"{m}.{k}": v for m, mod in self.modules.items() for k, v in mod.params.items()}

    def encoder_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items() if k.startswith(("image.", "series."))}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if strict and (missing or set(state) - set(params)):
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(set(state) - set(params))}")
        for k, v in state.items():
            if k in params:
                if params[k].shape != v.shape:
                    raise ValueError(f"{k}: shape {v.shape} does not match {params[k].shape}")
                params[k].data = np.array(v, dtype=np.float64)

    def n_params(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def encode(self, batch: Batch, train: bool = False, rng=None) -> tuple[Tensor, Tensor | None]:
        image_repr = self.image_encoder(batch.images, train, rng)
        series_repr = None
        if self.series_encoder is not None:
            if batch.series is None:
                raise ValueError("model expects climate series but the batch has none")
            series_repr = self.series_encoder(batch.series, train, rng)
        return image_repr, series_repr

    def predict_tensor(self, batch: Batch, train: bool = False, rng=None) -> Tensor:
        image_repr, series_repr = self.encode(batch, train, rng)
        joined = image_repr if series_repr is None else T.concat([image_repr, series_repr], axis=1)
        return self.head(joined)

    def predict(self, batch: Batch) -> np.ndarray:
        with T.no_grad():
            return self.predict_tensor(batch).data.copy()
