"""Run configuration records: model shape, feature toggles, training plans."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

BAND_NAMES = ("B1", "B2", "B3", "B4", "B5", "B6", "B7")
INDEX_NAMES = ("clay_minerals", "ferrous_minerals", "carbonate", "rock_outcrop", "ndvi")
TOPO_NAMES = ("elevation", "slope")
CHANNEL_NAMES = BAND_NAMES + INDEX_NAMES + TOPO_NAMES

PRIMARY_CLIMATE = ("tmmn", "tmmx", "vpd", "pr", "srad")
SECONDARY_CLIMATE = ("aet", "pdsi", "def", "pet", "vap", "soil")
CLIMATE_NAMES = PRIMARY_CLIMATE + SECONDARY_CLIMATE

# toggle bit -> (feature group, member names); order matches the 4-character toggle string
FEATURE_GROUPS = (
    ("L8+RS-ind", BAND_NAMES + INDEX_NAMES),
    ("Topo", TOPO_NAMES),
    ("PrimClim", PRIMARY_CLIMATE),
    ("SecClim", SECONDARY_CLIMATE),
)

CONFIG_KINDS = {
    "vit-trans": ("vit", "transformer"),
    "vit-lstm": ("vit", "lstm"),
    "cnn-trans": ("cnn", "transformer"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Toggles:
    l8_indices: bool = True
    topo: bool = True
    prim_clim: bool = True
    sec_clim: bool = True

    @classmethod
    def parse(cls, bits: str) -> "Toggles":
        if len(bits) != 4 or set(bits) - {"0", "1"}:
            raise ConfigError(f"toggles must be 4 bits like '1111', got {bits!r}")
        t = cls(*(b == "1" for b in bits))
        if not (t.l8_indices or t.topo):
            raise ConfigError("the image branch needs at least one image feature group")
        return t

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in (self.l8_indices, self.topo, self.prim_clim, self.sec_clim))

    def channel_indices(self) -> list[int]:
        idx = []
        if self.l8_indices:
            idx += list(range(12))
        if self.topo:
            idx += [12, 13]
        return idx

    def variable_indices(self) -> list[int]:
        idx = []
        if self.prim_clim:
            idx += list(range(5))
        if self.sec_clim:
            idx += list(range(5, 11))
        return idx

    @property
    def n_channels(self) -> int:
        return len(self.channel_indices())

    @property
    def n_variables(self) -> int:
        return len(self.variable_indices())


@dataclass(frozen=True)
class EncoderConfig:
    image_kind: str = "vit"
    series_kind: str = "transformer"
    embed_dim: int = 32
    depth: int = 2
    heads: int = 4
    patch_size: int = 8
    mlp_ratio: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        if self.image_kind not in ("vit", "cnn"):
            raise ConfigError(f"image encoder must be vit or cnn, got {self.image_kind!r}")
        if self.series_kind not in ("transformer", "lstm"):
            raise ConfigError(f"series encoder must be transformer or lstm, got {self.series_kind!r}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")

    @property
    def name(self) -> str:
        return f"{self.image_kind}-{'trans' if self.series_kind == 'transformer' else 'lstm'}"


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    toggles: Toggles = field(default_factory=Toggles)
    image_size: int = 16
    series_length: int = 72
    temperature: float = 0.5
    proj_dim: int | None = None
    init_std: float = 0.02

    def __post_init__(self):
        if self.image_size % self.encoder.patch_size and self.encoder.image_kind == "vit":
            raise ConfigError(f"image size {self.image_size} not divisible by patch {self.encoder.patch_size}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")

    @property
    def projection_dim(self) -> int:
        return self.proj_dim if self.proj_dim is not None else max(self.encoder.embed_dim // 2, 8)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["toggles"] = str(self.toggles)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        d["toggles"] = Toggles.parse(d["toggles"])
        return cls(**d)


def preset(name: str = "desk", config: str = "vit-trans", toggles: str = "1111", **overrides) -> ModelConfig:
    """Named size presets. ``desk`` is CPU-trainable; ``paper`` uses 64x64 patches."""
    if config not in CONFIG_KINDS:
        raise ConfigError(f"unknown config {config!r}; choose from {sorted(CONFIG_KINDS)}")
    image_kind, series_kind = CONFIG_KINDS[config]
    if name == "desk":
        enc = EncoderConfig(image_kind, series_kind, embed_dim=32, depth=2, heads=4, patch_size=8, mlp_ratio=2)
        base = ModelConfig(enc, Toggles.parse(toggles), image_size=16)
    elif name == "paper":
        enc = EncoderConfig(image_kind, series_kind, embed_dim=256, depth=6, heads=8, patch_size=8,
                            mlp_ratio=2, dropout=0.1)
        base = ModelConfig(enc, Toggles.parse(toggles), image_size=64)
    else:
        raise ConfigError(f"unknown preset {name!r}")
    enc_over = {k: v for k, v in overrides.items() if k in {f.name for f in fields(EncoderConfig)}}
    model_over = {k: v for k, v in overrides.items() if k not in enc_over}
    if enc_over:
        base = replace(base, encoder=replace(base.encoder, **enc_over))
    return replace(base, **model_over)


@dataclass(frozen=True)
class TrainPlan:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-4
    lr_min: float = 1e-6
    seed: int = 0
    folds: int = 5
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    freeze_encoders: bool = False
    label_cap: float | None = None

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.split}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


@dataclass(frozen=True)
class PretrainPlan:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-4
    lr_min: float = 1e-6
    seed: int = 0
