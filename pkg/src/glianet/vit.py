"""Vision Transformer encoder used frozen as the feature backbone.

Pre-norm blocks, learned cls token and positional table, final layer norm.
Desk-scale runs use seeded random weights as a stand-in for pretrained ones;
the weight-file loader is format-compatible with real tensors of the same
shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import weights as wio
from .glia import mhca
from .tensor import Tensor, concat, gelu, layer_norm, linear

__all__ = [
    "ViTConfig",
    "parameter_shapes",
    "init_params",
    "save_params",
    "load_params",
    "patch_embed",
    "encoder_block",
    "encode_semantic",
    "trunc_normal",
    "WeightShapeError",
]


class WeightShapeError(ValueError):
    """Loaded tensor shapes disagree with the configuration."""


@dataclass(frozen=True)
class ViTConfig:
    img_size: int = 64
    patch_size: int = 8
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.img_size % self.patch_size != 0:
            raise ValueError(f"img_size {self.img_size} not divisible by patch {self.patch_size}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")

    @property
    def n_patches(self) -> int:
        side = self.img_size // self.patch_size
        return side * side

    @property
    def d_mlp(self) -> int:
        return int(self.d_model * self.mlp_ratio)

    @classmethod
    def toy(cls) -> "ViTConfig":
        return cls(img_size=64, patch_size=8, d_model=64, n_layers=4, n_heads=4)

    @classmethod
    def base16(cls) -> "ViTConfig":
        return cls(img_size=224, patch_size=16, d_model=768, n_layers=12, n_heads=12)


def parameter_shapes(cfg: ViTConfig, prefix: str = "") -> list:
    """(name, shape) pairs for the full backbone, in serialization order."""
    d = cfg.d_model
    shapes = [
        (prefix + "patch.w", (cfg.patch_size * cfg.patch_size * 3, d)),
        (prefix + "patch.b", (d,)),
        (prefix + "cls", (1, d)),
        (prefix + "pos", (1 + cfg.n_patches, d)),
    ]
    for i in range(cfg.n_layers):
        b = f"{prefix}blk{i}."
        shapes += [(b + "ln1.g", (d,)), (b + "ln1.b", (d,))]
        for proj in ("wq", "wk", "wv", "wo"):
            shapes.append((b + "attn." + proj, (d, d)))
        for bias in ("bq", "bk", "bv", "bo"):
            shapes.append((b + "attn." + bias, (d,)))
        shapes += [
            (b + "ln2.g", (d,)),
            (b + "ln2.b", (d,)),
            (b + "mlp.w1", (d, cfg.d_mlp)),
            (b + "mlp.b1", (cfg.d_mlp,)),
            (b + "mlp.w2", (cfg.d_mlp, d)),
            (b + "mlp.b2", (d,)),
        ]
    shapes += [(prefix + "ln_f.g", (d,)), (prefix + "ln_f.b", (d,))]
    return shapes


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal draw with resampling outside two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_array(name: str, shape, rng: np.random.Generator) -> np.ndarray:
    """Init rule shared by backbone, adapter, and head parameters."""
    leaf = name.rsplit(".", 1)[-1]
    if leaf in ("g",):  # layer-norm gains
        return np.ones(shape)
    if leaf.startswith("b") or leaf == "b":  # biases and ln shifts
        return np.zeros(shape)
    if leaf in ("lam_d", "lam_s"):
        # small nonzero gate so cross-attention gradients flow from step one
        return np.asarray(0.1)
    if len(shape) == 2:
        # weight matrices scale with fan-in: these weights are used frozen as
        # a stand-in feature extractor, and a fixed small std would shrink
        # activations at every layer until the features carry no signal
        return trunc_normal(rng, shape, std=1.0 / np.sqrt(shape[0]))
    return trunc_normal(rng, shape)


def init_params(cfg: ViTConfig, seed: int, dtype=np.float32, frozen: bool = True) -> dict:
    """Seeded stand-in for pretrained weights; frozen by default."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg):
        params[name] = Tensor(init_array(name, shape, rng).astype(dtype), requires_grad=not frozen)
    return params


def save_params(params: dict, path: str) -> None:
    wio.save_weights({k: v.data for k, v in params.items()}, path)


def load_params(path: str, cfg: ViTConfig, dtype=np.float32, frozen: bool = True) -> dict:
    raw = wio.load_weights(path)
    params = {}
    for name, shape in parameter_shapes(cfg):
        if name not in raw:
            raise WeightShapeError(f"{path}: missing tensor {name!r}")
        arr = raw[name]
        if tuple(arr.shape) != tuple(shape):
            raise WeightShapeError(f"{path}: {name} has shape {arr.shape}, config wants {shape}")
        params[name] = Tensor(arr.astype(dtype), requires_grad=not frozen)
    return params


def image_to_patches(img: np.ndarray, patch: int) -> np.ndarray:
    """Row-major (N, patch*patch*3) matrix of non-overlapping patches."""
    h, w, c = img.shape
    gh, gw = h // patch, w // patch
    x = img[: gh * patch, : gw * patch, :]
    x = x.reshape(gh, patch, gw, patch, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(gh * gw, patch * patch * c)


def patch_embed(img: np.ndarray, params: dict, cfg: ViTConfig, prefix: str = "") -> Tensor:
    """Project patches, prepend the cls token, add positional embeddings."""
    h, w = img.shape[:2]
    if (h, w) != (cfg.img_size, cfg.img_size):
        raise ValueError(f"expected {cfg.img_size}x{cfg.img_size} input, got {h}x{w}")
    dtype = params[prefix + "patch.w"].dtype
    patches = Tensor(image_to_patches(img, cfg.patch_size).astype(dtype))
    tokens = linear(patches, params[prefix + "patch.w"], params[prefix + "patch.b"])
    tokens = concat([params[prefix + "cls"], tokens], axis=0)
    return tokens + params[prefix + "pos"]


def encoder_block(x: Tensor, params: dict, cfg: ViTConfig, prefix: str, return_attn: bool = False):
    """Pre-norm transformer block: x + SelfAttn(LN(x)), then + MLP(LN(.))."""
    if x.shape[-1] != cfg.d_model:
        raise ValueError(f"token width {x.shape[-1]} != d_model {cfg.d_model}")
    normed = layer_norm(x, params[prefix + "ln1.g"], params[prefix + "ln1.b"])
    if return_attn:
        attn_out, attn_w = mhca(
            normed, normed, params, cfg.n_heads, prefix=prefix + "attn.", return_weights=True
        )
    else:
        attn_out = mhca(normed, normed, params, cfg.n_heads, prefix=prefix + "attn.")
        attn_w = None
    x = x + attn_out
    normed2 = layer_norm(x, params[prefix + "ln2.g"], params[prefix + "ln2.b"])
    h = gelu(linear(normed2, params[prefix + "mlp.w1"], params[prefix + "mlp.b1"]))
    x = x + linear(h, params[prefix + "mlp.w2"], params[prefix + "mlp.b2"])
    if return_attn:
        return x, attn_w
    return x


def encode_semantic(img: np.ndarray, params: dict, cfg: ViTConfig, prefix: str = "") -> Tensor:
    """Full frozen forward: patch embed, all blocks, final layer norm."""
    x = patch_embed(img, params, cfg, prefix=prefix)
    for i in range(cfg.n_layers):
        x = encoder_block(x, params, cfg, prefix=f"{prefix}blk{i}.")
    return layer_norm(x, params[prefix + "ln_f.g"], params[prefix + "ln_f.b"])
