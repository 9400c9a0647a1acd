"""Dual-stream quality model: frozen backbone, trainable adapter, regression head.

The main stream runs fragment tokens through the backbone blocks, with adapter
blocks interleaved at the configured insertion points. The guidance stream is
encoded once by the frozen backbone, projected to the latent width, and then
refined by each adapter block. The head regresses the main stream's cls token
to a scalar score.

Guidance modes select which preprocessed view (resized whole image vs spliced
fragments) feeds each stream, covering all four guidance/main combinations of
the ablation grid purely through configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fragments as frag
from . import image as img_io
from . import kernels
from . import vit
from . import weights as wio
from .glia import GliaConfig, LatentState, glia_block
from .glia import parameter_shapes as glia_parameter_shapes
from .tensor import Tensor, gelu, linear, no_grad
from .vit import ViTConfig

__all__ = [
    "GUIDANCE_MODES",
    "GliaNetConfig",
    "parameter_shapes",
    "init_model_params",
    "save_model",
    "load_model",
    "forward",
    "regression_head",
    "trainable_parameters",
    "count_parameters",
    "attention_map",
    "export_attention_map",
    "preprocess",
]

GUIDANCE_MODES = (
    "semantic_guides_detail",
    "detail_guides_semantic",
    "semantic_only",
    "detail_only",
)


@dataclass(frozen=True)
class GliaNetConfig:
    vit: ViTConfig = field(default_factory=ViTConfig.toy)
    d_latent: int = 16
    n_heads_cross: int = 4
    insertion_points: tuple = None  # default: one adapter after every block
    n_h: int = 8
    n_w: int = 8
    f_h: int = 8
    f_w: int = 8
    frag_mode: str = "deterministic"
    frag_seed: int = 0
    head_hidden: int = None  # default: d_model // 2
    guidance_mode: str = "semantic_guides_detail"
    ablation: str = "full"
    gelu_exact: bool = False

    def __post_init__(self):
        if self.insertion_points is None:
            object.__setattr__(self, "insertion_points", tuple(range(self.vit.n_layers)))
        else:
            object.__setattr__(self, "insertion_points", tuple(self.insertion_points))
        if self.head_hidden is None:
            object.__setattr__(self, "head_hidden", self.vit.d_model // 2)
        if self.n_h * self.f_h != self.vit.img_size or self.n_w * self.f_w != self.vit.img_size:
            raise ValueError(
                f"fragment detail image {self.n_h * self.f_h}x{self.n_w * self.f_w} "
                f"must equal backbone input {self.vit.img_size}x{self.vit.img_size}"
            )
        if self.guidance_mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.guidance_mode!r}; valid: {GUIDANCE_MODES}")
        for b in self.insertion_points:
            if not 0 <= b < self.vit.n_layers:
                raise ValueError(f"insertion point {b} outside 0..{self.vit.n_layers - 1}")

    @property
    def glia(self) -> GliaConfig:
        return GliaConfig(
            d_model=self.vit.d_model,
            d_latent=self.d_latent,
            n_heads_cross=self.n_heads_cross,
            insertion_points=self.insertion_points,
        )

    @classmethod
    def toy(cls) -> "GliaNetConfig":
        return cls()

    @classmethod
    def paper_scale(cls) -> "GliaNetConfig":
        return cls(
            vit=ViTConfig.base16(),
            d_latent=192,
            n_heads_cross=4,
            n_h=14,
            n_w=14,
            f_h=16,
            f_w=16,
        )


def parameter_shapes(cfg: GliaNetConfig) -> list:
    """(name, shape, trainable) triples for the assembled model."""
    shapes = [(n, s, False) for n, s in vit.parameter_shapes(cfg.vit, prefix="vit.")]
    d, dl = cfg.vit.d_model, cfg.d_latent
    shapes += [("sem_proj.w", (d, dl), True), ("sem_proj.b", (dl,), True)]
    last = max(cfg.insertion_points)
    for b in cfg.insertion_points:
        # the final block's refinement output would never be consumed, so its
        # branch (and parameters) are omitted rather than left untrainable
        shapes += [
            (n, s, True)
            for n, s in glia_parameter_shapes(cfg.glia, prefix=f"glia{b}.", refine=b != last)
        ]
    hh = cfg.head_hidden
    shapes += [
        ("head.w1", (d, hh), True),
        ("head.b1", (hh,), True),
        ("head.w2", (hh, 1), True),
        ("head.b2", (1,), True),
    ]
    return shapes


def init_model_params(cfg: GliaNetConfig, seed: int, dtype=np.float32) -> dict:
    """Seeded init; backbone tensors come out frozen, the rest trainable.

    The adapter's fused path replaces the full-width tokens with
    up(down(tokens) + ...), so a small random init of the down/up pair would
    shrink every token by orders of magnitude per insertion point and starve
    the head of signal. The pair therefore starts as a shared orthonormal
    basis and its transpose: the bottleneck begins as a norm-preserving
    subspace projector and training moves it from there.
    """
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((cfg.vit.d_model, cfg.d_latent)))
    params = {}
    for name, shape, trainable in parameter_shapes(cfg):
        if name.endswith("down.w") or name == "sem_proj.w":
            arr = basis.copy()
        elif name.endswith("up.w"):
            arr = basis.T.copy()
        else:
            arr = vit.init_array(name, shape, rng)
        params[name] = Tensor(arr.astype(dtype), requires_grad=trainable)
    return params


def trainable_parameters(params: dict):
    """Trainable subset plus a count report (trainable, total, ratio)."""
    trainable = {k: v for k, v in params.items() if v.requires_grad}
    n_train = sum(v.size for v in trainable.values())
    n_total = sum(v.size for v in params.values())
    report = {
        "trainable": int(n_train),
        "total": int(n_total),
        "ratio": n_train / n_total if n_total else 0.0,
    }
    return trainable, report


def count_parameters(cfg: GliaNetConfig) -> dict:
    """Shape-only parameter census; no weight allocation."""
    n_train = 0
    n_total = 0
    for _, shape, trainable in parameter_shapes(cfg):
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        n_total += n
        if trainable:
            n_train += n
    return {
        "trainable": n_train,
        "total": n_total,
        "ratio": n_train / n_total if n_total else 0.0,
    }


# -- forward pass --------------------------------------------------------------


def preprocess(img: np.ndarray, cfg: GliaNetConfig):
    """(resized whole image, spliced fragment image) for the two streams."""
    s = cfg.vit.img_size
    resized = img_io.resize_bilinear(img, s, s)
    grid = frag.plan_grid(
        img.shape[0], img.shape[1], cfg.n_h, cfg.n_w, cfg.f_h, cfg.f_w,
        mode=cfg.frag_mode, seed=cfg.frag_seed,
    )
    detail = frag.extract_fragments(img, grid)
    return resized, detail


def _stream_inputs(resized: np.ndarray, detail: np.ndarray, cfg: GliaNetConfig):
    """Pick (main view, guidance view) per the guidance mode."""
    mode = cfg.guidance_mode
    if mode == "semantic_guides_detail":
        return detail, resized
    if mode == "detail_guides_semantic":
        return resized, detail
    if mode == "semantic_only":
        return resized, resized
    return detail, detail  # detail_only


def regression_head(cls_token: Tensor, params: dict, cfg: GliaNetConfig) -> Tensor:
    """affine -> GELU -> affine -> scalar."""
    if cls_token.shape[-1] != cfg.vit.d_model:
        raise ValueError(f"cls width {cls_token.shape[-1]} != d_model {cfg.vit.d_model}")
    if len(cls_token.shape) == 1:
        cls_token = cls_token.reshape(1, cls_token.shape[0])
    h = gelu(linear(cls_token, params["head.w1"], params["head.b1"]), exact=cfg.gelu_exact)
    return linear(h, params["head.w2"], params["head.b2"]).reshape(())


def forward(
    img: np.ndarray,
    params: dict,
    cfg: GliaNetConfig,
    collect_attn: bool = False,
    guide_tokens: Tensor | None = None,
):
    """Score one image. Returns the scalar score Tensor (plus per-block
    attention weights of the main stream when ``collect_attn``).

    ``guide_tokens`` lets callers reuse the frozen guidance encoding when only
    trainable parameters changed between calls (finite-difference probing).
    """
    resized, detail = preprocess(img, cfg)
    main_view, guide_view = _stream_inputs(resized, detail, cfg)
    if guide_tokens is None:
        guide_tokens = encode_guidance(guide_view, params, cfg)
    guide_latent = linear(guide_tokens, params["sem_proj.w"], params["sem_proj.b"])

    x = vit.patch_embed(main_view, params, cfg.vit, prefix="vit.")
    attn_maps = []
    last = max(cfg.insertion_points)
    for b in range(cfg.vit.n_layers):
        if collect_attn:
            x, attn_w = vit.encoder_block(x, params, cfg.vit, prefix=f"vit.blk{b}.", return_attn=True)
            attn_maps.append(attn_w)
        else:
            x = vit.encoder_block(x, params, cfg.vit, prefix=f"vit.blk{b}.")
        if b in cfg.insertion_points:
            state = LatentState(main_full=x, guide_latent=guide_latent)
            state = glia_block(
                state, params, cfg.glia, ablation=cfg.ablation,
                prefix=f"glia{b}.", refine=b != last,
            )
            x = state.main_full
            guide_latent = state.guide_latent
    x = vit.layer_norm(x, params["vit.ln_f.g"], params["vit.ln_f.b"])
    score = regression_head(x[0], params, cfg)
    if collect_attn:
        return score, attn_maps
    return score


def encode_guidance(guide_view: np.ndarray, params: dict, cfg: GliaNetConfig) -> Tensor:
    """Frozen backbone encoding of the guidance view (cacheable: no trainables)."""
    return vit.encode_semantic(guide_view, params, cfg.vit, prefix="vit.")


# -- stage-restart evaluation (finite-difference probing) ----------------------


def stage_cache(img: np.ndarray, params: dict, cfg: GliaNetConfig) -> dict:
    """Numpy snapshots of the state entering each trainable stage.

    The frozen computation between trainable stages does not change while a
    trainable parameter is perturbed, so a finite-difference probe can restart
    from the stage owning that parameter instead of from the image.
    """
    resized, detail = preprocess(img, cfg)
    main_view, guide_view = _stream_inputs(resized, detail, cfg)
    ins = sorted(cfg.insertion_points)
    last = ins[-1]
    x_enc: dict = {}
    guide_in: dict = {}
    with no_grad():
        guide_tokens = encode_guidance(guide_view, params, cfg)
        guide = linear(guide_tokens, params["sem_proj.w"], params["sem_proj.b"])
        x = vit.patch_embed(main_view, params, cfg.vit, prefix="vit.")
        for b in range(cfg.vit.n_layers):
            x = vit.encoder_block(x, params, cfg.vit, prefix=f"vit.blk{b}.")
            if b in cfg.insertion_points:
                x_enc[b] = np.array(x.data, copy=True)
                guide_in[b] = np.array(guide.data, copy=True)
                state = glia_block(
                    LatentState(main_full=x, guide_latent=guide),
                    params, cfg.glia, ablation=cfg.ablation,
                    prefix=f"glia{b}.", refine=b != last,
                )
                x, guide = state.main_full, state.guide_latent
        xf = vit.layer_norm(x, params["vit.ln_f.g"], params["vit.ln_f.b"])
    return {
        "guide_tokens": np.array(guide_tokens.data, copy=True),
        "x_enc": x_enc,
        "guide_in": guide_in,
        "cls_in": np.array(xf.data[0], copy=True),
    }


def stage_of_param(name: str, cfg: GliaNetConfig):
    """Which restart stage covers a trainable parameter name."""
    if name.startswith("head."):
        return ("head",)
    if name.startswith("sem_proj."):
        return ("sem_proj",)
    if name.startswith("glia"):
        block = int(name[4:].split(".", 1)[0])
        return ("glia", block)
    raise ValueError(f"{name!r} is not a trainable-stage parameter")


def score_from_stage(cache: dict, params: dict, cfg: GliaNetConfig, stage) -> Tensor:
    """Recompute the score from the cached state entering ``stage`` onward."""
    if stage[0] == "head":
        return regression_head(Tensor(cache["cls_in"]), params, cfg)
    ins = sorted(cfg.insertion_points)
    last = ins[-1]
    if stage[0] == "sem_proj":
        start = ins[0]
        guide = linear(
            Tensor(cache["guide_tokens"]), params["sem_proj.w"], params["sem_proj.b"]
        )
    else:
        start = stage[1]
        guide = Tensor(cache["guide_in"][start])
    x = Tensor(cache["x_enc"][start])
    for b in range(start, cfg.vit.n_layers):
        if b != start:
            x = vit.encoder_block(x, params, cfg.vit, prefix=f"vit.blk{b}.")
        if b in cfg.insertion_points:
            state = glia_block(
                LatentState(main_full=x, guide_latent=guide),
                params, cfg.glia, ablation=cfg.ablation,
                prefix=f"glia{b}.", refine=b != last,
            )
            x, guide = state.main_full, state.guide_latent
    x = vit.layer_norm(x, params["vit.ln_f.g"], params["vit.ln_f.b"])
    return regression_head(x[0], params, cfg)


# -- attention map export ------------------------------------------------------


def attention_map(img: np.ndarray, params: dict, cfg: GliaNetConfig, block: int):
    """cls-to-patch attention of one main-stream block, as a token-grid array.

    Returns (raw map [side, side], cls row attention mass over non-cls keys).
    """
    if not 0 <= block < cfg.vit.n_layers:
        raise IndexError(f"block {block} outside 0..{cfg.vit.n_layers - 1}")
    _, maps = forward(img, params, cfg, collect_attn=True)
    w = maps[block]  # [heads, T, T]
    cls_row = w[:, 0, 1:].mean(axis=0)
    side = cfg.vit.img_size // cfg.vit.patch_size
    return cls_row.reshape(side, side), float(w[:, 0, 1:].mean(axis=0).sum())


def export_attention_map(img: np.ndarray, params: dict, cfg: GliaNetConfig, block: int, out_path: str) -> np.ndarray:
    """Upsample the block's cls attention to source size, normalize, save as P6."""
    raw, _ = attention_map(img, params, cfg, block)
    h, w = img.shape[:2]
    up = kernels.bilinear_resize(
        np.ascontiguousarray(raw[:, :, None].repeat(3, axis=2), dtype=np.float64), h, w
    )
    lo, hi = up.min(), up.max()
    normed = (up - lo) / (hi - lo) if hi > lo else np.zeros_like(up)
    img_io.save_image(normed, out_path)
    return normed


# -- serialization -------------------------------------------------------------


def config_to_text(cfg: GliaNetConfig) -> str:
    from . import kvconfig

    return kvconfig.render(kvconfig.model_config_to_dict(cfg))


def save_model(params: dict, cfg: GliaNetConfig, path: str) -> None:
    tensors = {"__config__": wio.pack_text(config_to_text(cfg))}
    tensors.update({k: v.data for k, v in params.items()})
    wio.save_weights(tensors, path)


def load_model(path: str, dtype=np.float32):
    """Read (params, config) back; shapes are validated against the config."""
    from . import kvconfig

    raw = wio.load_weights(path)
    if "__config__" not in raw:
        raise wio.WeightFileError(f"{path}: missing embedded config block")
    cfg = kvconfig.model_config_from_dict(kvconfig.parse(wio.unpack_text(raw.pop("__config__"))))
    params = {}
    for name, shape, trainable in parameter_shapes(cfg):
        if name not in raw:
            raise vit.WeightShapeError(f"{path}: missing tensor {name!r}")
        arr = raw[name]
        if tuple(arr.shape) != tuple(shape):
            raise vit.WeightShapeError(f"{path}: {name} has shape {arr.shape}, config wants {shape}")
        params[name] = Tensor(arr.astype(dtype), requires_grad=trainable)
    return params, cfg
