"""Global-local interaction adapter: cross-attention fusion in a compact latent space.

Two trainable modules sit between frozen backbone blocks. The fusion module
projects the main-stream tokens down to the latent width, injects guidance by
cross-attention gated with a learnable scalar, and projects back up for the
next backbone block:

    fused = up(F_m + lam_d * MHCA(F_m, F_g))

The refinement module updates the guidance latent in place, never leaving the
latent width:

    F_g' = F_g + lam_s * MHCA(F_g, F_m)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, ShapeError, linear, softmax

__all__ = ["GliaConfig", "mhca", "lgf", "glr", "glia_block", "LatentState", "ABLATION_MODES"]

ABLATION_MODES = ("full", "lgf_only", "glr_only")


@dataclass(frozen=True)
class GliaConfig:
    d_model: int
    d_latent: int
    n_heads_cross: int
    insertion_points: tuple

    def __post_init__(self):
        if self.d_latent >= self.d_model:
            raise ValueError(
                f"latent width {self.d_latent} must be smaller than model width {self.d_model}"
            )
        if self.d_latent % self.n_heads_cross != 0:
            raise ValueError(
                f"latent width {self.d_latent} not divisible by {self.n_heads_cross} heads"
            )


@dataclass
class LatentState:
    """Token state threaded through one adapter block."""

    main_full: Tensor  # [T_m, d_model]
    guide_latent: Tensor  # [T_g, d_latent]


def mhca(q: Tensor, kv: Tensor, params: dict, n_heads: int, prefix: str = "", return_weights: bool = False):
    """Multi-head cross-attention: queries from ``q``, keys/values from ``kv``.

    ``params`` supplies wq/bq, wk/bk, wv/bv, wo/bo under ``prefix``. Returns
    the projected context; with ``return_weights`` also the raw attention
    weights [n_heads, T_q, T_kv] as a numpy array.
    """
    t_q, d = q.shape
    t_kv, d_kv = kv.shape
    if d != d_kv:
        raise ShapeError(f"query width {d} != key/value width {d_kv}")
    if d % n_heads != 0:
        raise ShapeError(f"width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    qp = linear(q, params[prefix + "wq"], params[prefix + "bq"])
    kp = linear(kv, params[prefix + "wk"], params[prefix + "bk"])
    vp = linear(kv, params[prefix + "wv"], params[prefix + "bv"])
    qh = qp.reshape(t_q, n_heads, dh).transpose(1, 0, 2)
    kh = kp.reshape(t_kv, n_heads, dh).transpose(1, 2, 0)
    vh = vp.reshape(t_kv, n_heads, dh).transpose(1, 0, 2)
    scores = qh.matmul(kh) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = attn.matmul(vh).transpose(1, 0, 2).reshape(t_q, d)
    out = linear(ctx, params[prefix + "wo"], params[prefix + "bo"])
    if return_weights:
        return out, np.array(attn.data, copy=True)
    return out


def lgf(main_full: Tensor, guide_latent: Tensor, params: dict, cfg: GliaConfig, prefix: str = "") -> Tensor:
    """Local-global fusion: down-project, gated cross-attention, up-project."""
    m_lat = linear(main_full, params[prefix + "down.w"], params[prefix + "down.b"])
    fused = m_lat + params[prefix + "lam_d"] * mhca(
        m_lat, guide_latent, params, cfg.n_heads_cross, prefix=prefix + "lgf."
    )
    return linear(fused, params[prefix + "up.w"], params[prefix + "up.b"])


def glr(guide_latent: Tensor, main_latent: Tensor, params: dict, cfg: GliaConfig, prefix: str = "") -> Tensor:
    """Guidance refinement: residual cross-attention, confined to the latent width."""
    return guide_latent + params[prefix + "lam_s"] * mhca(
        guide_latent, main_latent, params, cfg.n_heads_cross, prefix=prefix + "glr."
    )


def glia_block(
    state: LatentState,
    params: dict,
    cfg: GliaConfig,
    ablation: str = "full",
    prefix: str = "",
    refine: bool = True,
) -> LatentState:
    """One adapter step: fuse guidance into the main stream, refine the guidance.

    ``lgf_only`` leaves the guidance latent untouched; ``glr_only`` routes the
    main stream through down/up without the cross-attention injection. The
    refinement consumes the pre-fusion main latent. ``refine=False`` drops the
    refinement branch entirely (used at the final insertion point, where the
    updated guidance would never be consumed).
    """
    if ablation not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {ablation!r}; valid: {ABLATION_MODES}")
    main_latent = linear(state.main_full, params[prefix + "down.w"], params[prefix + "down.b"])
    if ablation == "glr_only":
        fused = main_latent
    else:
        fused = main_latent + params[prefix + "lam_d"] * mhca(
            main_latent, state.guide_latent, params, cfg.n_heads_cross, prefix=prefix + "lgf."
        )
    next_main = linear(fused, params[prefix + "up.w"], params[prefix + "up.b"])
    if ablation == "lgf_only" or not refine:
        next_guide = state.guide_latent
    else:
        next_guide = state.guide_latent + params[prefix + "lam_s"] * mhca(
            state.guide_latent, main_latent, params, cfg.n_heads_cross, prefix=prefix + "glr."
        )
    return LatentState(main_full=next_main, guide_latent=next_guide)


def parameter_shapes(cfg: GliaConfig, prefix: str = "", refine: bool = True) -> list:
    """(name, shape) pairs for one adapter block's parameters."""
    d, dl = cfg.d_model, cfg.d_latent
    shapes = [
        (prefix + "down.w", (d, dl)),
        (prefix + "down.b", (dl,)),
        (prefix + "up.w", (dl, d)),
        (prefix + "up.b", (d,)),
        (prefix + "lam_d", ()),
    ]
    if refine:
        shapes.append((prefix + "lam_s", ()))
    modules = ("lgf.", "glr.") if refine else ("lgf.",)
    for mod in modules:
        for proj in ("wq", "wk", "wv", "wo"):
            shapes.append((prefix + mod + proj, (dl, dl)))
        for b in ("bq", "bk", "bv", "bo"):
            shapes.append((prefix + mod + b, (dl,)))
    return shapes
