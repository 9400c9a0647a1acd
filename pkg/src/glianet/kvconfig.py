"""Flat key=value config text: trivially parseable, diff-friendly, round-trip stable."""

from __future__ import annotations

from .model import GliaNetConfig
from .vit import ViTConfig

__all__ = [
    "ConfigError",
    "parse",
    "render",
    "model_config_to_dict",
    "model_config_from_dict",
    "train_config_to_dict",
    "train_config_from_dict",
    "load_config_file",
]


class ConfigError(ValueError):
    pass


def parse(text: str) -> dict:
    """key=value per line; blank lines and '#' comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def render(d: dict) -> str:
    return "".join(f"{k}={d[k]}\n" for k in sorted(d))


_MODEL_KEYS = {
    "vit.img_size": int,
    "vit.patch_size": int,
    "vit.d_model": int,
    "vit.n_layers": int,
    "vit.n_heads": int,
    "vit.mlp_ratio": float,
    "d_latent": int,
    "n_heads_cross": int,
    "insertion_points": str,
    "n_h": int,
    "n_w": int,
    "f_h": int,
    "f_w": int,
    "frag_mode": str,
    "frag_seed": int,
    "head_hidden": int,
    "guidance_mode": str,
    "ablation": str,
    "gelu_exact": bool,
}

_TRAIN_KEYS = {
    "train.epochs": int,
    "train.batch_size": int,
    "train.lr": float,
    "train.weight_decay": float,
    "train.beta1": float,
    "train.beta2": float,
    "train.eps": float,
    "train.seed": int,
    "train.split_fraction": float,
    "train.repeats": int,
    "train.loss": str,
    "train.eval_every": int,
}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected boolean, got {s!r}")


def model_config_to_dict(cfg: GliaNetConfig) -> dict:
    return {
        "vit.img_size": str(cfg.vit.img_size),
        "vit.patch_size": str(cfg.vit.patch_size),
        "vit.d_model": str(cfg.vit.d_model),
        "vit.n_layers": str(cfg.vit.n_layers),
        "vit.n_heads": str(cfg.vit.n_heads),
        "vit.mlp_ratio": _format(float(cfg.vit.mlp_ratio)),
        "d_latent": str(cfg.d_latent),
        "n_heads_cross": str(cfg.n_heads_cross),
        "insertion_points": _format(cfg.insertion_points),
        "n_h": str(cfg.n_h),
        "n_w": str(cfg.n_w),
        "f_h": str(cfg.f_h),
        "f_w": str(cfg.f_w),
        "frag_mode": cfg.frag_mode,
        "frag_seed": str(cfg.frag_seed),
        "head_hidden": str(cfg.head_hidden),
        "guidance_mode": cfg.guidance_mode,
        "ablation": cfg.ablation,
        "gelu_exact": _format(cfg.gelu_exact),
    }


def model_config_from_dict(d: dict, defaults: GliaNetConfig | None = None) -> GliaNetConfig:
    base = defaults if defaults is not None else GliaNetConfig.toy()
    vals = model_config_to_dict(base)
    for k in d:
        if k not in _MODEL_KEYS:
            raise ConfigError(f"unknown model config key {k!r}")
    vals.update(d)
    ins = tuple(int(x) for x in vals["insertion_points"].split(",") if x != "")
    vit_cfg = ViTConfig(
        img_size=int(vals["vit.img_size"]),
        patch_size=int(vals["vit.patch_size"]),
        d_model=int(vals["vit.d_model"]),
        n_layers=int(vals["vit.n_layers"]),
        n_heads=int(vals["vit.n_heads"]),
        mlp_ratio=float(vals["vit.mlp_ratio"]),
    )
    try:
        return GliaNetConfig(
            vit=vit_cfg,
            d_latent=int(vals["d_latent"]),
            n_heads_cross=int(vals["n_heads_cross"]),
            insertion_points=ins,
            n_h=int(vals["n_h"]),
            n_w=int(vals["n_w"]),
            f_h=int(vals["f_h"]),
            f_w=int(vals["f_w"]),
            frag_mode=vals["frag_mode"],
            frag_seed=int(vals["frag_seed"]),
            head_hidden=int(vals["head_hidden"]),
            guidance_mode=vals["guidance_mode"],
            ablation=vals["ablation"],
            gelu_exact=_parse_bool(vals["gelu_exact"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config_to_dict(tc) -> dict:
    return {
        "train.epochs": str(tc.epochs),
        "train.batch_size": str(tc.batch_size),
        "train.lr": _format(tc.lr),
        "train.weight_decay": _format(tc.weight_decay),
        "train.beta1": _format(tc.beta1),
        "train.beta2": _format(tc.beta2),
        "train.eps": _format(tc.eps),
        "train.seed": str(tc.seed),
        "train.split_fraction": _format(tc.split_fraction),
        "train.repeats": str(tc.repeats),
        "train.loss": tc.loss,
        "train.eval_every": str(tc.eval_every),
    }


def train_config_from_dict(d: dict, defaults=None):
    from .training import TrainConfig

    base = defaults if defaults is not None else TrainConfig()
    vals = train_config_to_dict(base)
    for k in d:
        if k not in _TRAIN_KEYS:
            raise ConfigError(f"unknown train config key {k!r}")
    vals.update(d)
    try:
        return TrainConfig(
            epochs=int(vals["train.epochs"]),
            batch_size=int(vals["train.batch_size"]),
            lr=float(vals["train.lr"]),
            weight_decay=float(vals["train.weight_decay"]),
            beta1=float(vals["train.beta1"]),
            beta2=float(vals["train.beta2"]),
            eps=float(vals["train.eps"]),
            seed=int(vals["train.seed"]),
            split_fraction=float(vals["train.split_fraction"]),
            repeats=int(vals["train.repeats"]),
            loss=vals["train.loss"],
            eval_every=int(vals["train.eval_every"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config_file(path: str):
    """Split a flat config file into (GliaNetConfig, TrainConfig); unknown keys rejected."""
    with open(path, "r", encoding="utf-8") as f:
        flat = parse(f.read())
    model_part = {k: v for k, v in flat.items() if k in _MODEL_KEYS}
    train_part = {k: v for k, v in flat.items() if k in _TRAIN_KEYS}
    unknown = set(flat) - set(model_part) - set(train_part)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return model_config_from_dict(model_part), train_config_from_dict(train_part)
