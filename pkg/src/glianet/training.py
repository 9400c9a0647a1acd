"""Optimization loop: content-level splits, AdamW, freezing checksums, train logs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .image import DatasetManifest, load_image
from .metrics import plcc, srcc
from .tensor import Tensor, concat, no_grad

__all__ = [
    "TrainConfig",
    "TrainRun",
    "TrainingDivergedError",
    "FrozenContractError",
    "MissingGradientError",
    "split_dataset",
    "median",
    "loss",
    "AdamWState",
    "optimizer_step",
    "frozen_checksums",
    "evaluate",
    "train",
    "repeated_eval",
]


class TrainingDivergedError(RuntimeError):
    pass


class FrozenContractError(RuntimeError):
    pass


class MissingGradientError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 3e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    split_fraction: float = 0.8
    repeats: int = 10
    loss: str = "mse"
    eval_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split fraction must be in (0, 1), got {self.split_fraction}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.loss not in ("mse", "smooth_l1"):
            raise ValueError(f"unknown loss kind {self.loss!r}")


def median(xs: list) -> float:
    """Median of a numeric list (mean of the middle pair for even counts)."""
    if not xs:
        raise ValueError("median of empty list")
    s = sorted(xs)
    mid = len(s) // 2
    return s[mid] if len(s) % 2 else 0.5 * (s[mid - 1] + s[mid])


def split_dataset(manifest: DatasetManifest, fraction: float, seed: int):
    """Disjoint, exhaustive train/test split at the content level.

    All variants of one source image (same filename stem before the ``__``
    separator) land on the same side, so synthetic distortions of a test
    image never leak into training.
    """
    if not manifest.entries:
        raise ValueError("manifest is empty")
    groups: dict = {}
    for e in manifest.entries:
        groups.setdefault(e.source_id, []).append(e)
    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(keys)
    n_train = int(len(keys) * fraction)
    if n_train == 0 or n_train == len(keys):
        raise ValueError(
            f"fraction {fraction} leaves an empty side for {len(keys)} source groups"
        )
    train_entries = [e for k in keys[:n_train] for e in groups[k]]
    test_entries = [e for k in keys[n_train:] for e in groups[k]]
    return train_entries, test_entries


def loss(pred: Tensor, target: np.ndarray, kind: str = "mse") -> Tensor:
    """Scalar training loss between predicted scores and MOS targets."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if pred.data.shape != target.shape:
        raise ValueError(f"length mismatch: pred {pred.data.shape} vs target {target.shape}")
    if kind == "mse":
        d = pred - Tensor(target)
        return (d * d).mean()
    if kind == "smooth_l1":
        d = pred.data - target
        absd = np.abs(d)
        out_data = np.where(absd < 1.0, 0.5 * d * d, absd - 0.5).mean()

        def backward(g):
            slope = np.where(absd < 1.0, d, np.sign(d)) / d.size
            return (g * slope,)

        return Tensor._from_op(np.asarray(out_data, dtype=pred.data.dtype), (pred,), backward)
    raise ValueError(f"unknown loss kind {kind!r}")


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(trainables: dict, state: AdamWState, cfg: TrainConfig) -> None:
    """One decoupled-weight-decay adaptive-moment update, in place on leaves."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in trainables.items():
        if p.grad is None:
            raise MissingGradientError(f"no gradient for trainable parameter {name!r}")
        g = p.grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new = p.data.astype(np.float64) - cfg.lr * update - cfg.lr * cfg.weight_decay * p.data
        p.data = new.astype(p.data.dtype)
        p.grad = None


def frozen_checksums(params: dict) -> dict:
    """SHA-256 of every frozen buffer, keyed by parameter name."""
    return {
        name: hashlib.sha256(np.ascontiguousarray(p.data).tobytes()).hexdigest()
        for name, p in params.items()
        if not p.requires_grad
    }


@dataclass
class TrainRun:
    epoch_logs: list
    split_seed: int
    checksums_pre: dict
    checksums_post: dict
    n_trainable: int
    best_epoch: int
    best_state: dict

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"epoch": i, **log}, sort_keys=True)
            for i, log in enumerate(self.epoch_logs)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def _load_images(entries: list) -> dict:
    return {e.path: load_image(e.path) for e in entries}


def evaluate(params: dict, cfg, entries: list, images: dict | None = None):
    """(srcc, plcc, predictions) of the model on a list of manifest entries."""
    if images is None:
        images = _load_images(entries)
    preds = []
    with no_grad():
        for e in entries:
            preds.append(model_mod.forward(images[e.path], params, cfg).item())
    targets = [e.mos for e in entries]
    return srcc(preds, targets), plcc(preds, targets), preds


def train(params: dict, cfg, train_entries: list, eval_entries: list, tc: TrainConfig) -> TrainRun:
    """Run the optimization loop; frozen backbone buffers must come out bit-identical."""
    trainables, counts = model_mod.trainable_parameters(params)
    pre = frozen_checksums(params)
    state = AdamWState()
    rng = np.random.default_rng(tc.seed)
    images = _load_images(train_entries)
    eval_images = {**images, **_load_images(eval_entries)}
    logs = []
    best = (-2.0, 0)
    best_state = {k: np.array(v.data, copy=True) for k, v in trainables.items()}
    last_srcc = float("nan")
    last_plcc = float("nan")
    for epoch in range(tc.epochs):
        order = np.arange(len(train_entries))
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), tc.batch_size):
            batch = [train_entries[i] for i in order[start : start + tc.batch_size]]
            scores = [
                model_mod.forward(images[e.path], params, cfg).reshape(1) for e in batch
            ]
            pred = concat(scores, axis=0)
            targets = np.array([e.mos for e in batch])
            batch_loss = loss(pred, targets, kind=tc.loss)
            value = batch_loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value} at epoch {epoch}, batch starting at index {start} "
                    f"(paths {[e.path for e in batch]})"
                )
            batch_loss.backward()
            optimizer_step(trainables, state, tc)
            epoch_losses.append(value)
        do_eval = ((epoch + 1) % tc.eval_every == 0) or epoch == tc.epochs - 1
        if do_eval and eval_entries:
            last_srcc, last_plcc, _ = evaluate(params, cfg, eval_entries, eval_images)
            if last_srcc > best[0]:
                best = (last_srcc, epoch)
                best_state = {k: np.array(v.data, copy=True) for k, v in trainables.items()}
        logs.append(
            {
                "train_loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                "eval_srcc": last_srcc,
                "eval_plcc": last_plcc,
            }
        )
    post = frozen_checksums(params)
    if post != pre:
        changed = sorted(k for k in pre if pre[k] != post.get(k))
        raise FrozenContractError(f"frozen parameters changed during training: {changed}")
    return TrainRun(
        epoch_logs=logs,
        split_seed=tc.seed,
        checksums_pre=pre,
        checksums_post=post,
        n_trainable=counts["trainable"],
        best_epoch=best[1],
        best_state=best_state,
    )


def repeated_eval(manifest: DatasetManifest, cfg, tc: TrainConfig, init_seed: int = 1) -> dict:
    """Train ``repeats`` models on reseeded splits; report per-repeat and median metrics."""
    per_repeat = []
    for r in range(tc.repeats):
        split_seed = tc.seed + r
        train_entries, test_entries = split_dataset(manifest, tc.split_fraction, split_seed)
        params = model_mod.init_model_params(cfg, seed=init_seed + r)
        run_tc = TrainConfig(
            epochs=tc.epochs,
            batch_size=tc.batch_size,
            lr=tc.lr,
            weight_decay=tc.weight_decay,
            beta1=tc.beta1,
            beta2=tc.beta2,
            eps=tc.eps,
            seed=split_seed,
            split_fraction=tc.split_fraction,
            repeats=1,
            loss=tc.loss,
            eval_every=tc.eval_every,
        )
        train(params, cfg, train_entries, test_entries, run_tc)
        s, p, _ = evaluate(params, cfg, test_entries)
        per_repeat.append({"repeat": r, "split_seed": split_seed, "srcc": s, "plcc": p})
    srccs = sorted(x["srcc"] for x in per_repeat)
    plccs = sorted(x["plcc"] for x in per_repeat)
    return {
        "repeats": per_repeat,
        "median_srcc": median(srccs),
        "median_plcc": median(plccs),
        "mean_srcc": float(np.mean(srccs)),
        "mean_plcc": float(np.mean(plccs)),
    }
