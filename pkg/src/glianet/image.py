"""Raster I/O, resizing, and the synthetic-distortion dataset generator.

Images are plain numpy arrays of shape (H, W, 3), float64 values in [0, 1].
Binary PPM (P6) is the mandatory interchange format; PNG load/save is
available when Pillow is installed.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = [
    "PpmError",
    "MalformedHeaderError",
    "UnsupportedFormatError",
    "TruncatedPayloadError",
    "load_image",
    "save_image",
    "resize_bilinear",
    "synth_distort",
    "DISTORTION_KINDS",
    "MAX_LEVEL",
    "ManifestEntry",
    "DatasetManifest",
    "build_synth_manifest",
    "laplacian_energy",
]


class PpmError(ValueError):
    """Base class for raster decoding failures."""


class MalformedHeaderError(PpmError):
    pass


class UnsupportedFormatError(PpmError):
    pass


class TruncatedPayloadError(PpmError):
    pass


def _read_ppm_token(buf: io.BufferedReader) -> bytes:
    """Next whitespace-delimited header token, skipping '#' comments."""
    tok = b""
    while True:
        ch = buf.read(1)
        if not ch:
            raise MalformedHeaderError("unexpected end of file in PPM header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = buf.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def load_image(path: str) -> np.ndarray:
    """Load a raster as float64 (H, W, 3) in [0, 1] (byte / 255)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    if path.lower().endswith(".png"):
        return _load_png(path)
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != b"P6":
            raise UnsupportedFormatError(f"{path}: expected P6 magic, got {magic!r}")
        try:
            w = int(_read_ppm_token(f))
            h = int(_read_ppm_token(f))
            maxval = int(_read_ppm_token(f))
        except ValueError as exc:
            raise MalformedHeaderError(f"{path}: non-numeric PPM header field") from exc
        if w < 1 or h < 1:
            raise MalformedHeaderError(f"{path}: bad dimensions {w}x{h}")
        if maxval != 255:
            raise UnsupportedFormatError(f"{path}: only maxval 255 supported, got {maxval}")
        payload = f.read(w * h * 3)
        if len(payload) < w * h * 3:
            raise TruncatedPayloadError(
                f"{path}: payload has {len(payload)} bytes, expected {w * h * 3}"
            )
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return raw.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path: str) -> None:
    """Write a [0, 1] float image as binary PPM (or PNG by extension)."""
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {np.asarray(img).shape}")
    if path.lower().endswith(".png"):
        _save_png(arr, path)
        return
    h, w, _ = arr.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def _load_png(path: str) -> np.ndarray:
    try:
        from PIL import Image as PilImage
    except ImportError as exc:
        raise UnsupportedFormatError("PNG support requires Pillow (pip install glianet[png])") from exc
    with PilImage.open(path) as im:
        raw = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return raw.astype(np.float64) / 255.0


def _save_png(arr: np.ndarray, path: str) -> None:
    try:
        from PIL import Image as PilImage
    except ImportError as exc:
        raise UnsupportedFormatError("PNG support requires Pillow (pip install glianet[png])") from exc
    PilImage.fromarray(arr, mode="RGB").save(path)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel sample centers."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target dimensions must be >= 1, got {out_h}x{out_w}")
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.shape[:2] == (out_h, out_w):
        return img.copy()
    return kernels.bilinear_resize(img, out_h, out_w)


# -- synthetic distortions -----------------------------------------------------

DISTORTION_KINDS = ("blur", "noise", "blocking", "contrast")
MAX_LEVEL = 5


def _gauss_kernel(sigma: float) -> np.ndarray:
    r = max(1, int(np.ceil(3.0 * sigma)))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def synth_distort(img: np.ndarray, kind: str, level: int, seed: int = 0) -> np.ndarray:
    """Apply one distortion at severity ``level`` (1..5), deterministic per seed.

    The controlling parameter grows strictly with level: blur sigma, noise
    sigma, block size, contrast compression factor.
    """
    if kind not in DISTORTION_KINDS:
        raise ValueError(f"unknown distortion kind {kind!r}; valid: {DISTORTION_KINDS}")
    if not 1 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in 1..{MAX_LEVEL}, got {level}")
    img = np.ascontiguousarray(img, dtype=np.float64)
    if kind == "blur":
        out = kernels.blur_separable(img, _gauss_kernel(0.6 * level))
    elif kind == "noise":
        rng = np.random.default_rng(seed)
        out = img + rng.normal(0.0, 0.025 * level, size=img.shape)
    elif kind == "blocking":
        out = kernels.block_mean(img, 1 + level)
    else:  # contrast
        out = 0.5 + (img - 0.5) * (1.0 - 0.16 * level)
    return np.clip(out, 0.0, 1.0)


def laplacian_energy(img: np.ndarray) -> float:
    """Sum of squared 4-neighbor Laplacian responses (high-frequency proxy)."""
    g = np.asarray(img, dtype=np.float64).mean(axis=2)
    lap = (
        -4.0 * g[1:-1, 1:-1]
        + g[:-2, 1:-1]
        + g[2:, 1:-1]
        + g[1:-1, :-2]
        + g[1:-1, 2:]
    )
    return float((lap * lap).sum())


# -- dataset manifest ----------------------------------------------------------


@dataclass
class ManifestEntry:
    path: str
    mos: float
    split: str = "all"

    @property
    def source_id(self) -> str:
        """Content group key: filename stem up to the '__' variant separator."""
        stem = os.path.splitext(os.path.basename(self.path))[0]
        return stem.split("__", 1)[0]


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    score_range: tuple = (1.0, 5.0)

    def save(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["path", "mos", "split"])
            for e in self.entries:
                w.writerow([e.path, repr(e.mos), e.split])

    @classmethod
    def load(cls, path: str, score_range: tuple = (1.0, 5.0)) -> "DatasetManifest":
        entries = []
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["path", "mos", "split"]:
                raise ValueError(f"{path}: bad manifest header {header}")
            for row in reader:
                if not row:
                    continue
                entries.append(ManifestEntry(row[0], float(row[1]), row[2]))
        return cls(entries=entries, score_range=score_range)


def _level_to_mos(level: int, max_level: int, score_range: tuple) -> float:
    """Linear map of (max_level + 1 - level) onto score_range; level 0 = pristine."""
    lo, hi = score_range
    q = (max_level + 1 - level) / (max_level + 1)
    return lo + (hi - lo) * q


def build_synth_manifest(
    source_paths: list,
    out_dir: str,
    kinds: tuple = DISTORTION_KINDS,
    levels: int = MAX_LEVEL,
    seed: int = 0,
    score_range: tuple = (1.0, 5.0),
) -> DatasetManifest:
    """Distort every source at every (kind, level), write files, assign MOS.

    Pristine copies get the maximum score; MOS strictly decreases with level
    within each (image, kind) group.
    """
    if not source_paths:
        raise ValueError("need at least one source image")
    if not 1 <= levels <= MAX_LEVEL:
        raise ValueError(f"levels must be in 1..{MAX_LEVEL}, got {levels}")
    for kind in kinds:
        if kind not in DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {kind!r}; valid: {DISTORTION_KINDS}")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for si, src_path in enumerate(source_paths):
        img = load_image(src_path)
        stem = os.path.splitext(os.path.basename(src_path))[0]
        pristine = os.path.join(out_dir, f"{stem}__pristine.ppm")
        save_image(img, pristine)
        entries.append(ManifestEntry(pristine, _level_to_mos(0, levels, score_range)))
        for kind in kinds:
            for level in range(1, levels + 1):
                variant_seed = seed * 100003 + si * 997 + DISTORTION_KINDS.index(kind) * 31 + level
                out = synth_distort(img, kind, level, seed=variant_seed)
                path = os.path.join(out_dir, f"{stem}__{kind}_l{level}.ppm")
                save_image(out, path)
                entries.append(ManifestEntry(path, _level_to_mos(level, levels, score_range)))
    return DatasetManifest(entries=entries, score_range=score_range)
