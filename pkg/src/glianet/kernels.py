"""Hot scalar-loop kernels: bilinear resize, separable blur, block averaging.

Each kernel has a numba ``@njit`` build and a pure-numpy fallback. The numpy
path is selected when numba is unavailable or when the environment variable
``GLIANET_NO_NUMBA`` is set to a non-empty value. ``BACKEND`` records which
path is active; ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "bilinear_resize", "blur_separable", "block_mean"]


def _numpy_bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear interpolation, vectorized."""
    h, w, c = src.shape
    out = np.empty((out_h, out_w, c), dtype=src.dtype)
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out[:] = top * (1.0 - fy) + bot * fy
    return out


def _numpy_blur_separable(src: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Two-pass 1-D convolution with edge clamping."""
    h, w, c = src.shape
    r = kernel.size // 2
    tmp = np.zeros_like(src)
    for t, k in enumerate(kernel):
        off = t - r
        cols = np.clip(np.arange(w) + off, 0, w - 1)
        tmp += src[:, cols, :] * k
    out = np.zeros_like(src)
    for t, k in enumerate(kernel):
        off = t - r
        rows = np.clip(np.arange(h) + off, 0, h - 1)
        out += tmp[rows, :, :] * k
    return out


def _numpy_block_mean(src: np.ndarray, block: int) -> np.ndarray:
    """Replace each block x block cell by its mean (trailing partial blocks too)."""
    h, w, _ = src.shape
    out = np.empty_like(src)
    for by in range(0, h, block):
        for bx in range(0, w, block):
            cell = src[by : by + block, bx : bx + block, :]
            out[by : by + block, bx : bx + block, :] = cell.mean(axis=(0, 1))
    return out


def _want_numba() -> bool:
    return not os.environ.get("GLIANET_NO_NUMBA")


BACKEND = "numpy"
bilinear_resize = _numpy_bilinear_resize
blur_separable = _numpy_blur_separable
block_mean = _numpy_block_mean

if _want_numba():
    try:
        from numba import njit
    except ImportError:
        njit = None
    if njit is not None:

        @njit(cache=True)
        def _nb_bilinear_resize(src, out_h, out_w):
            h, w, c = src.shape
            out = np.empty((out_h, out_w, c), dtype=src.dtype)
            sy = h / out_h
            sx = w / out_w
            for oy in range(out_h):
                y = (oy + 0.5) * sy - 0.5
                y0 = int(np.floor(y))
                fy = y - y0
                if y0 < 0:
                    y0 = 0
                    fy = 0.0
                y1 = y0 + 1
                if y1 > h - 1:
                    y1 = h - 1
                    fy = 0.0 if y0 == h - 1 else fy
                for ox in range(out_w):
                    x = (ox + 0.5) * sx - 0.5
                    x0 = int(np.floor(x))
                    fx = x - x0
                    if x0 < 0:
                        x0 = 0
                        fx = 0.0
                    x1 = x0 + 1
                    if x1 > w - 1:
                        x1 = w - 1
                        fx = 0.0 if x0 == w - 1 else fx
                    for ch in range(c):
                        top = src[y0, x0, ch] * (1.0 - fx) + src[y0, x1, ch] * fx
                        bot = src[y1, x0, ch] * (1.0 - fx) + src[y1, x1, ch] * fx
                        out[oy, ox, ch] = top * (1.0 - fy) + bot * fy
            return out

        @njit(cache=True)
        def _nb_blur_separable(src, kernel):
            h, w, c = src.shape
            r = kernel.size // 2
            tmp = np.zeros_like(src)
            for y in range(h):
                for x in range(w):
                    for t in range(kernel.size):
                        xi = x + t - r
                        if xi < 0:
                            xi = 0
                        elif xi > w - 1:
                            xi = w - 1
                        for ch in range(c):
                            tmp[y, x, ch] += src[y, xi, ch] * kernel[t]
            out = np.zeros_like(src)
            for y in range(h):
                for x in range(w):
                    for t in range(kernel.size):
                        yi = y + t - r
                        if yi < 0:
                            yi = 0
                        elif yi > h - 1:
                            yi = h - 1
                        for ch in range(c):
                            out[y, x, ch] += tmp[yi, x, ch] * kernel[t]
            return out

        @njit(cache=True)
        def _nb_block_mean(src, block):
            h, w, c = src.shape
            out = np.empty_like(src)
            for by in range(0, h, block):
                ey = min(by + block, h)
                for bx in range(0, w, block):
                    ex = min(bx + block, w)
                    for ch in range(c):
                        acc = 0.0
                        for y in range(by, ey):
                            for x in range(bx, ex):
                                acc += src[y, x, ch]
                        m = acc / ((ey - by) * (ex - bx))
                        for y in range(by, ey):
                            for x in range(bx, ex):
                                out[y, x, ch] = m
            return out

        BACKEND = "numba"
        bilinear_resize = _nb_bilinear_resize
        blur_separable = _nb_blur_separable
        block_mean = _nb_block_mean
