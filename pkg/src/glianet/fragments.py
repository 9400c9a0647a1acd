"""Grid-based fragment sampling for the detail stream.

The image is partitioned into n_h x n_w cells of floor(H/n_h) x floor(W/n_w)
pixels; from each cell an f_h x f_w window is copied out and the windows are
spliced into a locally magnified detail image of (n_h*f_h) x (n_w*f_w).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FragmentGrid", "plan_grid", "extract_fragments"]


@dataclass(frozen=True)
class FragmentGrid:
    n_h: int
    n_w: int
    g_h: int
    g_w: int
    f_h: int
    f_w: int
    img_h: int
    img_w: int
    offsets: tuple  # offsets[i][j] = (row, col) window origin


def plan_grid(
    h: int,
    w: int,
    n_h: int,
    n_w: int,
    f_h: int,
    f_w: int,
    mode: str = "deterministic",
    seed: int = 0,
) -> FragmentGrid:
    """Lay out fragment windows over an h x w image.

    Deterministic mode anchors window (i, j) at (i*g_h, j*g_w); random mode
    adds a per-row/per-column jitter drawn from ``seed`` while keeping every
    window inside its cell.
    """
    if n_h < 1 or n_w < 1:
        raise ValueError(f"grid counts must be >= 1, got {n_h}x{n_w}")
    g_h, g_w = h // n_h, w // n_w
    if f_h > g_h or f_w > g_w:
        raise ValueError(
            f"fragment {f_h}x{f_w} exceeds cell {g_h}x{g_w} "
            f"(needs f_h <= floor(H/n_h) and f_w <= floor(W/n_w))"
        )
    if f_h < 1 or f_w < 1:
        raise ValueError(f"fragment dims must be >= 1, got {f_h}x{f_w}")
    if mode == "deterministic":
        row_jit = [0] * n_h
        col_jit = [0] * n_w
    elif mode == "random":
        rng = np.random.default_rng(seed)
        row_jit = [int(rng.integers(0, g_h - f_h + 1)) for _ in range(n_h)]
        col_jit = [int(rng.integers(0, g_w - f_w + 1)) for _ in range(n_w)]
    else:
        raise ValueError(f"unknown sampling mode {mode!r}; use 'deterministic' or 'random'")
    offsets = tuple(
        tuple((i * g_h + row_jit[i], j * g_w + col_jit[j]) for j in range(n_w))
        for i in range(n_h)
    )
    return FragmentGrid(n_h, n_w, g_h, g_w, f_h, f_w, h, w, offsets)


def extract_fragments(img: np.ndarray, grid: FragmentGrid) -> np.ndarray:
    """Copy every fragment window and splice them into the detail image."""
    h, w = img.shape[:2]
    if (h, w) != (grid.img_h, grid.img_w):
        raise ValueError(f"grid planned for {grid.img_h}x{grid.img_w}, image is {h}x{w}")
    c = img.shape[2]
    out = np.empty((grid.n_h * grid.f_h, grid.n_w * grid.f_w, c), dtype=img.dtype)
    for i in range(grid.n_h):
        for j in range(grid.n_w):
            r, col = grid.offsets[i][j]
            out[
                i * grid.f_h : (i + 1) * grid.f_h,
                j * grid.f_w : (j + 1) * grid.f_w,
                :,
            ] = img[r : r + grid.f_h, col : col + grid.f_w, :]
    return out
