"""Row-center estimation from vegetation masks and depth maps.

Three estimators share the same front end (history fusion + depth gating):

* ``SegMin``   column histogram of the gated mask, smoothed, global minimum.
* ``SegMinD``  same, but the gated mask is first weighted by normalized
  inverse depth so near vegetation dominates.
* ``SegZeros`` center of the widest run of vegetation-free columns; returns
  ``None`` when every column contains vegetation.

Masks are ``uint8``/``bool`` arrays of shape ``(h, w)``; depth maps are float
arrays of the same shape in meters with :data:`NO_RETURN` for rays that hit
nothing.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

# Depth value stored for rays with no return. Always beyond any threshold.
NO_RETURN = 1.0e4


class Variant(str, enum.Enum):
    SEGMIN = "SegMin"
    SEGMIND = "SegMinD"
    SEGZEROS = "SegZeros"


class PerceptionError(ValueError):
    pass


@dataclass(frozen=True)
class PerceptionConfig:
    depth_threshold: float = 5.0
    smoothing_window: int = 15
    history: int = 3
    variant: Variant = Variant.SEGMIN

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.depth_threshold > 0:
            raise PerceptionError(f"depth_threshold must be > 0, got {self.depth_threshold}")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise PerceptionError(f"smoothing_window must be odd and >= 1, got {self.smoothing_window}")
        if self.history < 1:
            raise PerceptionError(f"history must be >= 1, got {self.history}")


class MaskBuffer:
    """Holds the most recent ``capacity`` vegetation masks."""

    def __init__(self, capacity: int, masks: Iterable[np.ndarray] = ()):
        if capacity < 1:
            raise PerceptionError("MaskBuffer capacity must be >= 1")
        self.capacity = capacity
        self._frames: deque[np.ndarray] = deque(maxlen=capacity)
        for m in masks:
            self.push(m)

    def push(self, mask: np.ndarray) -> None:
        mask = _as_mask(mask)
        if self._frames and self._frames[0].shape != mask.shape:
            raise PerceptionError(
                f"mask shape {mask.shape} does not match buffered shape {self._frames[0].shape}"
            )
        self._frames.append(mask)

    def clear(self) -> None:
        self._frames.clear()

    @property
    def frames(self) -> tuple[np.ndarray, ...]:
        return tuple(self._frames)

    def __len__(self) -> int:
        return len(self._frames)


def _as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.size == 0:
        raise PerceptionError(f"mask must be a non-empty 2-D array, got shape {mask.shape}")
    if mask.dtype != np.bool_:
        if not np.isin(mask, (0, 1)).all():
            raise PerceptionError("mask cells must be 0 or 1")
        mask = mask.astype(bool)
    return mask


def _check_pair(mask: np.ndarray, depth: np.ndarray) -> None:
    if mask.shape != depth.shape:
        raise PerceptionError(f"mask shape {mask.shape} != depth shape {depth.shape}")


def fuse_masks(buffer: MaskBuffer | Iterable[np.ndarray]) -> np.ndarray:
    """Cellwise logical OR over all buffered masks."""
    frames = buffer.frames if isinstance(buffer, MaskBuffer) else [_as_mask(m) for m in buffer]
    if not frames:
        raise PerceptionError("no frames")
    shape = frames[0].shape
    out = np.zeros(shape, dtype=bool)
    for m in frames:
        if m.shape != shape:
            raise PerceptionError(f"mask shape {m.shape} != {shape}")
        out |= m
    return out.astype(np.uint8)


def gate_by_depth(mask: np.ndarray, depth: np.ndarray, d_th: float) -> np.ndarray:
    """Keep vegetation pixels whose depth is within ``d_th`` meters."""
    mask = _as_mask(mask)
    depth = np.asarray(depth, dtype=float)
    _check_pair(mask, depth)
    if not d_th > 0:
        raise PerceptionError(f"d_th must be > 0, got {d_th}")
    # NaN / no-return compare False and are dropped.
    return (mask & (depth <= d_th)).astype(np.uint8)


def weight_by_inverse_depth(mask: np.ndarray, depth: np.ndarray, d_th: float) -> np.ndarray:
    """Scale mask cells by ``1 - depth / d_th``, clipped to [0, 1]."""
    mask = _as_mask(mask)
    depth = np.asarray(depth, dtype=float)
    _check_pair(mask, depth)
    if not d_th > 0:
        raise PerceptionError(f"d_th must be > 0, got {d_th}")
    w = np.clip(1.0 - depth / d_th, 0.0, 1.0)
    return np.where(mask, w, 0.0)


def column_histogram(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.size == 0:
        raise PerceptionError(f"grid must be a non-empty 2-D array, got shape {grid.shape}")
    return grid.sum(axis=0)


def smooth_histogram(hist: np.ndarray, n: int) -> np.ndarray:
    """Centered moving average of odd width ``n``.

    Near the borders the window is truncated to valid indices and the sum is
    divided by the number of cells actually covered, so edges are not pulled
    toward zero. Window sums add ``h[j-k] + h[j+k]`` pairs in order of ``k``,
    which makes the result bitwise mirror-symmetric: smoothing a reversed
    histogram gives exactly the reversed output.
    """
    hist = np.asarray(hist, dtype=float)
    w = hist.size
    if n < 1 or n % 2 == 0 or n > w:
        raise PerceptionError(f"window must be odd with 1 <= n <= {w}, got {n}")
    r = n // 2
    padded = np.concatenate((np.zeros(r), hist, np.zeros(r)))
    valid = np.concatenate((np.zeros(r), np.ones(w), np.zeros(r)))
    sums = hist.copy()
    counts = np.ones(w)
    for k in range(1, r + 1):
        sums += padded[r - k:r - k + w] + padded[r + k:r + k + w]
        counts += valid[r - k:r - k + w] + valid[r + k:r + k + w]
    # rounding in the sums must not push an average outside the input range
    return np.clip(sums / counts, hist.min(), hist.max())


def find_row_center(hist: np.ndarray) -> float:
    """Index of the global minimum; ties resolve to the mean tied index."""
    hist = np.asarray(hist, dtype=float)
    if hist.size == 0:
        raise PerceptionError("empty histogram")
    return float(np.flatnonzero(hist == hist.min()).mean())


def zero_runs(hist: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of exactly-zero entries as inclusive ``(start, end)`` pairs."""
    zero = np.concatenate(([False], np.asarray(hist) == 0, [False]))
    edges = np.flatnonzero(np.diff(zero.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def segzeros_center(mask: np.ndarray) -> Optional[float]:
    """Center of the widest vegetation-free column run, or ``None`` if there is none.

    Equal-width runs are ranked by distance of their center to the frame
    center; runs tied on both counts (mirror images) average to the frame
    center.
    """
    hist = column_histogram(_as_mask(mask))
    runs = zero_runs(hist)
    if not runs:
        return None
    mid = (hist.size - 1) / 2.0
    widest = max(b - a for a, b in runs)
    centers = [(a + b) / 2.0 for a, b in runs if b - a == widest]
    best = min(abs(c - mid) for c in centers)
    chosen = [c for c in centers if abs(c - mid) == best]
    return float(sum(chosen) / len(chosen))


@dataclass
class PerceptionTrace:
    """Intermediate products of one :func:`perceive` call, for debugging."""

    fused: np.ndarray
    gated: np.ndarray
    weighted: Optional[np.ndarray]
    histogram: np.ndarray
    smoothed: Optional[np.ndarray]
    center: Optional[float]


def perceive_trace(buffer: MaskBuffer, depth: np.ndarray, cfg: PerceptionConfig) -> PerceptionTrace:
    fused = fuse_masks(buffer)
    gated = gate_by_depth(fused, depth, cfg.depth_threshold)
    if cfg.variant is Variant.SEGZEROS:
        return PerceptionTrace(fused, gated, None, column_histogram(gated), None, segzeros_center(gated))
    weighted = None
    grid = gated
    if cfg.variant is Variant.SEGMIND:
        weighted = weight_by_inverse_depth(gated, depth, cfg.depth_threshold)
        grid = weighted
    hist = column_histogram(grid)
    smoothed = smooth_histogram(hist, min(cfg.smoothing_window, _largest_odd(hist.size)))
    return PerceptionTrace(fused, gated, weighted, hist, smoothed, find_row_center(smoothed))


def perceive(buffer: MaskBuffer, depth: np.ndarray, cfg: PerceptionConfig) -> Optional[float]:
    """Row-center column index for the configured variant (``None`` = no gap)."""
    return perceive_trace(buffer, depth, cfg).center


def _largest_odd(w: int) -> int:
    return w if w % 2 else w - 1
