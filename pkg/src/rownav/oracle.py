"""Brute-force reference implementation of the perception pipeline.

Plain Python loops over nested lists, written without numpy so it shares no
code path with :mod:`rownav.perception`. Used by the ``oracle`` CLI command
and the equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import perception as P


def fuse(masks):
    h, w = len(masks[0]), len(masks[0][0])
    out = [[0] * w for _ in range(h)]
    for m in masks:
        for i in range(h):
            row, orow = m[i], out[i]
            for j in range(w):
                if row[j]:
                    orow[j] = 1
    return out


def gate(mask, depth, d_th):
    return [
        [1 if (mask[i][j] == 1 and depth[i][j] <= d_th) else 0 for j in range(len(mask[0]))]
        for i in range(len(mask))
    ]


def weight(mask, depth, d_th):
    out = []
    for i in range(len(mask)):
        row = []
        for j in range(len(mask[0])):
            if mask[i][j] == 1 and depth[i][j] < d_th:
                v = 1.0 - depth[i][j] / d_th
                row.append(min(1.0, max(0.0, v)))
            else:
                row.append(0.0)
        out.append(row)
    return out


def histogram(grid):
    w = len(grid[0])
    out = [0.0] * w
    for row in grid:
        for j in range(w):
            out[j] += row[j]
    return out


def smooth(hist, n):
    half = n // 2
    w = len(hist)
    out = []
    for j in range(w):
        total, count = 0.0, 0
        for k in range(j - half, j + half + 1):
            if 0 <= k < w:
                total += hist[k]
                count += 1
        out.append(total / count)
    return out


def argmin_center(hist):
    lo = min(hist)
    idx = [j for j, v in enumerate(hist) if v == lo]
    return sum(idx) / len(idx)


def widest_zero_run_center(hist):
    runs = []
    start = None
    for j, v in enumerate(hist):
        if v == 0:
            if start is None:
                start = j
        elif start is not None:
            runs.append((start, j - 1))
            start = None
    if start is not None:
        runs.append((start, len(hist) - 1))
    if not runs:
        return None
    mid = (len(hist) - 1) / 2
    best_key, picks = None, []
    for a, b in runs:
        c = (a + b) / 2
        key = (-(b - a), abs(c - mid))
        if best_key is None or key < best_key:
            best_key, picks = key, [c]
        elif key == best_key:
            picks.append(c)
    return sum(picks) / len(picks)


@dataclass
class StageMismatch:
    stage: str
    detail: str


@dataclass
class OracleReport:
    mismatches: list[StageMismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    @property
    def first(self) -> StageMismatch | None:
        return self.mismatches[0] if self.mismatches else None


def _max_abs_diff(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return float("inf")
    return float(np.abs(a - b).max()) if a.size else 0.0


def _scalar_mismatch(a, b, tol) -> bool:
    if a is None or b is None:
        return (a is None) != (b is None)
    return abs(a - b) > tol


def compare_pipeline(masks, depth, cfg: P.PerceptionConfig, tol: float = 1e-9) -> OracleReport:
    """Run every stage through both implementations and record differences.

    ``masks`` is the buffer contents (oldest first), ``depth`` the current
    depth map. Each stage of both implementations receives the same input
    (the library's output of the previous stage), so a mismatch points at
    one stage. All variants' stages are checked regardless of
    ``cfg.variant``.
    """
    report = OracleReport()

    def check(stage, lib, ref):
        diff = _max_abs_diff(lib, ref)
        if diff > tol:
            report.mismatches.append(StageMismatch(stage, f"max abs diff {diff:.3e}"))

    def check_scalar(stage, lib, ref):
        if _scalar_mismatch(lib, ref, tol):
            report.mismatches.append(StageMismatch(stage, f"{lib} != {ref}"))

    masks_np = [np.asarray(m, dtype=np.uint8) for m in masks]
    depth_np = np.asarray(depth, dtype=float)
    depth_py = depth_np.tolist()
    d_th = cfg.depth_threshold

    fused = P.fuse_masks(P.MaskBuffer(len(masks_np), masks_np))
    check("fuse", fused, fuse([m.tolist() for m in masks_np]))

    gated = P.gate_by_depth(fused, depth_np, d_th)
    check("gate", gated, gate(fused.tolist(), depth_py, d_th))

    weighted = P.weight_by_inverse_depth(gated, depth_np, d_th)
    check("weight", weighted, weight(gated.tolist(), depth_py, d_th))

    w = depth_np.shape[1]
    n = min(cfg.smoothing_window, w if w % 2 else w - 1)
    for label, grid in (("binary", gated), ("weighted", weighted)):
        hist = P.column_histogram(grid)
        check(f"histogram[{label}]", hist, histogram(grid.tolist()))
        smoothed = P.smooth_histogram(hist, n)
        check(f"smooth[{label}]", smoothed, smooth(hist.tolist(), n))
        check_scalar(f"argmin[{label}]", P.find_row_center(smoothed), argmin_center(smoothed.tolist()))

    check_scalar("segzeros", P.segzeros_center(gated), widest_zero_run_center(histogram(gated.tolist())))
    return report
