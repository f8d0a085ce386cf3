"""Episode metrics and cross-run aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .sim.kinematics import wrap_angle

METRICS = ("clearance_time", "mae", "mse", "heading_error", "v_avg", "omega_std")


@dataclass(frozen=True)
class EpisodeMetrics:
    clearance_time: float  # nan when the episode did not reach the end line
    mae: float
    mse: float
    heading_error: float  # mean |theta - row tangent|
    v_avg: float
    omega_std: float
    completed: bool
    stop_events: int = 0
    samples: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _project(points: np.ndarray, polyline: np.ndarray):
    """Nearest point on ``polyline`` for each point: (distance, segment index)."""
    a = polyline[:-1]
    ab = polyline[1:] - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ab2 = np.where(ab2 > 0, ab2, 1.0)
    # (n_points, n_segments)
    ap = points[:, None, :] - a[None, :, :]
    u = np.clip(np.einsum("psk,sk->ps", ap, ab) / ab2, 0.0, 1.0)
    foot = a[None] + u[..., None] * ab[None]
    dist = np.linalg.norm(points[:, None, :] - foot, axis=-1)
    seg = dist.argmin(axis=1)
    return dist[np.arange(points.shape[0]), seg], seg


def lateral_errors(trajectory, centerline) -> np.ndarray:
    """Unsigned distance of every trajectory sample to the centerline polyline.

    ``trajectory`` may carry extra columns; the first two after an optional
    time column are read as ``x, y`` when it has 4 columns (``t, x, y, theta``).
    """
    xy = _xy(trajectory)
    line = np.asarray(centerline, dtype=float)
    if line.ndim != 2 or line.shape[0] == 0:
        raise ValueError("empty centerline")
    if xy.shape[0] == 0:
        return np.zeros(0)
    if line.shape[0] == 1:
        return np.linalg.norm(xy - line[0], axis=1)
    out = np.empty(xy.shape[0])
    for lo in range(0, xy.shape[0], 256):
        out[lo:lo + 256] = _project(xy[lo:lo + 256], line)[0]
    return out


def _xy(trajectory) -> np.ndarray:
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim == 1:
        traj = traj[None, :]
    if traj.shape[1] == 4:
        return traj[:, 1:3]
    return traj[:, :2]


def heading_errors(trajectory, centerline) -> np.ndarray:
    traj = np.asarray(trajectory, dtype=float).reshape(-1, 4)
    line = np.asarray(centerline, dtype=float)
    if traj.shape[0] == 0:
        return np.zeros(0)
    seg_dir = np.diff(line, axis=0)
    tangent = np.arctan2(seg_dir[:, 1], seg_dir[:, 0])
    _, seg = _project(traj[:, 1:3], line)
    return np.abs([wrap_angle(th - tangent[s]) for th, s in zip(traj[:, 3], seg)])


def compute_metrics(log, centerline) -> EpisodeMetrics:
    """Metric suite for one episode log (see :class:`rownav.sim.episode.EpisodeLog`)."""
    traj = log.trajectory
    if traj.shape[0] == 0:
        nan = math.nan
        return EpisodeMetrics(nan, nan, nan, nan, nan, nan, bool(log.completed), 0, 0)
    err = lateral_errors(traj, centerline)
    head = heading_errors(traj, centerline)
    v = log.column("v_x_smooth")
    w = log.column("omega_z_smooth")
    return EpisodeMetrics(
        clearance_time=float(log.end_time) if log.completed else math.nan,
        mae=float(err.mean()),
        mse=float(np.mean(err**2)),
        heading_error=float(head.mean()),
        v_avg=float(v.mean()),
        omega_std=float(w.std()),
        completed=bool(log.completed),
        stop_events=int(log.stop_events),
        samples=int(traj.shape[0]),
    )


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class RunSummary:
    runs: int
    completed: int
    stats: dict  # metric name -> Stat

    @property
    def single(self) -> bool:
        return self.runs == 1

    def __getitem__(self, metric: str) -> Stat:
        return self.stats[metric]


def _stat(values: Sequence[float]) -> Stat:
    vals = np.array([v for v in values if not math.isnan(v)], dtype=float)
    if vals.size == 0:
        return Stat(math.nan, math.nan, 0)
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return Stat(float(vals.mean()), std, int(vals.size))


def aggregate(runs: Iterable[EpisodeMetrics]) -> RunSummary:
    """Per-metric mean and sample standard deviation.

    Clearance time only averages completed runs; the other metrics include
    every run (failed runs contribute the traversed portion).
    """
    runs = list(runs)
    if not runs:
        raise ValueError("aggregate needs at least one run")
    stats = {}
    for m in METRICS:
        vals = [getattr(r, m) for r in runs if (r.completed or m != "clearance_time")]
        stats[m] = _stat(vals)
    stats["stop_events"] = _stat([float(r.stop_events) for r in runs])
    return RunSummary(len(runs), sum(r.completed for r in runs), stats)


SUMMARY_COLUMNS = ("world", "method", "runs", "completed") + tuple(
    f"{m}_{k}" for m in METRICS + ("stop_events",) for k in ("mean", "std")
)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def summary_csv(rows: Iterable[tuple[str, str, RunSummary]]) -> str:
    """Results table, one line per (world, method), fixed 6-decimal formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for world, method, s in rows:
        line = [world, method, s.runs, s.completed]
        for m in METRICS + ("stop_events",):
            line += [_fmt(s[m].mean), _fmt(s[m].std)]
        w.writerow(line)
    return buf.getvalue()
