"""Closed-loop episodes: render -> perceive -> control -> integrate.

All rates are integer divisors of a fixed base tick so the schedule is exact:
over any whole second there are exactly ``render_hz`` renders,
``perception_hz`` perception updates and ``control_hz`` control updates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import pgm
from ..controller import ControllerConfig, HeadingController
from ..perception import MaskBuffer, PerceptionConfig, perceive
from .camera import CameraModel, FrameObservation, camera_pose, render
from .kinematics import RobotPose, step_kinematics
from .world import World

LOG_COLUMNS = ("t", "x", "y", "theta", "x_h", "d", "v_x", "omega_z", "v_x_smooth", "omega_z_smooth")

MaskSource = Callable[[FrameObservation], np.ndarray]


def oracle_mask(frame: FrameObservation) -> np.ndarray:
    return frame.mask


class NoisySegmentation:
    """Stand-in for an imperfect segmentation network.

    Flips background pixels to vegetation with probability ``false_positive``
    and drops vegetation pixels with probability ``false_negative``,
    independently per pixel and per frame.
    """

    def __init__(self, false_positive: float = 0.0, false_negative: float = 0.0, seed: int = 0):
        for name, p in (("false_positive", false_positive), ("false_negative", false_negative)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        self.false_positive = false_positive
        self.false_negative = false_negative
        self.rng = np.random.default_rng(seed)

    def __call__(self, frame: FrameObservation) -> np.ndarray:
        mask = frame.mask.astype(bool)
        if self.false_positive == 0 and self.false_negative == 0:
            return mask.astype(np.uint8)
        u = self.rng.random(mask.shape)
        return np.where(mask, u >= self.false_negative, u < self.false_positive).astype(np.uint8)


@dataclass(frozen=True)
class Rates:
    base_hz: int = 60
    render_hz: int = 30
    perception_hz: int = 20
    control_hz: int = 5

    def __post_init__(self):
        for name in ("render_hz", "perception_hz", "control_hz"):
            hz = getattr(self, name)
            if hz <= 0 or self.base_hz % hz:
                raise ValueError(f"{name}={hz} must divide base_hz={self.base_hz}")

    @property
    def dt(self) -> float:
        return 1.0 / self.base_hz

    def every(self, hz: int) -> int:
        return self.base_hz // hz


@dataclass
class EpisodeLog:
    rows: list = field(default_factory=list)
    completed: bool = False
    end_time: float = 0.0
    reason: str = "timeout"
    renders: int = 0
    perceptions: int = 0
    controls: int = 0

    @property
    def failed(self) -> bool:
        return not self.completed

    def column(self, name: str) -> np.ndarray:
        k = LOG_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    @property
    def trajectory(self) -> np.ndarray:
        """``(n, 4)`` array of ``t, x, y, theta`` at each control update."""
        return np.array([r[:4] for r in self.rows], dtype=float).reshape(-1, 4)

    @property
    def stop_events(self) -> int:
        return int(np.isnan(self.column("x_h")).sum()) if self.rows else 0

    def summary(self) -> dict:
        return {
            "completed": self.completed,
            "end_time": self.end_time,
            "reason": self.reason,
            "renders": self.renders,
            "perceptions": self.perceptions,
            "controls": self.controls,
            "stop_events": self.stop_events,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow(["" if isinstance(v, float) and math.isnan(v) else repr(float(v)) for v in r])

    @classmethod
    def read_csv(cls, path, **summary) -> "EpisodeLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != LOG_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [tuple(float(v) if v else math.nan for v in r) for r in reader]
        return cls(rows=rows, **summary)


def run_episode(
    world: World,
    perception: PerceptionConfig,
    controller: ControllerConfig,
    rates: Rates = Rates(),
    camera: CameraModel = CameraModel(),
    duration: float = 120.0,
    divergence: Optional[float] = None,
    mask_source: MaskSource = oracle_mask,
    depth_noise: float = 0.0,
    seed: int = 0,
    debug_dir: Optional[Path] = None,
) -> EpisodeLog:
    """Drive the robot from the start line until it crosses the end line.

    The episode stops early when the lateral offset from the corridor center
    exceeds ``divergence`` (default: the row distance) or after ``duration``
    seconds. Poses are integrated at the base tick with the latest smoothed
    command.
    """
    if divergence is None:
        divergence = world.config.row_distance
    rng = np.random.default_rng(seed)
    buffer = MaskBuffer(perception.history)
    ctl = HeadingController(controller)
    log = EpisodeLog()
    dt = rates.dt
    n_render, n_percept, n_control = (rates.every(hz) for hz in (rates.render_hz, rates.perception_hz, rates.control_hz))
    track = world.config.track_length

    x, y, th = world.start_pose()
    pose = RobotPose(x, y, th, 0.0)
    frame: Optional[FrameObservation] = None
    pending = None
    x_h: Optional[float] = None
    smoothed = (0.0, 0.0)
    s_prev, _ = world.progress(pose.x, pose.y)
    if debug_dir is not None:
        Path(debug_dir).mkdir(parents=True, exist_ok=True)

    for k in range(int(round(duration * rates.base_hz))):
        t = k * dt
        z, pitch, roll = world.terrain.attitude(pose.x, pose.y, pose.theta)
        if k % n_render == 0:
            # rasterized on first use: frames superseded before perception never need pixels
            pending = (camera_pose(pose._replace(z=z), camera, pitch, roll), t)
            log.renders += 1
        if k % n_percept == 0:
            if pending is not None:
                frame = render(world, pending[0], camera, timestamp=pending[1], depth_noise=depth_noise, rng=rng)
                pending = None
            buffer.push(mask_source(frame))
            x_h = perceive(buffer, frame.depth, perception)
            log.perceptions += 1
            if debug_dir is not None:
                stem = Path(debug_dir) / f"{log.perceptions - 1:05d}"
                pgm.write_mask(f"{stem}_mask.pgm", buffer.frames[-1])
                pgm.write_depth(f"{stem}_depth.pgm", frame.depth)
        if k % n_control == 0:
            raw, smoothed, d = ctl.update(x_h)
            log.controls += 1
            log.rows.append(
                (
                    t,
                    pose.x,
                    pose.y,
                    pose.theta,
                    math.nan if x_h is None else x_h,
                    math.nan if d is None else d,
                    raw.v_x,
                    raw.omega_z,
                    smoothed.v_x,
                    smoothed.omega_z,
                )
            )

        pose = step_kinematics(pose, smoothed, dt)
        s, lateral = world.progress(pose.x, pose.y)
        if s >= track:
            frac = (track - s_prev) / (s - s_prev) if s > s_prev else 1.0
            log.completed, log.reason, log.end_time = True, "end_line", t + frac * dt
            return log
        if abs(lateral) > divergence:
            log.reason, log.end_time = "diverged", t + dt
            return log
        s_prev = s

    log.end_time = round(duration * rates.base_hz) * dt
    return log
