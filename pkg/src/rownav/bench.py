"""Per-stage latency of the closed loop on full-size frames."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .controller import ControllerConfig, HeadingController
from .perception import MaskBuffer, PerceptionConfig, Variant, perceive
from .sim.camera import CameraModel, camera_pose, render
from .sim.kinematics import RobotPose
from .sim.world import Crop, WorldConfig, generate_world

PERCEIVE_BUDGET_MS = 50.0  # one inference period at 20 Hz


@dataclass(frozen=True)
class StageTiming:
    stage: str
    samples: int
    p50_ms: float
    p99_ms: float
    mean_ms: float
    max_ms: float


def _timing(stage: str, seconds) -> StageTiming:
    ms = np.asarray(seconds, dtype=float) * 1e3
    return StageTiming(
        stage,
        int(ms.size),
        float(np.percentile(ms, 50)),
        float(np.percentile(ms, 99)),
        float(ms.mean()),
        float(ms.max()),
    )


def _poses(world, n: int, rng: np.random.Generator):
    """Poses spread along the track with small lateral and heading offsets."""
    track = world.config.track_length
    half = world.config.row_distance / 2
    for k in range(n):
        s = track * (k + 0.5) / n
        x, y, th = world.frame.to_world(s, world.corridor_offset + rng.uniform(-0.3, 0.3) * half)
        yield RobotPose(float(x), float(y), float(th) + rng.uniform(-0.15, 0.15))


def run_bench(
    frames: int = 200,
    crop: Crop = Crop.COMMON_VINEYARD,
    warmup: int = 1,
    seed: int = 0,
    camera: CameraModel = CameraModel(),
) -> list[StageTiming]:
    """Time render, perceive (each variant) and control over ``frames`` poses.

    The first ``warmup`` calls of every stage are discarded; they include JIT
    compilation and cache population.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    world = generate_world(WorldConfig(crop=crop, jitter_seed=seed))
    rng = np.random.default_rng(seed)
    clock = time.perf_counter

    render_t, observations = [], []
    for k, pose in enumerate(_poses(world, frames + warmup, rng)):
        cp = camera_pose(pose, camera)
        t0 = clock()
        obs = render(world, cp, camera)
        dt = clock() - t0
        if k >= warmup:
            render_t.append(dt)
        observations.append(obs)

    results = [_timing("render", render_t)]
    centers = {}
    for variant in Variant:
        cfg = PerceptionConfig(depth_threshold=world.config.depth_threshold, variant=variant)
        buf = MaskBuffer(cfg.history)
        times, xs = [], []
        for k, obs in enumerate(observations):
            buf.push(obs.mask)
            t0 = clock()
            x_h = perceive(buf, obs.depth, cfg)
            dt = clock() - t0
            if k >= warmup:
                times.append(dt)
            xs.append(x_h)
        results.append(_timing(f"perceive[{variant.value}]", times))
        centers[variant] = xs

    ctl = HeadingController(ControllerConfig(frame_width=camera.width))
    times = []
    for k, x_h in enumerate(centers[Variant.SEGMIN]):
        t0 = clock()
        ctl.update(x_h)
        dt = clock() - t0
        if k >= warmup:
            times.append(dt)
    results.append(_timing("control", times))
    return results


def over_budget(results, budget_ms: float = PERCEIVE_BUDGET_MS) -> list[StageTiming]:
    return [r for r in results if r.stage.startswith("perceive") and r.p99_ms > budget_ms]


def bench_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("stage", "samples", "p50_ms", "p99_ms", "mean_ms", "max_ms"))
    for r in results:
        w.writerow((r.stage, r.samples, f"{r.p50_ms:.4f}", f"{r.p99_ms:.4f}", f"{r.mean_ms:.4f}", f"{r.max_ms:.4f}"))
    return buf.getvalue()
