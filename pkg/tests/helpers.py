import numpy as np

from rownav.sim.episode import EpisodeLog


def straight_log(samples, dt=0.2, v=0.5, y=0.0, omega=0.0, completed=True):
    """Log of a robot driving along +x at height ``y`` with constant commands."""
    rows = []
    for k in range(samples):
        t = k * dt
        rows.append((t, v * t, y, 0.0, 112.0, 0.0, v, omega, v, omega))
    end = (samples - 1) * dt
    return EpisodeLog(rows=rows, completed=completed, end_time=end, reason="end_line" if completed else "diverged")


def random_masks(rng, shape, count, density=0.3):
    return [(rng.random(shape) < density).astype(np.uint8) for _ in range(count)]


TINY_SPEC = """\
schema_version: 1
name: tiny
seeds: [0, 1]
duration: 12.0
segmentation: {false_positive: 0.01, false_negative: 0.01}
camera: {width: 64, height: 48}
perception: {smoothing_window: 7}
worlds:
  - name: Short
    crop: CommonVineyard
    track_length: 2.0
    variants: [SegMin, SegZeros]
"""
