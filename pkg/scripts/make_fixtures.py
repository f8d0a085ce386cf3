"""Regenerate the PGM fixtures shipped in src/rownav/fixtures.

Each case is three consecutive masks (with segmentation noise) and the depth
map of the newest frame, rendered along a short drive through one crop world.
"""

import json
import sys
from pathlib import Path

from rownav import pgm
from rownav.sim import CameraModel, RobotPose, WorldConfig, camera_pose, generate_world, render
from rownav.sim.episode import NoisySegmentation

OUT = Path(__file__).resolve().parents[1] / "src" / "rownav" / "fixtures"

CASES = [
    ("vineyard_center", "CommonVineyard", 0.0, 4.0, 0.0, 0.0),
    ("vineyard_offset", "CommonVineyard", 0.0, 9.0, 0.3, -0.12),
    ("vineyard_curved", "CommonVineyard", 0.05, 6.0, 0.2, 0.05),
    ("pergola", "PergolaVineyard", 0.0, 5.0, 0.0, 0.0),
    ("pear_offset", "PearField", 0.0, 7.0, -0.25, 0.1),
    ("hightrees", "HighTreesField", 0.0, 3.0, 0.0, 0.0),
    ("hightrees_offset", "HighTreesField", 0.0, 12.0, 1.2, -0.2),
]


def main(out=OUT):
    out.mkdir(parents=True, exist_ok=True)
    cam = CameraModel()
    for k, (name, crop, curvature, s, lateral, dtheta) in enumerate(CASES):
        world = generate_world(WorldConfig(crop=crop, curvature=curvature, jitter_seed=k))
        noise = NoisySegmentation(0.01, 0.01, seed=k)
        for j in range(3):
            # frames 1/20 s apart at 0.5 m/s
            x, y, th = world.frame.to_world(s + 0.025 * (j - 2), world.corridor_offset + lateral)
            frame = render(world, camera_pose(RobotPose(float(x), float(y), float(th) + dtheta), cam), cam)
            pgm.write_mask(out / f"{name}_mask{j}.pgm", noise(frame))
        pgm.write_depth(out / f"{name}_depth.pgm", frame.depth)
        meta = {"depth_threshold": world.config.depth_threshold, "smoothing_window": 15, "history": 3}
        (out / f"{name}.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(CASES)} cases to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else OUT)
