"""Procedural crop-row worlds.

Geometry is laid out in a *track frame* ``(s, l)``: ``s`` is arc length along
the nominal row centerline starting at the robot's start line, ``l`` the
lateral offset (positive = left). Straight worlds map ``(s, l) -> (s, l)``;
curved worlds bend the track along a constant-curvature arc turning left for
positive curvature.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class Crop(str, enum.Enum):
    COMMON_VINEYARD = "CommonVineyard"
    PERGOLA_VINEYARD = "PergolaVineyard"
    PEAR_FIELD = "PearField"
    HIGH_TREES_FIELD = "HighTreesField"


# (row distance, plant distance, plant height) in meters.
CROP_GEOMETRY = {
    Crop.COMMON_VINEYARD: (1.8, 1.3, 2.0),
    Crop.PERGOLA_VINEYARD: (6.0, 1.5, 2.9),
    Crop.PEAR_FIELD: (2.0, 1.0, 2.9),
    Crop.HIGH_TREES_FIELD: (7.0, 5.0, 12.5),
}

# Depth threshold used by perception in each crop.
CROP_DEPTH_THRESHOLD = {
    Crop.COMMON_VINEYARD: 5.0,
    Crop.PERGOLA_VINEYARD: 8.0,
    Crop.PEAR_FIELD: 8.0,
    Crop.HIGH_TREES_FIELD: 10.0,
}

JITTER_FRACTION = 0.10
# Fraction of the row spacing covered by the pergola canopy, measured from the left row.
PERGOLA_COVER = 0.5
PERGOLA_SLAB_THICKNESS = 0.3


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    crop: Crop = Crop.COMMON_VINEYARD
    row_distance: Optional[float] = None
    plant_distance: Optional[float] = None
    plant_height: Optional[float] = None
    track_length: float = 20.0
    curvature: float = 0.0
    jitter_seed: int = 0
    terrain_roughness: float = 0.01
    margin_behind: float = 3.0
    margin_ahead: float = 14.0
    neighbor_rows: int = 1  # extra rows planted outside the corridor on each side
    start_lateral: float = 0.0  # m, left of the corridor center
    start_heading: float = 0.0  # rad, relative to the row direction

    def __post_init__(self):
        crop = Crop(self.crop)
        object.__setattr__(self, "crop", crop)
        rd, pd, ph = CROP_GEOMETRY[crop]
        for name, default in (("row_distance", rd), ("plant_distance", pd), ("plant_height", ph)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        for name in ("row_distance", "plant_distance", "plant_height", "track_length"):
            if not getattr(self, name) > 0:
                raise WorldError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.terrain_roughness < 0:
            raise WorldError("terrain_roughness must be >= 0")
        if self.margin_behind < 0 or self.margin_ahead < 0:
            raise WorldError("margins must be >= 0")
        if self.neighbor_rows < 0:
            raise WorldError("neighbor_rows must be >= 0")
        if self.curvature != 0 and abs(1.0 / self.curvature) <= self.row_distance:
            raise WorldError("curvature radius must exceed the row distance")
        if not abs(self.start_lateral) < self.row_distance / 2.0:
            raise WorldError("start_lateral must stay inside the corridor")
        if not abs(self.start_heading) < math.pi / 2.0:
            raise WorldError("start_heading must face down the row")

    @property
    def depth_threshold(self) -> float:
        return CROP_DEPTH_THRESHOLD[self.crop]


# ---------------------------------------------------------------------------
# Primitives. All are axis-aligned in z; ellipsoids and boxes may be yawed.


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]
    axes: tuple[float, float, float]
    yaw: float = 0.0
    vegetation: bool = True

    @property
    def bound_radius(self) -> float:
        return max(self.axes)

    @property
    def half_extents(self) -> tuple[float, float, float]:
        a, b, c = self.axes
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        return (math.hypot(a * cy, b * sy), math.hypot(a * sy, b * cy), c)


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder from ``z0`` to ``z1``; ``rounded`` adds hemispherical caps (capsule)."""

    x: float
    y: float
    z0: float
    z1: float
    radius: float
    rounded: bool = False
    vegetation: bool = True

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.x, self.y, 0.5 * (self.z0 + self.z1))

    @property
    def bound_radius(self) -> float:
        return math.hypot(0.5 * (self.z1 - self.z0) + (self.radius if self.rounded else 0.0), self.radius)

    @property
    def half_extents(self) -> tuple[float, float, float]:
        cap = self.radius if self.rounded else 0.0
        return (self.radius, self.radius, 0.5 * (self.z1 - self.z0) + cap)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half: tuple[float, float, float]
    yaw: float = 0.0
    vegetation: bool = True

    @property
    def bound_radius(self) -> float:
        return math.sqrt(sum(h * h for h in self.half))

    @property
    def half_extents(self) -> tuple[float, float, float]:
        hx, hy, hz = self.half
        cy, sy = abs(math.cos(self.yaw)), abs(math.sin(self.yaw))
        return (hx * cy + hy * sy, hx * sy + hy * cy, hz)


Primitive = Ellipsoid | Cylinder | Box


# ---------------------------------------------------------------------------
# Track frame


@dataclass(frozen=True)
class TrackFrame:
    curvature: float = 0.0

    def to_world(self, s, l):
        """Track ``(s, l)`` -> world ``(x, y, heading)``; accepts arrays."""
        s = np.asarray(s, dtype=float)
        l = np.asarray(l, dtype=float)
        k = self.curvature
        if k == 0:
            return s + 0 * l, l + 0 * s, np.zeros(np.broadcast(s, l).shape)
        phi = s * k
        r = 1.0 / k
        x = r * np.sin(phi) - l * np.sin(phi)
        y = r * (1.0 - np.cos(phi)) + l * np.cos(phi)
        return x, y, phi + 0 * l

    def to_track(self, x, y):
        """World ``(x, y)`` -> track ``(s, l)``; accepts arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self.curvature
        if k == 0:
            return x.copy(), y.copy()
        r = 1.0 / k
        qx, qy = x, y - r
        phi = np.arctan2(qx / r, -qy / r)
        rho = np.hypot(qx, qy)
        return phi / k, r - math.copysign(1.0, r) * rho

    def heading(self, s):
        return np.asarray(s, dtype=float) * self.curvature


# ---------------------------------------------------------------------------
# Terrain


@dataclass(frozen=True)
class Terrain:
    """Seeded low-frequency height field perturbing the robot's attitude.

    Rendering keeps the ground at z = 0; the field only offsets the camera
    height and tilts the body by at most ``max_tilt`` radians.
    """

    amplitude: float = 0.0
    waves: tuple[tuple[float, float, float, float], ...] = ()  # (kx, ky, phase, weight)
    max_tilt: float = math.radians(2.0)

    @classmethod
    def random(cls, amplitude: float, rng: np.random.Generator, n_waves: int = 4) -> "Terrain":
        waves = []
        weights = rng.uniform(0.5, 1.0, n_waves)
        weights /= weights.sum()
        for wgt in weights:
            wavelength = rng.uniform(2.0, 6.0)
            ang = rng.uniform(0.0, 2 * math.pi)
            kx = 2 * math.pi / wavelength * math.cos(ang)
            ky = 2 * math.pi / wavelength * math.sin(ang)
            waves.append((kx, ky, rng.uniform(0.0, 2 * math.pi), float(wgt)))
        return cls(amplitude=amplitude, waves=tuple(waves))

    def height(self, x: float, y: float) -> float:
        return self.amplitude * sum(w * math.sin(kx * x + ky * y + ph) for kx, ky, ph, w in self.waves)

    def gradient(self, x: float, y: float) -> tuple[float, float]:
        gx = gy = 0.0
        for kx, ky, ph, w in self.waves:
            c = self.amplitude * w * math.cos(kx * x + ky * y + ph)
            gx += kx * c
            gy += ky * c
        return gx, gy

    def attitude(self, x: float, y: float, theta: float) -> tuple[float, float, float]:
        """``(z_offset, pitch, roll)`` of a robot at ``(x, y)`` facing ``theta``.

        Pitch is positive nose-up, roll positive left-side-up.
        """
        if self.amplitude == 0 or not self.waves:
            return 0.0, 0.0, 0.0
        gx, gy = self.gradient(x, y)
        c, s = math.cos(theta), math.sin(theta)
        along = gx * c + gy * s
        across = -gx * s + gy * c
        lim = self.max_tilt
        pitch = max(-lim, min(lim, math.atan(along)))
        roll = max(-lim, min(lim, -math.atan(across)))
        return self.height(x, y), pitch, roll


# ---------------------------------------------------------------------------
# World


@dataclass
class World:
    config: WorldConfig
    frame: TrackFrame
    primitives: list
    rows: dict  # name -> (n, 2) array of plant base positions along the row, ordered by s
    corridor: tuple[np.ndarray, np.ndarray]  # left/right boundary polylines of the free corridor
    corridor_offset: float  # nominal lateral position of the corridor center
    terrain: Terrain = field(default_factory=Terrain)

    def start_pose(self):
        cfg = self.config
        x, y, th = self.frame.to_world(0.0, self.corridor_offset + cfg.start_lateral)
        return float(x), float(y), float(th) + cfg.start_heading

    def progress(self, x: float, y: float) -> tuple[float, float]:
        """Along-track distance from the start line and lateral offset from the corridor center."""
        s, l = self.frame.to_track(x, y)
        return float(s), float(l) - self.corridor_offset

    def mirrored(self) -> "World":
        """Reflect a straight world across the x axis (y -> -y)."""
        if self.frame.curvature != 0:
            raise WorldError("mirroring is only defined for straight worlds")

        def flip(p):
            if isinstance(p, Cylinder):
                return replace(p, y=-p.y)
            cx, cy, cz = p.center
            return replace(p, center=(cx, -cy, cz), yaw=-p.yaw)

        flip_xy = lambda a: a * np.array([1.0, -1.0])
        cfg = replace(self.config, start_lateral=-self.config.start_lateral, start_heading=-self.config.start_heading)
        return World(
            config=cfg,
            frame=self.frame,
            primitives=[flip(p) for p in self.primitives],
            rows={_mirror_name(k): flip_xy(v) for k, v in self.rows.items()},
            corridor=(flip_xy(self.corridor[1]), flip_xy(self.corridor[0])),
            corridor_offset=-self.corridor_offset,
            terrain=Terrain(),
        )


    def to_dict(self) -> dict:
        """Plain-data description (JSON-serializable)."""

        def prim(p):
            kind = type(p).__name__.lower()
            if isinstance(p, Cylinder) and p.rounded:
                kind = "capsule"
            d = {k: v for k, v in vars(p).items() if k != "rounded"}
            return {"type": kind, **{k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}}

        cfg = {k: getattr(self.config, k) for k in self.config.__dataclass_fields__}
        cfg["crop"] = self.config.crop.value
        return {
            "config": cfg,
            "depth_threshold": self.config.depth_threshold,
            "corridor_offset": self.corridor_offset,
            "start_pose": list(self.start_pose()),
            "rows": {k: v.tolist() for k, v in self.rows.items()},
            "primitives": [prim(p) for p in self.primitives],
        }


def _mirror_name(name: str) -> str:
    side, _, rest = name.partition("+")
    side = {"left": "right", "right": "left"}.get(side, side)
    return f"{side}+{rest}" if rest else side


def _row_positions(cfg: WorldConfig, frame: TrackFrame, lateral: float, rng: np.random.Generator):
    """Plant stations along one row, spaced by ``plant_distance`` of row arc length."""
    k = cfg.curvature
    scale = 1.0 - k * lateral  # row arc length per unit centerline arc length
    s_lo, s_hi = -cfg.margin_behind, cfg.track_length + cfg.margin_ahead
    sigma = np.arange(s_lo * scale, s_hi * scale + 1e-9, cfg.plant_distance)
    sigma = sigma + rng.uniform(-JITTER_FRACTION, JITTER_FRACTION, sigma.size) * cfg.plant_distance
    s = sigma / scale
    x, y, heading = frame.to_world(s, np.full_like(s, lateral))
    return s, np.column_stack([x, y]), heading


def _vine(x, y, heading, height, cfg):
    trunk_top = 0.5 * height
    foliage_h = 0.55 * height / 2.0
    return [
        Cylinder(x, y, 0.0, trunk_top, 0.05, rounded=True),
        Ellipsoid((x, y, height - foliage_h), (0.62 * cfg.plant_distance, 0.25, foliage_h), yaw=heading),
    ]


def _pear(x, y, heading, height, cfg):
    return [
        Cylinder(x, y, 0.0, 1.3, 0.08),
        Ellipsoid((x, y, 1.75), (0.6, 0.55, 0.6)),
        Ellipsoid((x, y, height - 0.45), (0.45, 0.45, 0.45)),
    ]


def _high_tree(x, y, heading, height, cfg):
    # crown radius forces neighbouring canopies across the row to merge overhead
    r = cfg.row_distance / 2.0 + 0.5
    top = height - r
    # lowest branches hang about a metre above ground
    low = r + 0.08 * height
    return [
        Cylinder(x, y, 0.0, low, 0.25),
        Ellipsoid((x, y, low), (r, r, r)),
        Ellipsoid((x, y, top), (r, r, r)),
    ]


def generate_world(cfg: WorldConfig) -> World:
    """Build a deterministic world for ``cfg`` (plants on two rows, plus crop extras)."""
    rng = np.random.default_rng(cfg.jitter_seed)
    frame = TrackFrame(cfg.curvature)
    half = cfg.row_distance / 2.0
    builder = {
        Crop.COMMON_VINEYARD: _vine,
        Crop.PERGOLA_VINEYARD: _vine,
        Crop.PEAR_FIELD: _pear,
        Crop.HIGH_TREES_FIELD: _high_tree,
    }[cfg.crop]

    prims: list = []
    rows = {}
    laterals = [("left", half), ("right", -half)]
    for k in range(1, cfg.neighbor_rows + 1):
        laterals += [(f"left+{k}", half + k * cfg.row_distance), (f"right+{k}", -half - k * cfg.row_distance)]
    for name, lateral in laterals:
        if cfg.curvature != 0 and abs(1.0 / cfg.curvature) <= abs(lateral):
            continue
        s, xy, heading = _row_positions(cfg, frame, lateral, rng)
        rows[name] = xy
        for (x, y), hd in zip(xy, heading):
            prims.extend(builder(float(x), float(y), float(hd), cfg.plant_height, cfg))

    corridor = (rows["left"], rows["right"])
    offset = 0.0
    if cfg.crop is Crop.PERGOLA_VINEYARD:
        edge = half - PERGOLA_COVER * cfg.row_distance
        for k in range(-cfg.neighbor_rows, cfg.neighbor_rows + 1):
            prims.extend(_pergola_slab(cfg, frame, edge + k * cfg.row_distance, half + k * cfg.row_distance))
        s_edge = np.arange(-cfg.margin_behind, cfg.track_length + cfg.margin_ahead + 1e-9, 0.5)
        ex, ey, _ = frame.to_world(s_edge, np.full_like(s_edge, edge))
        corridor = (np.column_stack([ex, ey]), rows["right"])
        offset = 0.5 * (edge - half)

    terrain = Terrain.random(cfg.terrain_roughness, rng) if cfg.terrain_roughness > 0 else Terrain()
    return World(cfg, frame, prims, rows, corridor, offset, terrain)


def _pergola_slab(cfg: WorldConfig, frame: TrackFrame, l_lo: float, l_hi: float, tile: float = 1.5) -> list:
    """Horizontal canopy tiles covering lateral band ``[l_lo, l_hi]`` at plant height."""
    z = cfg.plant_height - PERGOLA_SLAB_THICKNESS / 2.0
    l_mid = 0.5 * (l_lo + l_hi)
    scale = 1.0 - cfg.curvature * l_mid
    out = []
    s = -cfg.margin_behind + tile / 2.0
    while s < cfg.track_length + cfg.margin_ahead:
        x, y, hd = frame.to_world(s, l_mid)
        out.append(
            Box(
                (float(x), float(y), z),
                (tile * scale / 2.0 + 0.02, (l_hi - l_lo) / 2.0, PERGOLA_SLAB_THICKNESS / 2.0),
                yaw=float(hd),
            )
        )
        s += tile
    return out


# ---------------------------------------------------------------------------
# Ground truth


def _resample(poly: np.ndarray, n: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    u = np.linspace(0.0, arc[-1], n)
    return np.column_stack([np.interp(u, arc, poly[:, 0]), np.interp(u, arc, poly[:, 1])])


def _length(poly: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(poly, axis=0), axis=1).sum())


def midline(left: np.ndarray, right: np.ndarray, step: float = 0.1) -> np.ndarray:
    """Pointwise mean of two polylines resampled at equal normalized arc length."""
    n = int(math.ceil(max(_length(left), _length(right)) / step)) + 1
    n = max(n, 2)
    return 0.5 * (_resample(np.asarray(left, float), n) + _resample(np.asarray(right, float), n))


def ground_truth_centerline(world: World, step: float = 0.1) -> np.ndarray:
    """Reference path: mean of the interpolated corridor boundaries, sampled every <= ``step`` m."""
    left, right = world.corridor
    if len(left) < 2 or len(right) < 2:
        raise WorldError("both corridor boundaries need at least two points")
    return midline(left, right, step)
