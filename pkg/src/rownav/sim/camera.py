"""Pinhole RGB-D surrogate: raycasts world primitives into a depth map and
an oracle vegetation mask."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from ..perception import NO_RETURN
from . import _raykernel
from .kinematics import RobotPose
from .world import Box, Cylinder, Ellipsoid, World

_EPS = 1e-9


@dataclass(frozen=True)
class CameraModel:
    width: int = 224
    height: int = 224
    hfov_deg: float = 87.0
    vfov_deg: float = 58.0
    max_range: float = 12.0
    mount_forward: float = 0.20
    mount_height: float = 0.40
    tilt_deg: float = 15.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        for name in ("hfov_deg", "vfov_deg"):
            if not 0 < getattr(self, name) < 180:
                raise ValueError(f"{name} must be in (0, 180)")
        if not self.max_range > 0:
            raise ValueError("max_range must be > 0")

    @property
    def fx(self) -> float:
        return (self.width / 2) / math.tan(math.radians(self.hfov_deg) / 2)

    @property
    def fy(self) -> float:
        return (self.height / 2) / math.tan(math.radians(self.vfov_deg) / 2)

    @cached_property
    def directions(self) -> np.ndarray:
        """Unit ray directions per pixel in the camera body frame (x fwd, y left, z up)."""
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        uu, vv = np.meshgrid(u, v)
        d = np.stack(
            [np.ones_like(uu), -(uu - self.width / 2) / self.fx, -(vv - self.height / 2) / self.fy],
            axis=-1,
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, pts_cam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Camera-frame points -> continuous pixel coordinates (column, row)."""
        x = pts_cam[..., 0]
        col = self.width / 2 - self.fx * pts_cam[..., 1] / x
        row = self.height / 2 - self.fy * pts_cam[..., 2] / x
        return col, row


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _pitch_up(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _roll(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True)
class CameraPose:
    origin: np.ndarray  # (3,)
    rotation: np.ndarray  # (3, 3), columns = camera forward/left/up in world

    @property
    def pitch(self) -> float:
        """Elevation of the optical axis above the horizontal plane."""
        return math.asin(max(-1.0, min(1.0, float(self.rotation[2, 0]))))

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])


def camera_pose(pose: RobotPose, cam: CameraModel, pitch: float = 0.0, roll: float = 0.0) -> CameraPose:
    """Camera pose for a robot at ``pose`` whose body is tilted by terrain ``pitch``/``roll``."""
    body = _rot_z(pose.theta) @ _pitch_up(pitch) @ _roll(roll)
    origin = np.array([pose.x, pose.y, pose.z]) + body @ np.array([cam.mount_forward, 0.0, cam.mount_height])
    return CameraPose(origin, body @ _pitch_up(math.radians(cam.tilt_deg)))


@dataclass
class FrameObservation:
    mask: np.ndarray  # uint8 (h, w)
    depth: np.ndarray  # float64 (h, w), NO_RETURN where nothing was hit
    timestamp: float = 0.0


# ---------------------------------------------------------------------------
# Ray / primitive intersection. ``o`` is (3,), ``d`` is (..., 3) unit vectors.
# Each returns the nearest positive hit distance, ``inf`` on a miss.


def _quadratic_near(a, b, c):
    disc = b * b - 4 * a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(t0 > _EPS, t0, t1)
    return np.where(ok & (t > _EPS), t, np.inf)


def intersect_ellipsoid(p: Ellipsoid, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    inv = np.diag(1.0 / np.asarray(p.axes)) @ _rot_z(-p.yaw)
    oc = inv @ (o - np.asarray(p.center))
    dl = d @ inv.T
    a = np.einsum("...i,...i->...", dl, dl)
    b = 2 * (dl @ oc)
    c = float(oc @ oc) - 1.0
    return _quadratic_near(a, b, c)


def _sphere(center, r, o, d):
    oc = o - center
    b = 2 * (d @ oc)
    c = float(oc @ oc) - r * r
    return _quadratic_near(1.0, b, c)


def intersect_cylinder(p: Cylinder, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    ox, oy, oz = o[0] - p.x, o[1] - p.y, o[2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    a = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        side = _quadratic_near(np.where(a > 0, a, 1.0), 2 * (ox * dx + oy * dy), ox * ox + oy * oy - p.radius**2)
        side = np.where(a > 0, side, np.inf)
        z = oz + side * dz
        side = np.where((z >= p.z0) & (z <= p.z1), side, np.inf)
        if p.rounded:
            caps = _sphere(np.array([p.x, p.y, p.z1]), p.radius, o, d)
            if p.z0 > 0:  # a bottom cap resting on the ground is buried
                caps = np.minimum(caps, _sphere(np.array([p.x, p.y, p.z0]), p.radius, o, d))
        else:
            caps = np.full(dz.shape, np.inf)
            for zc in (p.z0, p.z1):
                t = (zc - oz) / dz
                hx, hy = ox + t * dx, oy + t * dy
                hit = (t > _EPS) & (hx * hx + hy * hy <= p.radius**2)
                caps = np.minimum(caps, np.where(hit, t, np.inf))
    return np.minimum(side, caps)


def intersect_box(p: Box, o: np.ndarray, d: np.ndarray) -> np.ndarray:
    rot = _rot_z(-p.yaw)
    ol = rot @ (o - np.asarray(p.center))
    dl = d @ rot.T
    half = np.asarray(p.half)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - ol) / dl
        t2 = (half - ol) / dl
    lo = np.nanmax(np.minimum(t1, t2), axis=-1)
    hi = np.nanmin(np.maximum(t1, t2), axis=-1)
    t = np.where(lo > _EPS, lo, hi)
    return np.where((hi >= lo) & (t > _EPS), t, np.inf)


_INTERSECT = {Ellipsoid: intersect_ellipsoid, Cylinder: intersect_cylinder, Box: intersect_box}

_CUBE = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
_EDGES = np.array([(a, a | bit) for a in range(8) for bit in (1, 2, 4) if not a & bit])
_NEAR = 1e-3


class _PrimitiveIndex:
    """Bounding spheres of a world's primitives, for culling."""

    def __init__(self, prims):
        self.prims = list(prims)
        self.centers = np.array([p.center for p in self.prims], dtype=float).reshape(-1, 3)
        self.radii = np.array([p.bound_radius for p in self.prims], dtype=float)
        self.half = np.array([p.half_extents for p in self.prims], dtype=float).reshape(-1, 3)
        self.packed = _raykernel.pack(self.prims)


_INDEX_CACHE: dict[int, tuple[list, _PrimitiveIndex]] = {}


def _index_for(world: World) -> _PrimitiveIndex:
    key = id(world.primitives)
    hit = _INDEX_CACHE.get(key)
    if hit is None or hit[0] is not world.primitives:
        if len(_INDEX_CACHE) > 16:
            _INDEX_CACHE.clear()
        hit = (world.primitives, _PrimitiveIndex(world.primitives))
        _INDEX_CACHE[key] = hit
    return hit[1]


def _pixel_windows(idx: _PrimitiveIndex, cand: np.ndarray, cp: CameraPose, cam: CameraModel):
    """Conservative pixel bounding boxes ``(r0, r1, c0, c1)`` for candidate primitives.

    Each primitive's world-aligned bounding box is clipped against a near
    plane in front of the camera and its surviving vertices projected.
    ``None`` marks primitives entirely behind the camera or off-frame.
    """
    corners = idx.centers[cand, None, :] + idx.half[cand, None, :] * _CUBE[None]
    pts = (corners - cp.origin) @ cp.rotation  # world -> camera body frame, (K, 8, 3)
    xa, xb = pts[:, _EDGES[:, 0], 0], pts[:, _EDGES[:, 1], 0]
    cross = (xa - _NEAR) * (xb - _NEAR) < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(cross, (_NEAR - xa) / (xb - xa), np.nan)
    clipped = pts[:, _EDGES[:, 0]] + f[..., None] * (pts[:, _EDGES[:, 1]] - pts[:, _EDGES[:, 0]])
    clipped[..., 0] = np.where(cross, _NEAR, np.nan)
    front = np.where((pts[..., 0] > _NEAR)[..., None], pts, np.nan)
    allpts = np.concatenate([front, clipped], axis=1)
    visible = ~np.isnan(allpts[..., 0]).all(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        col, row = cam.project(allpts)
    windows = []
    for k in range(cand.size):
        if not visible[k]:
            windows.append(None)
            continue
        c0 = max(0, int(math.floor(min(np.nanmin(col[k]), cam.width) - 0.5)))
        c1 = min(cam.width, int(math.ceil(max(np.nanmax(col[k]), 0.0) + 0.5)))
        r0 = max(0, int(math.floor(min(np.nanmin(row[k]), cam.height) - 0.5)))
        r1 = min(cam.height, int(math.ceil(max(np.nanmax(row[k]), 0.0) + 0.5)))
        windows.append((r0, r1, c0, c1) if (c1 > c0 and r1 > r0) else None)
    return windows


def render(
    world: World,
    cp: CameraPose,
    cam: CameraModel,
    timestamp: float = 0.0,
    depth_noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    backend: str = "compiled",
) -> FrameObservation:
    """Cast one ray per pixel; the nearest hit sets depth, vegetation hits set the mask.

    ``depth_noise`` is the sigma of an optional multiplicative Gaussian
    perturbation of returned depths (requires ``rng``). ``backend="numpy"``
    selects the pure-numpy reference path.
    """
    dirs = cam.directions @ cp.rotation.T
    o = cp.origin
    dz = dirs[..., 2]
    with np.errstate(divide="ignore"):
        ground = np.where(dz < -_EPS, -o[2] / dz, np.inf) if o[2] > 0 else np.full(dz.shape, np.inf)
    depth = np.ascontiguousarray(ground)
    veg = np.zeros(depth.shape, dtype=np.bool_)

    idx = _index_for(world)
    if idx.radii.size:
        rel = idx.centers - o
        dist = np.linalg.norm(rel, axis=1)
        fwd = rel @ cp.rotation[:, 0]
        near = dist - idx.radii
        cand = np.flatnonzero((near < cam.max_range) & (fwd > -idx.radii))
        cand = cand[np.argsort(near[cand], kind="stable")]  # front to back
        wins = _pixel_windows(idx, cand, cp, cam)
        keep = [n for n, w in enumerate(wins) if w is not None]
        order = cand[keep]
        windows = np.array([wins[n] for n in keep], dtype=np.int64).reshape(-1, 4)
        if backend == "compiled":
            _raykernel.raycast(
                o, np.ascontiguousarray(dirs), idx.packed, order, windows, np.maximum(near[order], 0.0), depth, veg
            )
        elif backend == "numpy":
            for k, (r0, r1, c0, c1) in zip(order, windows):
                p = idx.prims[k]
                t = _INTERSECT[type(p)](p, o, dirs[r0:r1, c0:c1])
                cur = depth[r0:r1, c0:c1]
                closer = t < cur
                if closer.any():
                    cur[closer] = t[closer]
                    veg[r0:r1, c0:c1][closer] = p.vegetation
        else:
            raise ValueError(f"unknown backend {backend!r}")

    far = depth > cam.max_range
    if depth_noise > 0:
        if rng is None:
            raise ValueError("depth_noise requires an rng")
        depth = depth * (1.0 + depth_noise * rng.standard_normal(depth.shape))
        depth = np.maximum(depth, 0.0)
    depth = np.where(far, NO_RETURN, depth)
    veg &= ~far
    return FrameObservation(veg.astype(np.uint8), depth, timestamp)
