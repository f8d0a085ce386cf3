"""Compiled inner loop of the raycaster.

Mirrors the numpy intersection routines in :mod:`rownav.sim.camera`, which
serve as its reference in the tests. Primitives arrive packed one per row of
a float array (see ``pack``); rows are processed in order so the output does
not depend on scheduling.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

ELLIPSOID, CYLINDER, CAPSULE, BOX = 0, 1, 2, 3

# column layout of a packed primitive row
_T, _CX, _CY, _CZ, _A, _B, _C, _COS, _SIN, _Z0, _Z1, _R, _VEG = range(13)
N_FIELDS = 13

_EPS = 1e-9


def pack(prims) -> np.ndarray:
    from .world import Box, Cylinder, Ellipsoid

    out = np.zeros((len(prims), N_FIELDS))
    for k, p in enumerate(prims):
        row = out[k]
        row[_VEG] = 1.0 if p.vegetation else 0.0
        if isinstance(p, Ellipsoid):
            row[_T] = ELLIPSOID
            row[_CX:_CZ + 1] = p.center
            row[_A:_C + 1] = p.axes
            row[_COS], row[_SIN] = math.cos(p.yaw), math.sin(p.yaw)
        elif isinstance(p, Cylinder):
            row[_T] = CAPSULE if p.rounded else CYLINDER
            row[_CX], row[_CY] = p.x, p.y
            row[_Z0], row[_Z1], row[_R] = p.z0, p.z1, p.radius
        elif isinstance(p, Box):
            row[_T] = BOX
            row[_CX:_CZ + 1] = p.center
            row[_A:_C + 1] = p.half
            row[_COS], row[_SIN] = math.cos(p.yaw), math.sin(p.yaw)
        else:
            raise TypeError(f"unsupported primitive {type(p).__name__}")
    return out


@njit(cache=True, inline="always")
def _near_root(a, b, c):
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return np.inf
    sq = math.sqrt(disc)
    t = (-b - sq) / (2.0 * a)
    if t > _EPS:
        return t
    t = (-b + sq) / (2.0 * a)
    return t if t > _EPS else np.inf


@njit(cache=True)
def _sphere(cx, cy, cz, r, ox, oy, oz, dx, dy, dz):
    px, py, pz = ox - cx, oy - cy, oz - cz
    return _near_root(1.0, 2.0 * (px * dx + py * dy + pz * dz), px * px + py * py + pz * pz - r * r)


@njit(cache=True)
def _hit(p, ox, oy, oz, dx, dy, dz):
    kind = int(p[_T])
    if kind == ELLIPSOID or kind == BOX:
        c, s = p[_COS], p[_SIN]
        rx, ry = ox - p[_CX], oy - p[_CY]
        lox, loy, loz = c * rx + s * ry, -s * rx + c * ry, oz - p[_CZ]
        ldx, ldy, ldz = c * dx + s * dy, -s * dx + c * dy, dz
        if kind == ELLIPSOID:
            lox /= p[_A]
            loy /= p[_B]
            loz /= p[_C]
            ldx /= p[_A]
            ldy /= p[_B]
            ldz /= p[_C]
            a = ldx * ldx + ldy * ldy + ldz * ldz
            b = 2.0 * (lox * ldx + loy * ldy + loz * ldz)
            cc = lox * lox + loy * loy + loz * loz - 1.0
            return _near_root(a, b, cc)
        lo, hi = -np.inf, np.inf
        for o_, d_, h_ in ((lox, ldx, p[_A]), (loy, ldy, p[_B]), (loz, ldz, p[_C])):
            if d_ == 0.0:
                if o_ < -h_ or o_ > h_:
                    return np.inf
                continue
            t1 = (-h_ - o_) / d_
            t2 = (h_ - o_) / d_
            if t1 > t2:
                t1, t2 = t2, t1
            lo = max(lo, t1)
            hi = min(hi, t2)
        if hi < lo:
            return np.inf
        t = lo if lo > _EPS else hi
        return t if t > _EPS else np.inf

    # vertical cylinder / capsule
    px, py = ox - p[_CX], oy - p[_CY]
    r = p[_R]
    z0, z1 = p[_Z0], p[_Z1]
    best = np.inf
    a = dx * dx + dy * dy
    if a > 0.0:
        t = _near_root(a, 2.0 * (px * dx + py * dy), px * px + py * py - r * r)
        if t < np.inf:
            z = oz + t * dz
            if z >= z0 and z <= z1:
                best = t
    if kind == CAPSULE:
        t = _sphere(p[_CX], p[_CY], z1, r, ox, oy, oz, dx, dy, dz)
        best = min(best, t)
        if z0 > 0.0:
            best = min(best, _sphere(p[_CX], p[_CY], z0, r, ox, oy, oz, dx, dy, dz))
    elif dz != 0.0:
        for zc in (z0, z1):
            t = (zc - oz) / dz
            if t > _EPS:
                hx, hy = px + t * dx, py + t * dy
                if hx * hx + hy * hy <= r * r and t < best:
                    best = t
    return best


@njit(cache=True)
def raycast(origin, dirs, packed, order, windows, reach, depth, veg):
    """Update ``depth``/``veg`` in place with the nearest hits of ``packed[order]``.

    ``reach[n]`` is a lower bound on any hit distance of primitive ``n``;
    pixels already closer than that are skipped.
    """
    ox, oy, oz = origin[0], origin[1], origin[2]
    for n in range(order.shape[0]):
        p = packed[order[n]]
        is_veg = p[_VEG] > 0.5
        r0, r1, c0, c1 = windows[n, 0], windows[n, 1], windows[n, 2], windows[n, 3]
        lower = reach[n]
        for i in range(r0, r1):
            for j in range(c0, c1):
                if depth[i, j] <= lower:
                    continue
                t = _hit(p, ox, oy, oz, dirs[i, j, 0], dirs[i, j, 1], dirs[i, j, 2])
                if t < depth[i, j]:
                    depth[i, j] = t
                    veg[i, j] = is_veg
