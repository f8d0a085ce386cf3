"""PGM (portable graymap) I/O for masks and depth maps.

Masks are 8-bit with values {0, 255}. Depth maps are 16-bit millimeters;
0 encodes "no return".
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .perception import NO_RETURN

MAX_DEPTH_MM = 65535


class PGMError(ValueError):
    pass


def write_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    Image.fromarray((mask.astype(bool) * 255).astype(np.uint8), mode="L").save(Path(path), format="PPM")


def read_mask(path) -> np.ndarray:
    arr = _read(path)
    if arr.dtype != np.uint8 and arr.max(initial=0) > 255:
        raise PGMError(f"{path}: mask must be 8-bit")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 255)).all():
        raise PGMError(f"{path}: mask values must be 0 or 255, found {vals[:5].tolist()}")
    return (arr == 255).astype(np.uint8)


def write_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=float)
    mm = np.rint(depth * 1000.0)
    mm = np.where(depth >= NO_RETURN, 0, np.clip(mm, 1, MAX_DEPTH_MM))
    Image.fromarray(mm.astype(np.uint16)).save(Path(path), format="PPM")


def read_depth(path) -> np.ndarray:
    arr = _read(path).astype(float)
    return np.where(arr == 0, NO_RETURN, arr / 1000.0)


def _read(path) -> np.ndarray:
    try:
        with Image.open(Path(path)) as im:
            if im.format != "PPM" or im.mode not in ("L", "I", "I;16", "I;16B"):
                raise PGMError(f"{path}: not a grayscale PGM (format={im.format}, mode={im.mode})")
            arr = np.array(im)
    except PGMError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        # truncated pixel data surfaces as ValueError from the raw decoder
        raise PGMError(f"{path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise PGMError(f"{path}: expected a non-empty 2-D image")
    return arr
