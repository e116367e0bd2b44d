"""Middlebury ``.flo`` serialisation and colour-wheel flow rendering.

Arrays here are numpy (H, W, 2) with u in channel 0 and v in channel 1.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import numpy as np

FLO_MAGIC = 202021.25


def write_flo(path: Union[str, Path], flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype="<f4")
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w, _ = flow.shape
    with open(path, "wb") as f:
        np.array([FLO_MAGIC], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        flow.tofile(f)


def read_flo(path: Union[str, Path]) -> np.ndarray:
    with open(path, "rb") as f:
        magic = np.fromfile(f, "<f4", count=1)
        if magic.size != 1 or magic[0] != FLO_MAGIC:
            raise ValueError(f"{path}: not a .flo file (bad magic)")
        w, h = (int(v) for v in np.fromfile(f, "<i4", count=2))
        data = np.fromfile(f, "<f4", count=2 * w * h)
    if data.size != 2 * w * h:
        raise ValueError(f"{path}: truncated flow payload")
    return data.reshape(h, w, 2)


def make_colorwheel() -> np.ndarray:
    """The 55-entry RGB colour wheel of Baker et al. (Middlebury)."""
    segments = [("RY", 15), ("YG", 6), ("GC", 4), ("CB", 11), ("BM", 13), ("MR", 6)]
    wheel = np.zeros((sum(n for _, n in segments), 3))
    col = 0
    for name, n in segments:
        ramp = np.floor(255 * np.arange(n) / n)
        if name == "RY":
            wheel[col : col + n, 0] = 255
            wheel[col : col + n, 1] = ramp
        elif name == "YG":
            wheel[col : col + n, 0] = 255 - ramp
            wheel[col : col + n, 1] = 255
        elif name == "GC":
            wheel[col : col + n, 1] = 255
            wheel[col : col + n, 2] = ramp
        elif name == "CB":
            wheel[col : col + n, 1] = 255 - ramp
            wheel[col : col + n, 2] = 255
        elif name == "BM":
            wheel[col : col + n, 2] = 255
            wheel[col : col + n, 0] = ramp
        else:
            wheel[col : col + n, 2] = 255 - ramp
            wheel[col : col + n, 0] = 255
        col += n
    return wheel


def flow_to_color(flow: np.ndarray, max_radius: Optional[float] = None) -> np.ndarray:
    """Render a flow field as an 8-bit RGB image.

    Hue encodes direction and saturation encodes magnitude relative to
    ``max_radius`` (defaults to the field's largest magnitude). Zero flow is white.
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    rad = np.hypot(u, v)
    if max_radius is None:
        max_radius = float(rad.max())
    norm = max(max_radius, 1e-12)
    u, v, rad = u / norm, v / norm, rad / norm

    wheel = make_colorwheel()
    ncols = len(wheel)
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    inside = (rad <= 1)[..., None]
    col = np.where(inside, 1 - rad[..., None] * (1 - col), col * 0.75)
    return np.floor(255 * col).astype(np.uint8)
