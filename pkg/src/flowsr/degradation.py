"""LR frame synthesis (BI / BD models), luminance conversion and sample assembly."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

logger = logging.getLogger(__name__)

# BT.601 limited-range transform in the [0,1] <-> [0,255] convention of Matlab's rgb2ycbcr.
_YCBCR_MATRIX = np.array(
    [
        [65.481, 128.553, 24.966],
        [-37.797, -74.203, 112.0],
        [112.0, -93.786, -18.214],
    ]
)
_YCBCR_OFFSET = np.array([16.0, 128.0, 128.0])


class DegradationModel(str, enum.Enum):
    BI = "bi"
    BD = "bd"


@dataclass(frozen=True)
class DegradationSpec:
    model: DegradationModel = DegradationModel.BI
    scale: int = 4
    gaussian_sigma: float = 1.6
    kernel_size: int = 13
    phase: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", DegradationModel(self.model))
        if self.scale < 2:
            raise ValueError(f"scale must be >= 2, got {self.scale}")
        if self.model is DegradationModel.BD:
            if self.kernel_size < 3 or self.kernel_size % 2 == 0:
                raise ValueError(f"BD kernel_size must be odd and >= 3, got {self.kernel_size}")
            if self.gaussian_sigma <= 0:
                raise ValueError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
            if not 0 <= self.phase < self.scale:
                raise ValueError(f"phase must lie in [0, scale), got {self.phase}")

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "scale": self.scale,
            "gaussian_sigma": self.gaussian_sigma,
            "kernel_size": self.kernel_size,
            "phase": self.phase,
        }


# ---------------------------------------------------------------------------
# Bicubic resampling (Matlab imresize convention)
# ---------------------------------------------------------------------------


def cubic_kernel(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax <= 2, far, 0.0))


def resize_weights(in_len: int, out_len: int, antialias: bool = True) -> np.ndarray:
    """Dense (out_len, in_len) bicubic resampling matrix.

    Follows imresize: pixel-centre alignment, kernel stretched by 1/scale when
    shrinking (antialiasing), symmetric boundary extension, rows normalised to 1.
    """
    scale = out_len / in_len
    width = 4.0
    if scale < 1 and antialias:
        width = width / scale

        def kernel(t):
            return scale * cubic_kernel(scale * t)
    else:
        kernel = cubic_kernel

    out_idx = np.arange(1, out_len + 1, dtype=np.float64)
    centres = out_idx / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(centres - width / 2)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = kernel(centres[:, None] - idx)
    w = w / w.sum(axis=1, keepdims=True)

    # Mirror out-of-range taps back into [1, in_len].
    mirror = np.concatenate([np.arange(1, in_len + 1), np.arange(in_len, 0, -1)])
    src = mirror[np.mod(idx.astype(np.int64) - 1, 2 * in_len)] - 1

    mat = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(mat, (rows, src.ravel()), w.ravel())
    return mat


def imresize(img: np.ndarray, out_hw: tuple[int, int], antialias: bool = True) -> np.ndarray:
    """Bicubic resize of an (H, W) or (H, W, C) float array. No clamping."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    wh = resize_weights(h, out_hw[0], antialias)
    ww = resize_weights(w, out_hw[1], antialias)
    out = np.tensordot(wh, img, axes=(1, 0))
    out = np.tensordot(ww, out, axes=(1, 1)).swapaxes(0, 1)
    return out


def _check_divisible(shape: tuple[int, ...], s: int) -> None:
    h, w = shape[:2]
    if h % s or w % s:
        raise ValueError(f"frame size {h}x{w} is not divisible by scale {s}")


def degrade_bi(hr: np.ndarray, s: int) -> np.ndarray:
    """Bicubic (antialiased) downsampling by ``s``, clamped to [0, 1]."""
    hr = np.asarray(hr, dtype=np.float64)
    _check_divisible(hr.shape, s)
    out = imresize(hr, (hr.shape[0] // s, hr.shape[1] // s))
    return np.clip(out, 0.0, 1.0)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def degrade_bd(hr: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Gaussian blur then keep every s-th pixel starting at ``spec.phase``."""
    if spec.model is not DegradationModel.BD:
        raise ValueError("degrade_bd requires a BD degradation spec")
    hr = np.asarray(hr, dtype=np.float64)
    s = spec.scale
    _check_divisible(hr.shape, s)
    k = gaussian_kernel(spec.kernel_size, spec.gaussian_sigma)
    r = spec.kernel_size // 2
    pad = [(r, r), (r, r)] + [(0, 0)] * (hr.ndim - 2)
    padded = np.pad(hr, pad, mode="symmetric")
    h, w = hr.shape[:2]
    ys = spec.phase + s * np.arange(h // s)
    xs = spec.phase + s * np.arange(w // s)
    out = np.zeros((len(ys), len(xs)) + hr.shape[2:])
    # Only the kept lattice is evaluated; the kernel is symmetric so correlation == convolution.
    for dy in range(spec.kernel_size):
        rows = padded[ys + dy]
        for dx in range(spec.kernel_size):
            out += k[dy, dx] * rows[:, xs + dx]
    return np.clip(out, 0.0, 1.0)


def degrade(hr: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    if spec.model is DegradationModel.BI:
        return degrade_bi(hr, spec.scale)
    return degrade_bd(hr, spec)


def crop_to_multiple(frame: np.ndarray, s: int) -> np.ndarray:
    """Centre-crop so both spatial dims are divisible by ``s``."""
    h, w = frame.shape[:2]
    nh, nw = h - h % s, w - w % s
    if (nh, nw) == (h, w):
        return frame
    logger.warning("cropping %dx%d frame to %dx%d (scale %d)", h, w, nh, nw, s)
    top, left = (h - nh) // 2, (w - nw) // 2
    return frame[top : top + nh, left : left + nw]


# ---------------------------------------------------------------------------
# Colour
# ---------------------------------------------------------------------------


def _check_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim < 1 or rgb.shape[-1] != 3:
        raise ValueError(f"expected 3 channels in the last axis, got shape {rgb.shape}")
    if rgb.size and (rgb.min() < 0.0 or rgb.max() > 1.0):
        raise ValueError("RGB values must lie in [0, 1]")
    return rgb


def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    rgb = _check_rgb(rgb)
    return (rgb @ _YCBCR_MATRIX.T + _YCBCR_OFFSET) / 255.0


def rgb_to_luminance(rgb: np.ndarray) -> np.ndarray:
    rgb = _check_rgb(rgb)
    return (16.0 + rgb @ _YCBCR_MATRIX[0]) / 255.0


def ycbcr_to_rgb(ycbcr: np.ndarray) -> np.ndarray:
    ycbcr = np.asarray(ycbcr, dtype=np.float64)
    inv = np.linalg.inv(_YCBCR_MATRIX)
    return (ycbcr * 255.0 - _YCBCR_OFFSET) @ inv.T


# ---------------------------------------------------------------------------
# Training samples
# ---------------------------------------------------------------------------


@dataclass
class Clip:
    """Aligned LR / HR luminance frames of one sequence, shapes (T, H, W) and (T, sH, sW)."""

    name: str
    lr: np.ndarray
    hr: np.ndarray
    scale: int

    def __post_init__(self):
        if self.lr.ndim != 3 or self.hr.ndim != 3 or len(self.lr) != len(self.hr):
            raise ValueError("clip frames must be (T, H, W) stacks of equal length")
        _, h, w = self.lr.shape
        if self.hr.shape[1:] != (h * self.scale, w * self.scale):
            raise ValueError(
                f"HR frames {self.hr.shape[1:]} are not {self.scale}x the LR frames {(h, w)}"
            )

    def __len__(self):
        return len(self.lr)


@dataclass
class SampleConfig:
    n_frames: int = 3
    patch: int = 32
    augment: bool = True

    def __post_init__(self):
        if self.n_frames < 1 or self.n_frames % 2 == 0:
            raise ValueError(f"n_frames must be a positive odd number, got {self.n_frames}")


@dataclass
class TrainingSample:
    """N consecutive LR patches plus the co-located HR patches.

    HR patches of every frame are kept (not only the centre) because the
    top pyramid level of the flow loss warps HR neighbours.
    """

    lr_frames: np.ndarray
    hr_frames: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def hr_center(self) -> np.ndarray:
        return self.hr_frames[len(self.hr_frames) // 2]

    @property
    def lr_center(self) -> np.ndarray:
        return self.lr_frames[len(self.lr_frames) // 2]


def dihedral(arr: np.ndarray, k: int) -> np.ndarray:
    """Element ``k`` of the order-8 dihedral group acting on the last two axes.

    k % 4 counter-clockwise quarter turns, followed by a left-right flip when k >= 4.
    """
    if not 0 <= k < 8:
        raise ValueError(f"dihedral element must be in [0, 8), got {k}")
    out = np.rot90(arr, k % 4, axes=(-2, -1))
    if k >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def augment(sample: TrainingSample, rng: np.random.Generator, element: Optional[int] = None) -> TrainingSample:
    k = int(rng.integers(8)) if element is None else element
    prov = dict(sample.provenance, augmentation=k)
    return TrainingSample(dihedral(sample.lr_frames, k), dihedral(sample.hr_frames, k), prov)


def sample_training_example(
    clip: Clip, rng: np.random.Generator, config: SampleConfig = SampleConfig()
) -> TrainingSample:
    n, p, s = config.n_frames, config.patch, clip.scale
    if len(clip) < n:
        raise ValueError(f"clip {clip.name!r} has {len(clip)} frames, need at least {n}")
    _, h, w = clip.lr.shape
    if h < p or w < p:
        raise ValueError(f"clip {clip.name!r} ({h}x{w}) is smaller than the {p}x{p} patch")
    start = int(rng.integers(len(clip) - n + 1))
    y = int(rng.integers(h - p + 1))
    x = int(rng.integers(w - p + 1))
    lr = clip.lr[start : start + n, y : y + p, x : x + p]
    hr = clip.hr[start : start + n, s * y : s * (y + p), s * x : s * (x + p)]
    sample = TrainingSample(
        np.array(lr, dtype=np.float32),
        np.array(hr, dtype=np.float32),
        {"clip": clip.name, "frame": start + n // 2, "offset": (y, x), "augmentation": 0},
    )
    if config.augment:
        sample = augment(sample, rng)
    return sample
