"""PSNR / SSIM / EPE evaluation and temporal profiles.

Frames are 2-D float arrays (luminance in [0, 1] unless ``peak`` says otherwise).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.ndimage import correlate1d

from . import flow_ops

INF_SENTINEL = "inf"


@dataclass(frozen=True)
class EvalProtocol:
    border_crop: int = 10
    exclude_frames: int = 2
    peak: float = 1.0

    @classmethod
    def for_scale(cls, s: int, **kwargs) -> "EvalProtocol":
        return cls(border_crop=6 + s, **kwargs)

    def __post_init__(self):
        if self.border_crop < 0 or self.exclude_frames < 0:
            raise ValueError("border_crop and exclude_frames must be non-negative")


def crop_border(img: np.ndarray, crop: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if crop == 0:
        return img
    h, w = img.shape[:2]
    if 2 * crop >= h or 2 * crop >= w:
        raise ValueError(f"border crop {crop} leaves nothing of a {h}x{w} frame")
    return img[crop : h - crop, crop : w - crop]


def _pair(a, b, crop):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return crop_border(a, crop), crop_border(b, crop)


def psnr(a: np.ndarray, b: np.ndarray, crop: int = 0, peak: float = 1.0) -> float:
    """Returns ``math.inf`` for identical inputs."""
    a, b = _pair(a, b, crop)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = correlate1d(correlate1d(img, g, axis=0, mode="nearest"), g, axis=1, mode="nearest")
    return out[r : img.shape[0] - r, r : img.shape[1] - r]


def ssim_map(
    a: np.ndarray,
    b: np.ndarray,
    peak: float = 1.0,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> np.ndarray:
    """Local SSIM over every fully-contained Gaussian window ('valid' region)."""
    if min(a.shape) < window:
        raise ValueError(f"region {a.shape} is smaller than the {window}x{window} SSIM window")
    g = gaussian_window(window, sigma)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, crop: int = 0, peak: float = 1.0) -> float:
    a, b = _pair(a, b, crop)
    return float(ssim_map(a, b, peak).mean())


def flow_epe(estimate: np.ndarray, reference: np.ndarray, crop: int = 0) -> float:
    """EPE of two (H, W, 2) numpy flows."""
    est = torch.as_tensor(np.asarray(estimate, dtype=np.float64)).permute(2, 0, 1)[None]
    ref = torch.as_tensor(np.asarray(reference, dtype=np.float64)).permute(2, 0, 1)[None]
    return float(flow_ops.epe(est, ref, crop))


def _fmt(v: float):
    return INF_SENTINEL if math.isinf(v) else v


@dataclass
class SequenceReport:
    name: str
    frames: list[dict] = field(default_factory=list)
    mean_psnr: float = math.nan
    mean_ssim: float = math.nan
    mean_epe: Optional[dict] = None

    def to_record(self) -> dict:
        rec = {
            "sequence": self.name,
            "n_scored": len(self.frames),
            "mean_psnr": _fmt(self.mean_psnr),
            "mean_ssim": self.mean_ssim,
            "frames": [{**f, "psnr": _fmt(f["psnr"])} for f in self.frames],
        }
        if self.mean_epe is not None:
            rec["mean_epe"] = self.mean_epe
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record())


def evaluate_sequence(
    sr_frames: Sequence[np.ndarray],
    hr_frames: Sequence[np.ndarray],
    protocol: EvalProtocol = EvalProtocol(),
    name: str = "sequence",
) -> SequenceReport:
    """Score every frame except the first and last ``protocol.exclude_frames``."""
    if len(sr_frames) != len(hr_frames):
        raise ValueError(f"{len(sr_frames)} SR frames vs {len(hr_frames)} HR frames")
    e = protocol.exclude_frames
    indices = range(e, len(sr_frames) - e)
    if not indices:
        raise ValueError(f"a {len(sr_frames)}-frame sequence has no frames left after exclusion")
    report = SequenceReport(name)
    for t in indices:
        p = psnr(sr_frames[t], hr_frames[t], protocol.border_crop, protocol.peak)
        q = ssim(sr_frames[t], hr_frames[t], protocol.border_crop, protocol.peak)
        report.frames.append({"index": t, "psnr": p, "ssim": q})
    report.mean_psnr = float(np.mean([f["psnr"] for f in report.frames]))
    report.mean_ssim = float(np.mean([f["ssim"] for f in report.frames]))
    return report


def format_table(reports: Sequence[SequenceReport]) -> str:
    lines = [f"{'sequence':<20} {'frames':>6} {'PSNR':>8} {'SSIM':>7}"]
    for r in reports:
        p = "inf" if math.isinf(r.mean_psnr) else f"{r.mean_psnr:.2f}"
        lines.append(f"{r.name:<20} {len(r.frames):>6} {p:>8} {r.mean_ssim:>7.4f}")
    if len(reports) > 1:
        mp = float(np.mean([r.mean_psnr for r in reports]))
        ms = float(np.mean([r.mean_ssim for r in reports]))
        p = "inf" if math.isinf(mp) else f"{mp:.2f}"
        lines.append(f"{'average':<20} {'':>6} {p:>8} {ms:>7.4f}")
    return "\n".join(lines)


def temporal_profile(frames: Sequence[np.ndarray], axis: str = "row", index: int = 0) -> np.ndarray:
    """Stack one row (or column) of every frame into a (T, width) image."""
    if len(frames) < 2:
        raise ValueError("a temporal profile needs at least 2 frames")
    stack = np.stack([np.asarray(f) for f in frames])
    if axis == "row":
        limit = stack.shape[1]
    elif axis == "column":
        limit = stack.shape[2]
    else:
        raise ValueError(f"axis must be 'row' or 'column', got {axis!r}")
    if not 0 <= index < limit:
        raise ValueError(f"{axis} index {index} out of range [0, {limit})")
    return stack[:, index] if axis == "row" else stack[:, :, index]
