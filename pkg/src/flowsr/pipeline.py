"""Whole-clip inference, colour recombination and flow-accuracy studies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .degradation import imresize, ycbcr_to_rgb
from .flow_ops import PyramidFlows, epe, upsample_flow
from .model import VideoSR


@dataclass
class SrResult:
    frames: list[np.ndarray]
    color: Optional[list[np.ndarray]] = None
    flows: Optional[list[list[PyramidFlows]]] = None
    provenance: dict = field(default_factory=dict)


def window_indices(t: int, length: int, n_frames: int) -> list[int]:
    """Indices ``t-T .. t+T`` with edge replication at the clip boundaries."""
    half = n_frames // 2
    return [min(max(k, 0), length - 1) for k in range(t - half, t + half + 1)]


def _pad_even(x: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
    h, w = x.shape[-2:]
    ph, pw = h % 2, w % 2
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    return x, (h, w)


@torch.no_grad()
def super_resolve_clip(
    lr_frames: Sequence[np.ndarray],
    model: VideoSR,
    s: Optional[int] = None,
    n_frames: Optional[int] = None,
    batch_size: int = 1,
    keep_flows: bool = False,
) -> SrResult:
    """Super-resolve every frame of a luminance clip (list of (H, W) arrays).

    Odd frame sizes are edge-padded to even for the flow pyramid and the
    outputs cropped back to ``s`` times the input size.
    """
    if s is not None and s != model.scale:
        raise ValueError(f"requested scale {s} but the model was built for x{model.scale}")
    if n_frames is not None and n_frames != model.n_frames:
        raise ValueError(f"requested {n_frames}-frame windows but the model uses {model.n_frames}")
    if len(lr_frames) < 1:
        raise ValueError("empty clip")
    model.eval()
    dtype = next(model.parameters()).dtype
    clip = torch.as_tensor(np.stack(lr_frames), dtype=dtype)
    clip, (h, w) = _pad_even(clip)
    scale, length = model.scale, len(lr_frames)
    frames: list[np.ndarray] = []
    flows: list[list[PyramidFlows]] = []
    for start in range(0, length, batch_size):
        ts = range(start, min(start + batch_size, length))
        windows = torch.stack([clip[window_indices(t, length, model.n_frames)] for t in ts])
        out = model(windows)
        for k in range(len(ts)):
            frames.append(out.sr[k, 0, : h * scale, : w * scale].numpy().astype(np.float64))
            if keep_flows:
                flows.append([PyramidFlows(*(f[k : k + 1] for f in p)) for p in out.flows])
    return SrResult(frames, flows=flows if keep_flows else None,
                    provenance={"scale": scale, "n_frames": model.n_frames})


def bicubic_upscale(frame: np.ndarray, s: int) -> np.ndarray:
    h, w = frame.shape[:2]
    return imresize(frame, (h * s, w * s))


def recombine_color(sr_y: np.ndarray, lr_cb: np.ndarray, lr_cr: np.ndarray, s: int) -> np.ndarray:
    """Merge SR luminance with bicubic-upscaled LR chroma into RGB in [0, 1]."""
    if lr_cb.shape != lr_cr.shape or sr_y.shape != (lr_cb.shape[0] * s, lr_cb.shape[1] * s):
        raise ValueError(
            f"SR luminance {sr_y.shape} does not match {s}x chroma {lr_cb.shape}/{lr_cr.shape}"
        )
    cb = bicubic_upscale(lr_cb, s)
    cr = bicubic_upscale(lr_cr, s)
    rgb = ycbcr_to_rgb(np.stack([sr_y, cb, cr], axis=-1))
    return np.clip(rgb, 0.0, 1.0)


def _to_tensor(flow_hw2: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(flow_hw2, dtype=np.float64)).permute(2, 0, 1)[None]


@torch.no_grad()
def flow_study(
    lr_frames: Sequence[np.ndarray],
    model: VideoSR,
    gt_flows: Mapping[tuple[int, int], np.ndarray],
    s: Optional[int] = None,
    crop: int = 0,
) -> dict:
    """EPE of super-resolved vs bilinearly upsampled LR flows against HR ground truth.

    ``gt_flows`` maps a frame pair ``(i, j)`` to the HR backward flow
    ``F_{i->j}`` (H, W, 2) with ``warp(I_i, F) ~ I_j``.
    """
    if not gt_flows:
        raise ValueError("no ground-truth flows supplied")
    if s is not None and s != model.scale:
        raise ValueError(f"requested scale {s} but the model was built for x{model.scale}")
    model.eval()
    scale = model.scale
    dtype = next(model.parameters()).dtype
    per_pair = []
    for (i, j), gt in sorted(gt_flows.items()):
        if not (0 <= i < len(lr_frames) and 0 <= j < len(lr_frames)):
            raise ValueError(f"flow pair {(i, j)} is outside the {len(lr_frames)}-frame clip")
        pair = torch.as_tensor(np.stack([lr_frames[i], lr_frames[j]]), dtype=dtype)[:, None]
        pair, (h, w) = _pad_even(pair)
        pyr = model.ofrnet(pair[:1], pair[1:])
        f_hr = pyr.hr[..., : h * scale, : w * scale]
        f_up = upsample_flow(pyr.lr, scale)[..., : h * scale, : w * scale]
        ref = _to_tensor(gt).to(dtype)
        if ref.shape != f_hr.shape:
            raise ValueError(f"ground truth for {(i, j)} has shape {tuple(gt.shape)}, expected HR size")
        per_pair.append({
            "pair": [i, j],
            "super_resolved": float(epe(f_hr, ref, crop)),
            "upsampled": float(epe(f_up, ref, crop)),
        })
    return {
        "pairs": per_pair,
        "super_resolved": float(np.mean([p["super_resolved"] for p in per_pair])),
        "upsampled": float(np.mean([p["upsampled"] for p in per_pair])),
    }
