"""Differentiable flow primitives.

Tensors are NCHW. A flow field has two channels, horizontal displacement ``u``
first and vertical ``v`` second, expressed in pixels of its own resolution.
The backward-warping convention is used throughout: ``warp(I, F)(x) = I(x + F(x))``.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import torch
import torch.nn.functional as F


class PyramidFlows(NamedTuple):
    """Flows produced at the three pyramid levels (half-LR, LR and HR)."""

    ld: torch.Tensor
    lr: torch.Tensor
    hr: torch.Tensor


def _check_flow(flow: torch.Tensor) -> None:
    if flow.dim() != 4 or flow.shape[1] != 2:
        raise ValueError(f"flow must have shape (B, 2, H, W), got {tuple(flow.shape)}")


def warp(image: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinear backward warp with border clamping.

    Sampling positions are clamped to the image extent, so out-of-range
    samples repeat the edge pixel. Zero flow reproduces the input exactly.
    """
    _check_flow(flow)
    if image.dim() != 4 or image.shape[0] != flow.shape[0] or image.shape[2:] != flow.shape[2:]:
        raise ValueError(
            f"image {tuple(image.shape)} and flow {tuple(flow.shape)} must share batch and spatial size"
        )
    b, c, h, w = image.shape
    ys = torch.arange(h, dtype=flow.dtype, device=flow.device).view(1, h, 1)
    xs = torch.arange(w, dtype=flow.dtype, device=flow.device).view(1, 1, w)
    px = (xs + flow[:, 0]).clamp(0, w - 1)
    py = (ys + flow[:, 1]).clamp(0, h - 1)

    x0 = px.detach().floor()
    y0 = py.detach().floor()
    fx = (px - x0).unsqueeze(1)
    fy = (py - y0).unsqueeze(1)
    # NaN positions gather a valid pixel; the NaN weights still poison the output.
    x0 = torch.nan_to_num(x0, nan=0.0).long()
    y0 = torch.nan_to_num(y0, nan=0.0).long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = image.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).view(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).view(b, c, h, w)

    top = gather(y0, x0) * (1 - fx) + gather(y0, x1) * fx
    bottom = gather(y1, x0) * (1 - fx) + gather(y1, x1) * fx
    return top * (1 - fy) + bottom * fy


def space_to_depth_flow(flow_hr: torch.Tensor, s: int) -> torch.Tensor:
    """Fold an HR flow (B, 2, sH, sW) into an LR flow cube (B, 2s², H, W).

    Channel ``2k + c`` holds component ``c`` (u, v) of phase ``k = row * s + col``,
    i.e. the HR samples at ``(s*y + row, s*x + col)``. Values are divided by ``s``.
    """
    _check_flow(flow_hr)
    b, _, sh, sw = flow_hr.shape
    if sh % s or sw % s:
        raise ValueError(f"flow size {sh}x{sw} is not divisible by scale {s}")
    h, w = sh // s, sw // s
    cube = flow_hr.reshape(b, 2, h, s, w, s).permute(0, 3, 5, 1, 2, 4)
    return cube.reshape(b, 2 * s * s, h, w) / s


def depth_to_space_flow(cube: torch.Tensor, s: int) -> torch.Tensor:
    """Inverse of :func:`space_to_depth_flow` (values multiplied back by ``s``)."""
    b, c, h, w = cube.shape
    if c != 2 * s * s:
        raise ValueError(f"flow cube needs {2 * s * s} channels for scale {s}, got {c}")
    flow = cube.reshape(b, s, s, 2, h, w).permute(0, 3, 4, 1, 5, 2)
    return flow.reshape(b, 2, h * s, w * s) * s


def draft_cube_channels(s: int, n_neighbors: int = 2) -> list[tuple]:
    """Channel-order descriptor of :func:`build_draft_cube`.

    Entry ``("draft", n, row, col)`` is neighbour ``n`` warped by HR phase
    ``(row, col)``; the last entry ``("center",)`` is the central LR frame.
    """
    labels: list[tuple] = [
        ("draft", n, r, c) for n in range(n_neighbors) for r in range(s) for c in range(s)
    ]
    labels.append(("center",))
    return labels


def build_draft_cube(
    neighbors: Sequence[torch.Tensor], flow_cubes: Sequence[torch.Tensor], center: torch.Tensor
) -> torch.Tensor:
    """Warp every neighbour by each of its s² flow slices and append the centre frame."""
    if len(neighbors) != len(flow_cubes) or not neighbors:
        raise ValueError(
            f"got {len(neighbors)} neighbours but {len(flow_cubes)} flow cubes"
        )
    drafts = []
    for frame, cube in zip(neighbors, flow_cubes):
        b, c2, h, w = cube.shape
        if frame.shape != (b, 1, h, w) or center.shape != frame.shape:
            raise ValueError("neighbours, centre and flow cubes must share (B, 1, H, W) geometry")
        phases = c2 // 2
        flows = cube.reshape(b * phases, 2, h, w)
        images = frame.repeat_interleave(phases, dim=0)
        drafts.append(warp(images, flows).reshape(b, phases, h, w))
    return torch.cat(drafts + [center], dim=1)


def upsample_flow(flow: torch.Tensor, factor: int) -> torch.Tensor:
    """Bilinear (pixel-centre aligned) upsampling, displacements scaled by ``factor``."""
    _check_flow(flow)
    if int(factor) != factor or factor < 2:
        raise ValueError(f"upsampling factor must be an integer >= 2, got {factor}")
    up = F.interpolate(flow, scale_factor=factor, mode="bilinear", align_corners=False)
    return up * factor


def downsample_frame(frame: torch.Tensor) -> torch.Tensor:
    """2x2 average pooling used for the coarsest pyramid level."""
    if frame.shape[-2] % 2 or frame.shape[-1] % 2:
        raise ValueError(f"frame size {tuple(frame.shape[-2:])} must be even")
    return F.avg_pool2d(frame, 2)


def flow_smoothness(flow: torch.Tensor) -> torch.Tensor:
    """Sum of absolute forward differences of both components along both axes."""
    _check_flow(flow)
    if flow.shape[2] < 2 or flow.shape[3] < 2:
        raise ValueError("flow must be at least 2x2")
    dx = (flow[..., :, 1:] - flow[..., :, :-1]).abs().sum()
    dy = (flow[..., 1:, :] - flow[..., :-1, :]).abs().sum()
    return dx + dy


def epe(estimate: torch.Tensor, reference: torch.Tensor, crop: int = 0) -> torch.Tensor:
    """Mean end-point error; ``crop`` pixels are dropped from every border first."""
    _check_flow(estimate)
    if estimate.shape != reference.shape:
        raise ValueError(
            f"flows at different tiers: {tuple(estimate.shape)} vs {tuple(reference.shape)}"
        )
    diff = estimate - reference
    if crop:
        diff = diff[..., crop:-crop, crop:-crop]
        if diff.numel() == 0:
            raise ValueError("crop leaves no pixels")
    return diff.pow(2).sum(dim=1).sqrt().mean()
