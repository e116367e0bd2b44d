"""Pyramid-supervised flow loss, reconstruction MSE and their weighted sum."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import torch

from .flow_ops import PyramidFlows, downsample_frame, flow_smoothness, warp

REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.125
    lambda2: float = 0.25
    lambda3: float = 0.01
    lambda4: float = 0.01
    temporal_half_window: int = 1
    reduction: str = "mean"

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.temporal_half_window < 1:
            raise ValueError("temporal half window must be >= 1")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")

    @property
    def n_frames(self) -> int:
        return 2 * self.temporal_half_window + 1

    def to_dict(self) -> dict:
        return asdict(self)


class TierFrames(NamedTuple):
    """One frame at HR, LR and half-LR resolution, each (B, 1, h, w)."""

    hr: torch.Tensor
    lr: torch.Tensor
    ld: torch.Tensor

    @classmethod
    def from_lr_hr(cls, lr: torch.Tensor, hr: torch.Tensor) -> "TierFrames":
        return cls(hr, lr, downsample_frame(lr))


def loss_level(
    warp_source: torch.Tensor,
    flow: torch.Tensor,
    target: torch.Tensor,
    lambda3: float,
    reduction: str = "mean",
) -> torch.Tensor:
    """Photometric squared error of the warped source plus weighted flow smoothness.

    With ``reduction="mean"`` both terms are divided by the pixel count
    (batch x height x width); ``"sum"`` keeps the raw norms.
    """
    if warp_source.shape != target.shape or flow.shape[2:] != target.shape[2:]:
        raise ValueError(
            f"tier mismatch: source {tuple(warp_source.shape)}, flow {tuple(flow.shape)}, "
            f"target {tuple(target.shape)}"
        )
    sq = (warp(warp_source, flow) - target).pow(2)
    smooth = flow_smoothness(flow)
    if reduction == "sum":
        return sq.sum() + lambda3 * smooth
    if reduction != "mean":
        raise ValueError(f"unknown reduction {reduction!r}")
    b, _, h, w = flow.shape
    return sq.mean() + lambda3 * smooth / (b * h * w)


def level_terms(
    flows: PyramidFlows, source: TierFrames, center: TierFrames, weights: LossWeights
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Per-level losses ``(level1, level2, level3)`` of one branch ``F_{i->0}``."""
    for name in ("hr", "lr", "ld"):
        if getattr(source, name) is None or getattr(center, name) is None:
            raise ValueError(f"missing {name} frames for the flow loss")
    lam3, red = weights.lambda3, weights.reduction
    return (
        loss_level(source.ld, flows.ld, center.ld, lam3, red),
        loss_level(source.lr, flows.lr, center.lr, lam3, red),
        loss_level(source.hr, flows.hr, center.hr, lam3, red),
    )


def combine_levels(terms: Sequence[Sequence[torch.Tensor]], weights: LossWeights) -> torch.Tensor:
    """Average over branches of ``level3 + lambda2 * level2 + lambda1 * level1``."""
    if not terms:
        raise ValueError("no flow branches to combine")
    total = 0.0
    for l1, l2, l3 in terms:
        total = total + l3 + weights.lambda2 * l2 + weights.lambda1 * l1
    return total / len(terms)


def loss_ofr(
    pyramids: Sequence[PyramidFlows],
    sources: Sequence[TierFrames],
    center: TierFrames,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    if len(pyramids) != len(sources):
        raise ValueError(f"{len(pyramids)} flow pyramids but {len(sources)} source frames")
    if len(pyramids) != 2 * weights.temporal_half_window:
        raise ValueError(
            f"expected {2 * weights.temporal_half_window} branches, got {len(pyramids)}"
        )
    return combine_levels([level_terms(p, f, center, weights) for p, f in zip(pyramids, sources)], weights)


def loss_sr(sr: torch.Tensor, hr: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch: {tuple(sr.shape)} vs {tuple(hr.shape)}")
    sq = (sr - hr).pow(2)
    return sq.sum() if reduction == "sum" else sq.mean()


def loss_total(l_sr: torch.Tensor, l_ofr: torch.Tensor, lambda4: float = 0.01) -> torch.Tensor:
    return l_sr + lambda4 * l_ofr
