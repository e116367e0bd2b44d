"""Joint flow + reconstruction model operating on a window of N LR frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import torch
import torch.nn as nn

from .flow_ops import PyramidFlows, build_draft_cube, space_to_depth_flow
from .ofrnet import OFRnet, OfrConfig
from .srnet import SRnet, SrConfig


@dataclass(frozen=True)
class ModelConfig:
    scale: int = 4
    n_frames: int = 3
    ofr: dict = field(default_factory=dict)
    sr: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_frames < 3 or self.n_frames % 2 == 0:
            raise ValueError(f"n_frames must be odd and >= 3, got {self.n_frames}")

    def ofr_config(self) -> OfrConfig:
        return OfrConfig.from_dict({**self.ofr, "scale": self.scale})

    def sr_config(self) -> SrConfig:
        return SrConfig.from_dict({**self.sr, "scale": self.scale, "n_frames": self.n_frames})

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "n_frames": self.n_frames,
            "ofr": self.ofr_config().to_dict(),
            "sr": self.sr_config().to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        ofr = {k: v for k, v in d.get("ofr", {}).items() if k != "scale"}
        sr = {k: v for k, v in d.get("sr", {}).items() if k not in ("scale", "n_frames")}
        return cls(scale=d.get("scale", 4), n_frames=d.get("n_frames", 3), ofr=ofr, sr=sr)


class ModelOutput(NamedTuple):
    sr: torch.Tensor
    flows: list[PyramidFlows]
    cube: torch.Tensor


class VideoSR(nn.Module):
    """Flow reconstruction, motion compensation and reconstruction in one module.

    ``forward`` takes a (B, N, H, W) LR window and returns the HR estimate of
    the central frame together with the flow pyramids ``F_{t->0}`` of every
    non-central frame ``t`` (in temporal order).
    """

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        self.ofrnet = OFRnet(config.ofr_config())
        self.srnet = SRnet(config.sr_config())

    @property
    def scale(self) -> int:
        return self.config.scale

    @property
    def n_frames(self) -> int:
        return self.config.n_frames

    def neighbor_indices(self) -> list[int]:
        c = self.n_frames // 2
        return [t for t in range(self.n_frames) if t != c]

    def forward(self, window: torch.Tensor) -> ModelOutput:
        if window.dim() != 4 or window.shape[1] != self.n_frames:
            raise ValueError(f"expected a (B, {self.n_frames}, H, W) window, got {tuple(window.shape)}")
        b = window.shape[0]
        c = self.n_frames // 2
        idx = self.neighbor_indices()
        center = window[:, c : c + 1]
        neighbors = [window[:, t : t + 1] for t in idx]

        # All pairs share one OFRnet pass along the batch axis.
        src = torch.cat(neighbors, dim=0)
        dst = center.repeat(len(idx), 1, 1, 1)
        pyr = self.ofrnet(src, dst)
        flows = [PyramidFlows(*(f[k * b : (k + 1) * b] for f in pyr)) for k in range(len(idx))]

        cubes = [space_to_depth_flow(f.hr, self.scale) for f in flows]
        cube = build_draft_cube(neighbors, cubes, center)
        return ModelOutput(self.srnet(cube), flows, cube)
