"""Reconstruction network mapping a draft cube to the HR central frame."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import RdbConfig, ResidualDenseBlock, conv, init_weights, subpixel_upscale


@dataclass(frozen=True)
class SrConfig:
    scale: int = 4
    n_frames: int = 3
    channels: int = 64
    num_rdbs: int = 5
    rdb: RdbConfig = field(default_factory=lambda: RdbConfig(num_layers=5, growth=64, fusion_kernel=1))
    fusion_kernel: int = 1
    global_residual: bool = False

    @property
    def in_channels(self) -> int:
        return (self.n_frames - 1) * self.scale**2 + 1

    @classmethod
    def from_dict(cls, d: dict) -> "SrConfig":
        d = dict(d)
        if isinstance(d.get("rdb"), dict):
            d["rdb"] = RdbConfig(**d["rdb"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class SRnet(nn.Module):
    def __init__(self, config: SrConfig = SrConfig()):
        super().__init__()
        self.config = config
        c, s = config.channels, config.scale
        self.features = conv(config.in_channels, c, 3)
        self.rdbs = nn.ModuleList(ResidualDenseBlock(c, config.rdb) for _ in range(config.num_rdbs))
        self.fusion = conv(c * config.num_rdbs, c, config.fusion_kernel)
        self.head = conv(c, s * s, 3)
        init_weights(self)

    def forward(self, cube: torch.Tensor) -> torch.Tensor:
        if cube.dim() != 4 or cube.shape[1] != self.config.in_channels:
            raise ValueError(
                f"draft cube must have {self.config.in_channels} channels, got shape {tuple(cube.shape)}"
            )
        x = self.features(cube)
        outs = []
        for rdb in self.rdbs:
            x = rdb(x)
            outs.append(x)
        out = subpixel_upscale(self.head(self.fusion(torch.cat(outs, dim=1))), self.config.scale)
        if self.config.global_residual:
            center = cube[:, -1:]
            out = out + F.interpolate(center, scale_factor=self.config.scale, mode="bicubic", align_corners=False)
        return out
