"""Coarse-to-fine flow reconstruction network.

Given LR frames ``I_i`` and ``I_j`` it predicts backward flows ``F_{i->j}``
(so that ``warp(I_i, F) ~ I_j``) at half-LR, LR and HR resolution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .blocks import RdbConfig, ResidualDenseBlock, conv, init_weights, subpixel_upscale, zero_
from .flow_ops import PyramidFlows, downsample_frame, upsample_flow, warp


@dataclass(frozen=True)
class OfrConfig:
    scale: int = 4
    channels: int = 32
    num_rdbs: int = 2
    rdb: RdbConfig = field(default_factory=lambda: RdbConfig(num_layers=4, growth=32, fusion_kernel=3))
    fusion_kernel: int = 3
    head_kernel: int = 3
    level3_residual: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "OfrConfig":
        d = dict(d)
        if isinstance(d.get("rdb"), dict):
            d["rdb"] = RdbConfig(**d["rdb"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class FlowLevel(nn.Module):
    """Feature extraction, RDB chain, global fusion and an output head."""

    def __init__(self, in_ch: int, out_ch: int, config: OfrConfig):
        super().__init__()
        c = config.channels
        self.features = conv(in_ch, c, 3)
        self.rdbs = nn.ModuleList(ResidualDenseBlock(c, config.rdb) for _ in range(config.num_rdbs))
        self.fusion = conv(c * config.num_rdbs, c, config.fusion_kernel)
        self.head = conv(c, out_ch, config.head_kernel)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.features(x)
        outs = []
        for rdb in self.rdbs:
            x = rdb(x)
            outs.append(x)
        return self.head(self.fusion(torch.cat(outs, dim=1)))


class OFRnet(nn.Module):
    def __init__(self, config: OfrConfig = OfrConfig()):
        super().__init__()
        self.config = config
        s = config.scale
        self.level1_net = FlowLevel(2, 2, config)
        self.level2_net = FlowLevel(4, 2, config)
        self.level3_net = FlowLevel(4, 2 * s * s, config)
        init_weights(self)
        for net in (self.level1_net, self.level2_net, self.level3_net):
            zero_(net.head)

    @staticmethod
    def _check_pair(i: torch.Tensor, j: torch.Tensor) -> None:
        if i.shape != j.shape or i.dim() != 4 or i.shape[1] != 1:
            raise ValueError(f"frame pair must share shape (B, 1, H, W): {tuple(i.shape)} vs {tuple(j.shape)}")
        if i.shape[2] % 2 or i.shape[3] % 2:
            raise ValueError(f"LR frame size {tuple(i.shape[2:])} must be even")

    def level1(self, i: torch.Tensor, j: torch.Tensor) -> torch.Tensor:
        self._check_pair(i, j)
        x = torch.cat([downsample_frame(i), downsample_frame(j)], dim=1)
        return self.level1_net(x)

    def level2(self, i: torch.Tensor, j: torch.Tensor, flow_ld: torch.Tensor) -> torch.Tensor:
        if flow_ld.shape[2:] != (i.shape[2] // 2, i.shape[3] // 2):
            raise ValueError("level-2 input flow must be at half LR resolution")
        flow_up = upsample_flow(flow_ld, 2)
        x = torch.cat([warp(i, flow_up), j, flow_up], dim=1)
        return flow_up + self.level2_net(x)

    def level3(self, i: torch.Tensor, j: torch.Tensor, flow_lr: torch.Tensor) -> torch.Tensor:
        if flow_lr.shape[2:] != i.shape[2:]:
            raise ValueError("level-3 input flow must be at LR resolution")
        s = self.config.scale
        x = torch.cat([warp(i, flow_lr), j, flow_lr], dim=1)
        residual = subpixel_upscale(self.level3_net(x), s)
        if not self.config.level3_residual:
            return residual
        return upsample_flow(flow_lr, s) + residual

    def forward(self, i: torch.Tensor, j: torch.Tensor) -> PyramidFlows:
        f_ld = self.level1(i, j)
        f_l = self.level2(i, j, f_ld)
        f_h = self.level3(i, j, f_l)
        return PyramidFlows(f_ld, f_l, f_h)
