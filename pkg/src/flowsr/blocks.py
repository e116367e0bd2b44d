"""Shared layers: residual dense blocks, sub-pixel rearrangement, initialisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class RdbConfig:
    num_layers: int = 4
    growth: int = 32
    kernel_size: int = 3
    fusion_kernel: int = 1
    leaky_slope: float = 0.1

    def __post_init__(self):
        if self.num_layers < 2:
            raise ValueError(f"an RDB needs at least 2 layers, got {self.num_layers}")
        if self.growth < 1:
            raise ValueError(f"growth must be positive, got {self.growth}")
        for k in (self.kernel_size, self.fusion_kernel):
            if k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd to preserve spatial size, got {k}")


def conv(in_ch: int, out_ch: int, kernel_size: int = 3) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size, padding=kernel_size // 2)


def init_weights(module: nn.Module) -> None:
    """Fan-in Kaiming-uniform (a=sqrt(5)) for every convolution, zero biases.

    Unit-gain schemes inflate the output variance through the stacked RDB skips.
    """
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5))
            nn.init.zeros_(m.bias)


def zero_(layer: nn.Conv2d) -> nn.Conv2d:
    nn.init.zeros_(layer.weight)
    nn.init.zeros_(layer.bias)
    return layer


class ResidualDenseBlock(nn.Module):
    """``num_layers - 1`` densely connected conv + leaky ReLU layers, a fusion
    layer back to ``channels`` and a local skip connection."""

    def __init__(self, channels: int, config: RdbConfig = RdbConfig()):
        super().__init__()
        self.channels = channels
        self.config = config
        g = config.growth
        self.dense = nn.ModuleList(
            conv(channels + i * g, g, config.kernel_size) for i in range(config.num_layers - 1)
        )
        self.fusion = conv(channels + (config.num_layers - 1) * g, channels, config.fusion_kernel)
        self.act = nn.LeakyReLU(config.leaky_slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(f"RDB expects {self.channels} channels, got {x.shape[1]}")
        feats = [x]
        for layer in self.dense:
            feats.append(self.act(layer(torch.cat(feats, dim=1))))
        return self.fusion(torch.cat(feats, dim=1)) + x


def subpixel_upscale(x: torch.Tensor, r: int) -> torch.Tensor:
    """Rearrange (B, r²c, H, W) into (B, c, rH, rW).

    Input channel ``ch * r² + i * r + j`` lands at output channel ``ch``,
    position ``(r*y + i, r*x + j)``.
    """
    b, c, h, w = x.shape
    if c % (r * r):
        raise ValueError(f"{c} channels are not divisible by r^2 = {r * r}")
    out = x.reshape(b, c // (r * r), r, r, h, w).permute(0, 1, 4, 2, 5, 3)
    return out.reshape(b, c // (r * r), h * r, w * r)


def subpixel_downscale(x: torch.Tensor, r: int) -> torch.Tensor:
    """Inverse of :func:`subpixel_upscale`."""
    b, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise ValueError(f"size {hr}x{wr} is not divisible by {r}")
    h, w = hr // r, wr // r
    out = x.reshape(b, c, h, r, w, r).permute(0, 1, 3, 5, 2, 4)
    return out.reshape(b, c * r * r, h, w)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
