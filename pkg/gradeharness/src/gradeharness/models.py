"""Volumetric feature extractors with a 2-logit grade head.

Two variants: ``toy``, a 3-block CNN small enough to overfit a handful of
cubes in seconds, and ``resnet34-3d``, a 34-layer residual network (stem +
[3, 4, 6, 3] basic blocks of two 3x3x3 convolutions + linear head) built
volumetric and randomly initialized.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ConfigError

VARIANTS = ("toy", "resnet34-3d")


class ToyGradeNet(nn.Module):
    """Conv-BN-ReLU-pool x3, global average pool, linear head."""

    def __init__(self, n_channels: int):
        super().__init__()
        widths = (16, 32, 64)
        layers: list[nn.Module] = []
        prev = n_channels
        for w in widths:
            layers += [nn.Conv3d(prev, w, kernel_size=3, padding=1),
                       nn.BatchNorm3d(w),
                       nn.ReLU(inplace=True),
                       # ceil_mode keeps 1-deep axes alive on tiny test cubes
                       nn.MaxPool3d(2, ceil_mode=True)]
            prev = w
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.head = nn.Linear(widths[-1], 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.pool(self.features(x)).flatten(1)
        return self.head(z)


class BasicBlock3d(nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv3d(in_planes, planes, 3, stride=stride, padding=1,
                               bias=False)
        self.bn1 = nn.BatchNorm3d(planes)
        self.conv2 = nn.Conv3d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(planes)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or in_planes != planes:
            self.downsample = nn.Sequential(
                nn.Conv3d(in_planes, planes, 1, stride=stride, bias=False),
                nn.BatchNorm3d(planes))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class ResNet34_3d(nn.Module):
    """34 weight layers on the main path: stem conv + 16 two-conv blocks + head."""

    STAGE_BLOCKS = (3, 4, 6, 3)
    STAGE_WIDTHS = (64, 128, 256, 512)

    def __init__(self, n_channels: int):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv3d(n_channels, 64, kernel_size=7, stride=2, padding=3, bias=False),
            nn.BatchNorm3d(64),
            nn.ReLU(inplace=True),
            nn.MaxPool3d(kernel_size=3, stride=2, padding=1))
        stages = []
        in_planes = 64
        for i, (n_blocks, width) in enumerate(zip(self.STAGE_BLOCKS,
                                                  self.STAGE_WIDTHS)):
            for j in range(n_blocks):
                stride = 2 if (i > 0 and j == 0) else 1
                stages.append(BasicBlock3d(in_planes, width, stride))
                in_planes = width
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.head = nn.Linear(in_planes, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.pool(self.stages(self.stem(x))).flatten(1)
        return self.head(z)


def build_model(n_channels: int, variant: str = "toy") -> nn.Module:
    if n_channels < 1:
        raise ConfigError(f"n_channels must be >= 1, got {n_channels}",
                          tag="model.channels")
    if variant == "toy":
        return ToyGradeNet(n_channels)
    if variant == "resnet34-3d":
        return ResNet34_3d(n_channels)
    raise ConfigError(f"unknown model variant {variant!r} (expected one of "
                      f"{VARIANTS})", tag="model.variant")


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
