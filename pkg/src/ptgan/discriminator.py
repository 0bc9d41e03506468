"""Dual-head discriminator: Conv-ReLU-Pool trunk, one shared linear layer
emitting a realness logit and identity-class logits."""

from dataclasses import dataclass
from typing import NamedTuple

import torch
from torch import nn

from .errors import DimMismatch, NonFiniteActivation


@dataclass(frozen=True)
class DiscriminatorConfig:
    trunk_channels: tuple = (64, 128, 256, 512, 512)
    num_classes: int = 2
    input_size: int = 256
    kernel_size: int = 3
    leaky_slope: float = 0.2
    classify_fake: bool = False

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.trunk_channels:
            raise ValueError("trunk needs at least one stage")
        if self.input_size % (2 ** len(self.trunk_channels)):
            raise ValueError(
                f"input {self.input_size} not divisible by 2^{len(self.trunk_channels)} pooling"
            )

    @property
    def final_size(self):
        return self.input_size // 2 ** len(self.trunk_channels)

    @classmethod
    def miniature(cls, **kwargs):
        base = dict(trunk_channels=(8, 16, 32), input_size=32)
        base.update(kwargs)
        return cls(**base)


class DiscOutput(NamedTuple):
    realness: torch.Tensor  # (N,)
    class_logits: torch.Tensor  # (N, num_classes)


class Discriminator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        layers = []
        ch = 3
        for out_ch in cfg.trunk_channels:
            layers += [
                nn.Conv2d(ch, out_ch, cfg.kernel_size, padding=cfg.kernel_size // 2),
                nn.LeakyReLU(cfg.leaky_slope) if cfg.leaky_slope else nn.ReLU(),
                nn.MaxPool2d(2),
            ]
            ch = out_ch
        self.trunk = nn.Sequential(*layers)
        self.heads = nn.Linear(ch * cfg.final_size**2, 1 + cfg.num_classes)

    def forward(self, img):
        size = self.cfg.input_size
        if img.ndim != 4 or tuple(img.shape[1:]) != (3, size, size):
            raise DimMismatch(f"expected (N, 3, {size}, {size}), got {tuple(img.shape)}")
        out = self.heads(self.trunk(img).flatten(1))
        if not torch.isfinite(out).all():
            raise NonFiniteActivation("non-finite discriminator output")
        return DiscOutput(out[:, 0], out[:, 1:])


def discriminate(img, disc):
    return disc(img)
