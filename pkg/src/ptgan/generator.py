"""Pose-transformational generator.

(descriptor, pose) -> affine projection to a seed feature map -> stem conv ->
N residual blocks -> transposed-conv upsampling head -> tanh image.

Each residual block computes ``y = F(x) + x`` with
``F = up_conv(relu(norm(down_conv(x))))``: a stride-2 convolution halves the
spatial size and a stride-2 transposed convolution restores it.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DimMismatch, NonFiniteActivation


@dataclass(frozen=True)
class GeneratorConfig:
    num_res_blocks: int = 9
    base_channels: int = 64
    latent_h: int = 8
    latent_w: int = 8
    latent_c: int = 64
    pose_dim: int = 75
    descriptor_dim: int = 64
    output_size: int = 256
    min_channels: int = 8
    norm_kind: str = "instance"  # "instance" or "none"
    output_activation: str = "tanh"
    check_finite: bool = True

    def __post_init__(self):
        if self.num_res_blocks < 1:
            raise ValueError("num_res_blocks must be >= 1")
        if self.latent_h != self.latent_w:
            raise ValueError("seed map must be square")
        ratio = self.output_size / self.latent_h
        if ratio < 1 or ratio != 2 ** round(math.log2(ratio)):
            raise ValueError(
                f"seed map {self.latent_h} must reach {self.output_size} by x2 stages"
            )
        if self.latent_h % 2:
            raise ValueError("seed map side must be even for the residual bottleneck")
        if self.norm_kind not in ("instance", "none"):
            raise ValueError(f"unknown norm_kind {self.norm_kind!r}")
        if self.output_activation != "tanh":
            raise ValueError("only tanh output squashing is supported")

    @property
    def num_up_stages(self):
        return int(round(math.log2(self.output_size / self.latent_h)))

    @property
    def input_dim(self):
        return self.descriptor_dim + self.pose_dim

    @classmethod
    def miniature(cls, **kwargs):
        base = dict(num_res_blocks=2, base_channels=8, latent_h=4, latent_w=4, latent_c=8,
                    output_size=32, min_channels=4)  # fmt: skip
        base.update(kwargs)
        return cls(**base)


def _norm(kind, ch):
    if kind == "instance":
        return nn.InstanceNorm2d(ch, affine=True)
    return nn.Identity()


class ResBlock(nn.Module):
    def __init__(self, channels, norm_kind="instance"):
        super().__init__()
        has_norm = norm_kind != "none"
        self.down_conv = nn.Conv2d(channels, channels, 3, stride=2, padding=1, bias=not has_norm)
        self.norm = _norm(norm_kind, channels)
        self.act = nn.ReLU()
        self.up_conv = nn.ConvTranspose2d(channels, channels, 3, stride=2, padding=1,
                                          output_padding=1)  # fmt: skip

    def branch(self, x):
        return self.up_conv(self.act(self.norm(self.down_conv(x))))

    def forward(self, x):
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise DimMismatch(f"residual block needs even spatial dims, got {tuple(x.shape[-2:])}")
        return self.branch(x) + x

    def zero_branch_(self):
        """Zero every parameter of F so the block becomes the identity map."""
        with torch.no_grad():
            for p in self.parameters():
                p.zero_()
        return self


class Generator(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        has_norm = cfg.norm_kind != "none"
        seed_size = cfg.latent_h * cfg.latent_w * cfg.latent_c
        self.project = nn.Linear(cfg.input_dim, seed_size)
        self.stem = nn.Sequential(
            nn.Conv2d(cfg.latent_c, cfg.base_channels, 3, padding=1, bias=not has_norm),
            _norm(cfg.norm_kind, cfg.base_channels),
            nn.ReLU(),
        )
        self.blocks = nn.ModuleList(
            ResBlock(cfg.base_channels, cfg.norm_kind) for _ in range(cfg.num_res_blocks)
        )
        head = []
        ch = cfg.base_channels
        for _ in range(cfg.num_up_stages):
            nxt = max(cfg.min_channels, ch // 2)
            head += [
                nn.ConvTranspose2d(ch, nxt, 4, stride=2, padding=1, bias=not has_norm),
                _norm(cfg.norm_kind, nxt),
                nn.ReLU(),
            ]
            ch = nxt
        head += [nn.Conv2d(ch, 3, 3, padding=1), nn.Tanh()]
        self.head = nn.Sequential(*head)

    def merge_inputs(self, descriptor, pose):
        cfg = self.cfg
        if descriptor.shape[-1] != cfg.descriptor_dim or pose.shape[-1] != cfg.pose_dim:
            raise DimMismatch(
                f"expected descriptor {cfg.descriptor_dim} + pose {cfg.pose_dim}, "
                f"got {descriptor.shape[-1]} + {pose.shape[-1]}"
            )
        z = torch.cat([descriptor, pose], dim=-1)
        return self.project(z).view(-1, cfg.latent_c, cfg.latent_h, cfg.latent_w)

    def _check(self, x, where):
        if self.cfg.check_finite and not torch.isfinite(x).all():
            raise NonFiniteActivation(f"non-finite activation after {where}")
        return x

    def forward(self, descriptor, pose):
        x = self._check(self.merge_inputs(descriptor, pose), "projection")
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        self._check(x, "residual blocks")
        return self._check(self.head(x), "output head")


def generate(descriptor, pose, generator):
    """Single (descriptor, pose) -> HWC image in [-1, 1] as a numpy array."""
    d = torch.as_tensor(np.asarray(descriptor), dtype=torch.float32).reshape(1, -1)
    p = torch.as_tensor(np.asarray(pose), dtype=torch.float32).reshape(1, -1)
    with torch.no_grad():
        out = generator(d, p)[0]
    return out.permute(1, 2, 0).numpy()
