"""Frozen image descriptor networks.

Two handles share one interface: ``reference`` wraps a 50-layer residual
ImageNet classifier whose weights are loaded from a local file, ``test`` is a
tiny seeded convnet that needs no download. Both return the globally
average-pooled activations that precede the classification layer.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DimMismatch, WeightsUnavailable

REFERENCE_DIM = 2048
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class BackboneConfig:
    kind: str = "test"  # "test" or "reference"
    weights_path: str = ""
    dim: int = 64
    seed: int = 0


class TinyConvNet(nn.Module):
    def __init__(self, dim=64):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2),
            nn.LeakyReLU(0.1),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.LeakyReLU(0.1),
            nn.Conv2d(32, dim, 3, stride=2, padding=1),
            nn.LeakyReLU(0.1),
        )
        # variance-preserving init so pooled descriptors keep image-dependent spread
        for m in self.features:
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, a=0.1, nonlinearity="leaky_relu")
                nn.init.normal_(m.bias, std=0.1)

    def forward(self, x):
        return self.features(x).mean(dim=(2, 3))


class _ResNetTrunk(nn.Module):
    def __init__(self, net):
        super().__init__()
        net.fc = nn.Identity()
        self.net = net
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))

    def forward(self, x):
        x = ((x + 1.0) * 0.5 - self.mean) / self.std
        return self.net(x)


def _build_resnet50():
    try:
        from torchvision.models import resnet50
    except ImportError as exc:  # pragma: no cover
        raise WeightsUnavailable("torchvision is required for the reference backbone") from exc
    return resnet50(weights=None)


class Backbone:
    """Read-only descriptor extractor. Parameters never receive gradients."""

    def __init__(self, module, dim, input_size=None, kind="test"):
        self.module = module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)
        self.dim = dim
        self.input_size = input_size
        self.kind = kind

    def __call__(self, images):
        return self.extract(images)

    @torch.no_grad()
    def extract(self, images):
        """Descriptors for a batch of network-range images, (N, 3, H, W) or (N, H, W, 3)."""
        x = torch.as_tensor(images, dtype=torch.float32)
        if x.ndim == 3:
            x = x.unsqueeze(0)
        if x.ndim != 4:
            raise DimMismatch(f"expected a 4-D image batch, got shape {tuple(x.shape)}")
        if x.shape[1] != 3 and x.shape[-1] == 3:
            x = x.permute(0, 3, 1, 2)
        if x.shape[1] != 3:
            raise DimMismatch(f"expected 3 channels, got shape {tuple(x.shape)}")
        if self.input_size is not None and tuple(x.shape[2:]) != (self.input_size,) * 2:
            raise DimMismatch(
                f"backbone expects {self.input_size}x{self.input_size}, got {tuple(x.shape[2:])}"
            )
        out = self.module(x.contiguous())
        if out.shape[1] != self.dim:
            raise DimMismatch(f"descriptor width {out.shape[1]} != configured {self.dim}")
        return out

    def checksum(self):
        h = hashlib.sha256()
        for name, t in sorted(self.module.state_dict().items()):
            h.update(name.encode())
            h.update(t.detach().cpu().numpy().tobytes())
        return h.hexdigest()


def build_backbone(cfg, input_size=None):
    if cfg.kind == "test":
        gen_state = torch.random.get_rng_state()
        torch.manual_seed(int(cfg.seed))
        try:
            module = TinyConvNet(cfg.dim)
        finally:
            torch.random.set_rng_state(gen_state)
        return Backbone(module, cfg.dim, input_size, kind="test")
    if cfg.kind == "reference":
        if cfg.dim != REFERENCE_DIM:
            raise DimMismatch(f"reference backbone emits {REFERENCE_DIM}, config says {cfg.dim}")
        path = Path(cfg.weights_path) if cfg.weights_path else None
        if path is None or not path.is_file():
            raise WeightsUnavailable(f"reference backbone weights not found: {cfg.weights_path!r}")
        net = _build_resnet50()
        state = torch.load(path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
        trunk = _ResNetTrunk(net)
        # verify the pooled width against the loaded weights
        with torch.no_grad():
            width = trunk(torch.zeros(1, 3, 64, 64)).shape[1]
        if width != REFERENCE_DIM:
            raise DimMismatch(f"loaded backbone emits {width}, expected {REFERENCE_DIM}")
        return Backbone(trunk, REFERENCE_DIM, input_size, kind="reference")
    raise ValueError(f"unknown backbone kind {cfg.kind!r}")


def extract_descriptor(img, backbone):
    """Descriptor for a single HWC network-range image."""
    return backbone.extract(np.asarray(img, dtype=np.float32)[None])[0]
