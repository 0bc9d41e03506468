"""SSIM and Inception Score evaluation.

SSIM uses an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03 and averages
the local index over the 'valid' window positions, per channel, then over
channels. The Inception Score is ``exp(E_x KL(p(y|x) || p(y)))`` per split.
IS is relative to whichever classifier produced the probabilities, so
reports always name it.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import _kernels
from .errors import DimMismatch, RowNotNormalized, WeightsUnavailable


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("K1 and K2 must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")


@dataclass(frozen=True)
class MetricsConfig:
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    data_range: float = 1.0
    is_splits: int = 10
    classifier: str = "synthetic"  # "synthetic" or "reference"
    classifier_weights: str = ""
    classifier_epochs: int = 60
    seed: int = 0

    @property
    def ssim(self):
        return SsimConfig(self.ssim_window, self.ssim_sigma, self.ssim_k1, self.ssim_k2,
                          self.data_range)  # fmt: skip


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _ssim_channel(x, y, k, c1, c2):
    mu_x = _kernels.filter_valid(x, k)
    mu_y = _kernels.filter_valid(y, k)
    sxx = _kernels.filter_valid(x * x, k) - mu_x**2
    syy = _kernels.filter_valid(y * y, k) - mu_y**2
    sxy = _kernels.filter_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return (num / den).mean()


def ssim(x, y, cfg=SsimConfig()):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimMismatch(f"ssim needs equal shapes, got {x.shape} and {y.shape}")
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    if min(x.shape[:2]) < cfg.window:
        raise DimMismatch(f"images smaller than the {cfg.window}px window")
    k = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    vals = [_ssim_channel(x[..., c], y[..., c], k, c1, c2) for c in range(x.shape[2])]
    return float(np.mean(vals))


def inception_score(probs, splits=10, atol=1e-6):
    """Mean and standard deviation of the split-wise Inception Score."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("probs must be an N x C matrix")
    sums = p.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
    if bad.size or np.any(p < 0):
        raise RowNotNormalized(f"rows not probability distributions (e.g. row {bad[:1]})")
    if splits < 1 or p.shape[0] < splits:
        raise ValueError(f"need N >= splits, got N={p.shape[0]}, splits={splits}")
    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(np.exp(terms.sum(axis=1).mean()))
    return float(np.mean(scores)), float(np.std(scores))


# --------------------------------------------------------------------------
# classifiers for IS
# --------------------------------------------------------------------------


class IdentityClassifier(nn.Module):
    """Small convnet predicting the identity of a network-range image."""

    def __init__(self, num_classes, width=16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(2 * width, 2 * width, 3, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(4), nn.Flatten(),
            nn.Linear(2 * width * 16, num_classes),
        )  # fmt: skip

    def forward(self, x):
        return self.net(x)


@dataclass
class ClassifierHandle:
    module: nn.Module
    name: str
    input_size: int | None = None
    info: dict = field(default_factory=dict)

    @torch.no_grad()
    def probs(self, images):
        self.module.eval()
        x = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        if x.shape[-1] == 3:
            x = x.permute(0, 3, 1, 2)
        if self.input_size and x.shape[-1] != self.input_size:
            x = F.interpolate(x, size=(self.input_size,) * 2, mode="bilinear",
                              align_corners=False)  # fmt: skip
        logits = self.module(x.contiguous()).double()
        return torch.softmax(logits, dim=1).numpy()


def train_identity_classifier(images, labels, num_classes, epochs=60, seed=0, lr=3e-3,
                              batch_size=32):  # fmt: skip
    """Fit the harness classifier on network-range (N, H, W, 3) images."""
    x = torch.as_tensor(np.asarray(images), dtype=torch.float32).permute(0, 3, 1, 2).contiguous()
    y = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = IdentityClassifier(num_classes)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), batch_size):
            idx = torch.from_numpy(order[s : s + batch_size])
            loss = F.cross_entropy(model(x[idx]), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.eval()
    with torch.no_grad():
        acc = float((model(x).argmax(1) == y).float().mean())
    return ClassifierHandle(model, "synthetic-identity", None, {"train_accuracy": acc})


def load_reference_classifier(weights_path):
    path = Path(weights_path) if weights_path else None
    if path is None or not path.is_file():
        raise WeightsUnavailable(f"classifier weights not found: {weights_path!r}")
    from torchvision.models import inception_v3

    net = inception_v3(weights=None, aux_logits=True, init_weights=False)
    net.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    net.aux_logits = False
    net.AuxLogits = None
    return ClassifierHandle(net, "reference-inception-v3", 299)


def classify_for_is(images, classifier, batch_size=64):
    rows = [classifier.probs(images[s : s + batch_size]) for s in range(0, len(images), batch_size)]
    return np.concatenate(rows, axis=0)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


@dataclass
class MetricsReport:
    ssim_mean: float
    is_mean: float
    is_std: float
    n_images: int
    classifier: str
    config: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    def table(self, label="Ours"):
        head = f"{'Model':<24}{'SSIM':>8}{'IS':>8}"
        rule = "-" * len(head)
        row = f"{label:<24}{self.ssim_mean:>8.3f}{self.is_mean:>8.3f}"
        return "\n".join([rule, head, rule, row, rule, f"IS classifier: {self.classifier}"])


def evaluate_samples(samples, synthesize, classifier, cfg=MetricsConfig(), config_echo=None):
    """Score ``synthesize(sample) -> [0, 1] image`` over evaluation samples."""
    generated, scores = [], []
    for s in samples:
        out = np.asarray(synthesize(s), dtype=np.float64)
        scores.append(ssim(out, s.target_img, cfg.ssim))
        generated.append(out * 2.0 - 1.0)
    splits = min(cfg.is_splits, len(generated))
    probs = classify_for_is(np.stack(generated).astype(np.float32), classifier)
    is_mean, is_std = inception_score(probs, splits)
    echo = {"metrics": _jsonable(dataclasses.asdict(cfg)), "is_splits_used": splits}
    echo.update(config_echo or {})
    echo["classifier_info"] = classifier.info
    return MetricsReport(float(np.mean(scores)), is_mean, is_std, len(generated),
                         classifier.name, echo)  # fmt: skip


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=list))


def make_synthesizer(generator, backbone, include_confidence=True):
    """Wrap a generator as ``sample -> [0, 1] image`` for :func:`evaluate_samples`."""
    from .generator import generate
    from .imageio import to_network, to_storage
    from .pose_codec import pose_condition

    def synthesize(sample):
        d = backbone.extract(to_network(sample.source_img)[None])[0]
        p = pose_condition(sample.target_pose, include_confidence)
        return to_storage(generate(d, p, generator))

    return synthesize


def build_classifier(cfg, images=None, labels=None, num_classes=None):
    if cfg.classifier == "reference":
        return load_reference_classifier(cfg.classifier_weights)
    if images is None:
        raise WeightsUnavailable("the synthetic classifier needs labelled images to train on")
    return train_identity_classifier(images, labels, num_classes, cfg.classifier_epochs, cfg.seed)


def evaluate(pairs, checkpoint_path, cfg=MetricsConfig(), backbone=None, classifier=None,
             reader=None, source_transform=None):  # fmt: skip
    """Generate every pair's target from a checkpoint and score SSIM + IS.

    ``source_transform(img, index)`` optionally corrupts each source image
    (e.g. occlusion) before it reaches the backbone.
    """
    from .augmentation import AugmentConfig, compose_pipeline
    from .backbone import BackboneConfig, build_backbone
    from .datasets import load_sample
    from .imageio import read_image_cached, to_network
    from .trainer import config_from_dict, load_generator

    reader = reader or read_image_cached
    gen, meta = load_generator(checkpoint_path)
    configs = meta["configs"]
    if backbone is None:
        bcfg = config_from_dict(BackboneConfig, meta.get("extra", {}).get("backbone", {}))
        backbone = build_backbone(bcfg)
    canon = compose_pipeline(AugmentConfig(image_size=gen.cfg.output_size), enabled=False)
    samples = [load_sample(p, canon, i, reader) for i, p in enumerate(pairs)]
    if source_transform is not None:
        for i, s in enumerate(samples):
            s.source_img = source_transform(s.source_img, i)
    if classifier is None:
        classifier = build_classifier(
            cfg,
            images=np.stack([to_network(s.target_img) for s in samples]),
            labels=[s.identity for s in samples],
            num_classes=configs["discriminator"]["num_classes"],
        )
    include_conf = configs["trainer"].get("pose_include_confidence", True)
    digest = hashlib.sha256(Path(checkpoint_path).read_bytes()).hexdigest()
    echo = {
        "checkpoint": str(checkpoint_path),
        "checkpoint_sha256": digest,
        "checkpoint_step": meta.get("step"),
        "checkpoint_epoch": meta.get("epoch"),
        "configs": configs,
        "backbone": getattr(backbone, "kind", "custom"),
        "n_pairs": len(pairs),
    }
    return evaluate_samples(samples, make_synthesizer(gen, backbone, include_conf), classifier,
                            cfg, echo)  # fmt: skip
