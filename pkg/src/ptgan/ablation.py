"""With/without-augmentation ablation on synthetic persons.

Each identity's images are split into training poses and held-out poses.
Both arms train the same miniature networks from the same seed; only the
source augmentation differs. Evaluation asks for every held-out pose from
every training image of the same identity, with the source partly occluded
by a random patch, and scores SSIM against the true held-out image.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import augmentation as aug
from .backbone import BackboneConfig, build_backbone
from .datasets import DatasetIndex, TrainingPair, build_pairs, load_sample, make_synthetic_dataset
from .discriminator import DiscriminatorConfig
from .generator import GeneratorConfig
from .metrics import make_synthesizer, ssim
from .trainer import TrainerConfig, fit, init_state


@dataclass(frozen=True)
class AblationConfig:
    seeds: tuple = (0, 1, 2)
    n_identities: int = 4
    train_poses: int = 6
    heldout_poses: int = 2
    image_size: int = 32
    steps: int = 600
    batch_size: int = 8
    lambda_rec: float = 10.0
    occlusion_area: float = 0.15
    base_channels: int = 32
    # augmentation strengths scaled to the small canvas
    distortion_magnitude: float = 1.0


@dataclass
class AblationResult:
    ssim_aug: list = field(default_factory=list)
    ssim_noaug: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def median_aug(self):
        return float(np.median(self.ssim_aug))

    @property
    def median_noaug(self):
        return float(np.median(self.ssim_noaug))

    @property
    def relative_gain(self):
        return (self.median_aug - self.median_noaug) / abs(self.median_noaug)


def split_heldout(ds, train_poses):
    """Training index from the first poses of each identity; eval pairs toward the rest."""
    train, held = [], []
    for ident in range(ds.index.num_identities):
        own = [e for e in ds.index.entries if e.identity_id == ident]
        train += own[:train_poses]
        held += [TrainingPair(s, t) for s in own[:train_poses] for t in own[train_poses:]]
    return DatasetIndex(tuple(train), ds.index.num_identities), held


def occluder(area, seed, image_size):
    """Source corruption: one constant grey patch covering ``area`` of the frame."""
    cfg = aug.AugmentConfig(erase_prob=1.0, erase_area_range=(area, area), erase_fill="constant",
                            image_size=image_size, seed=seed)  # fmt: skip

    def corrupt(img, index):
        return aug.random_erase(img, aug.rng_stream(seed, index, "erase"), cfg)

    return corrupt


def run_arm(ds, train_index, heldout, cfg, seed, augment):
    size = cfg.image_size
    gen_cfg = GeneratorConfig.miniature(base_channels=cfg.base_channels, latent_c=cfg.base_channels,
                                        min_channels=8, output_size=size)  # fmt: skip
    disc_cfg = DiscriminatorConfig.miniature(num_classes=max(2, ds.index.num_identities),
                                             input_size=size)  # fmt: skip
    pairs = build_pairs(train_index)
    epochs = -(-cfg.steps * cfg.batch_size // len(pairs))
    tcfg = TrainerConfig(seed=seed, batch_size=cfg.batch_size, lambda_rec=cfg.lambda_rec,
                         epochs=epochs, max_steps=cfg.steps, decay_every=10**6, augment=augment)  # fmt: skip
    acfg = aug.AugmentConfig(image_size=size, seed=seed, distortion_magnitude=cfg.distortion_magnitude)
    backbone = build_backbone(BackboneConfig(seed=seed))
    state = init_state(gen_cfg, disc_cfg, tcfg)
    fit(pairs, backbone, state, aug.compose_pipeline(acfg, enabled=augment), reader=ds.read)

    synth = make_synthesizer(state.generator.eval(), backbone)
    canon = aug.compose_pipeline(acfg, enabled=False)
    corrupt = occluder(cfg.occlusion_area, seed + 1000, size)
    scores = []
    for i, pair in enumerate(heldout):
        s = load_sample(pair, canon, i, reader=ds.read)
        s.source_img = corrupt(s.source_img, i)
        scores.append(ssim(synth(s), s.target_img))
    return float(np.mean(scores))


def run_ablation(cfg=AblationConfig(), log=None):
    t0 = time.perf_counter()
    result = AblationResult()
    for seed in cfg.seeds:
        per_id = cfg.train_poses + cfg.heldout_poses
        ds = make_synthetic_dataset(cfg.n_identities, per_id, seed=seed, dims=(cfg.image_size,) * 2)
        train_index, heldout = split_heldout(ds, cfg.train_poses)
        a = run_arm(ds, train_index, heldout, cfg, seed, augment=True)
        b = run_arm(ds, train_index, heldout, cfg, seed, augment=False)
        result.ssim_aug.append(a)
        result.ssim_noaug.append(b)
        if log:
            log(f"seed {seed}: SSIM with augmentation {a:.4f}, without {b:.4f}")
    result.seconds = time.perf_counter() - t0
    return result
