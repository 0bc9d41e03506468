"""Adversarial training: losses, step-decayed Adam, checkpointed epochs."""

import csv
import dataclasses
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint
from .datasets import load_sample
from .discriminator import Discriminator, DiscriminatorConfig
from .errors import DimMismatch, LabelOutOfRange, NonFiniteLoss
from .generator import Generator, GeneratorConfig
from .imageio import read_image_cached
from .pose_codec import pose_condition

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "step", "lr", "L_D_bce", "L_D_cce", "L_G_rec", "L_G_adv")


@dataclass(frozen=True)
class TrainerConfig:
    beta1: float = 0.5
    beta2: float = 0.999
    lr0: float = 0.0002
    decay_factor: float = 10.0
    decay_every: int = 20
    batch_size: int = 32
    lambda_rec: float = 10.0
    epochs: int = 1
    max_steps: int = 0  # 0 = no cap
    seed: int = 0
    augment: bool = True
    adv_form: str = "non_saturating"  # or "saturating"
    pose_include_confidence: bool = True

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.adv_form not in ("non_saturating", "saturating"):
            raise ValueError(f"unknown adv_form {self.adv_form!r}")


def lr_schedule(epoch, cfg):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 / cfg.decay_factor ** (epoch // cfg.decay_every)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------


def generator_loss(generated, target, disc_out_on_fake, cfg, include_adv=True):
    """Weighted MSE reconstruction plus the adversarial realness term."""
    if generated.shape != target.shape:
        raise DimMismatch(f"generated {tuple(generated.shape)} vs target {tuple(target.shape)}")
    rec = F.mse_loss(generated, target)
    if not include_adv or disc_out_on_fake is None:
        adv = rec.new_zeros(())
    elif cfg.adv_form == "non_saturating":
        adv = F.softplus(-disc_out_on_fake.realness).mean()  # -log sigmoid
    else:
        adv = -F.softplus(disc_out_on_fake.realness).mean()  # log(1 - sigmoid)
    total = cfg.lambda_rec * rec + adv
    return total, {"rec": cfg.lambda_rec * rec, "adv": adv}


def discriminator_loss(real_out, fake_out, identity_labels, cfg=None, fake_labels=None):
    """BCE on real/fake logits plus cross-entropy of the identity head.

    ``fake_labels`` enables classification of generated images as well.
    """
    num_classes = real_out.class_logits.shape[1]
    labels = torch.as_tensor(identity_labels, dtype=torch.long)
    for lab in (labels, fake_labels):
        if lab is not None and (int(lab.min()) < 0 or int(lab.max()) >= num_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    bce = F.softplus(-real_out.realness).mean() + F.softplus(fake_out.realness).mean()
    cce = F.cross_entropy(real_out.class_logits, labels)
    if fake_labels is not None:
        cce = cce + F.cross_entropy(fake_out.class_logits, torch.as_tensor(fake_labels))
    return bce + cce, {"bce": bce, "cce": cce}


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------


@dataclass
class TrainingState:
    generator: Generator
    discriminator: Discriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    gen_cfg: GeneratorConfig
    disc_cfg: DiscriminatorConfig
    trainer_cfg: TrainerConfig
    epoch: int = 0
    step: int = 0
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)  # config echo for provenance

    def checksum(self, include_optimizer=True):
        h = hashlib.sha256()
        for name, arr in sorted(self.arrays(include_optimizer).items()):
            h.update(name.encode())
            h.update(arr.tobytes())
        h.update(f"{self.epoch}:{self.step}".encode())
        return h.hexdigest()

    def arrays(self, include_optimizer=True):
        out = {}
        for prefix, module in (("generator", self.generator), ("discriminator", self.discriminator)):
            for name, t in module.state_dict().items():
                out[f"{prefix}/{name}"] = t.detach().cpu().numpy()
        if include_optimizer:
            for prefix, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
                for idx, st in opt.state_dict()["state"].items():
                    for key, val in st.items():
                        out[f"{prefix}/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy()
        return out


def _make_adam(params, cfg):
    return torch.optim.Adam(params, lr=cfg.lr0, betas=(cfg.beta1, cfg.beta2), foreach=False)


def init_state(gen_cfg, disc_cfg, trainer_cfg, extra=None):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(trainer_cfg.seed))
        gen = Generator(gen_cfg)
        disc = Discriminator(disc_cfg)
    return TrainingState(
        generator=gen,
        discriminator=disc,
        opt_g=_make_adam(gen.parameters(), trainer_cfg),
        opt_d=_make_adam(disc.parameters(), trainer_cfg),
        gen_cfg=gen_cfg,
        disc_cfg=disc_cfg,
        trainer_cfg=trainer_cfg,
        extra=dict(extra or {}),
    )


def _plain(obj):
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def config_from_dict(cls, data):
    """Rebuild a frozen config dataclass, restoring tuple-typed fields."""
    kwargs = {}
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key, val in data.items():
        if key not in names:
            continue
        kwargs[key] = tuple(val) if isinstance(val, list) else val
    return cls(**kwargs)


def save_state(path, state):
    meta = {
        "kind": "training_state",
        "epoch": state.epoch,
        "step": state.step,
        "configs": {
            "generator": _plain(dataclasses.asdict(state.gen_cfg)),
            "discriminator": _plain(dataclasses.asdict(state.disc_cfg)),
            "trainer": _plain(dataclasses.asdict(state.trainer_cfg)),
        },
        "extra": _plain(state.extra),
        "history": state.history,
        "param_groups": {
            "opt_g": _plain(_groups(state.opt_g)),
            "opt_d": _plain(_groups(state.opt_d)),
        },
    }
    return checkpoint.save_archive(path, meta, state.arrays())


def _groups(opt):
    return [{k: v for k, v in g.items() if k != "params"} for g in opt.param_groups]


def load_state(path):
    meta, arrays = checkpoint.load_archive(path)
    cfgs = meta["configs"]
    gen_cfg = config_from_dict(GeneratorConfig, cfgs["generator"])
    disc_cfg = config_from_dict(DiscriminatorConfig, cfgs["discriminator"])
    trainer_cfg = config_from_dict(TrainerConfig, cfgs["trainer"])
    state = init_state(gen_cfg, disc_cfg, trainer_cfg, meta.get("extra"))
    for prefix, module in (("generator", state.generator), ("discriminator", state.discriminator)):
        sd = {
            name[len(prefix) + 1 :]: torch.from_numpy(arr.copy())
            for name, arr in arrays.items()
            if name.startswith(prefix + "/")
        }
        module.load_state_dict(sd)
    for prefix, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        per_param = {}
        for name, arr in arrays.items():
            if name.startswith(prefix + "/"):
                _, idx, key = name.split("/")
                per_param.setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
        groups = meta["param_groups"][prefix]
        sd = opt.state_dict()
        for g, saved in zip(sd["param_groups"], groups):
            g.update({k: tuple(v) if isinstance(v, list) else v for k, v in saved.items()})
        sd["state"] = per_param
        opt.load_state_dict(sd)
    state.epoch = int(meta["epoch"])
    state.step = int(meta["step"])
    state.history = list(meta["history"])
    return state


def load_generator(path):
    """Generator module and the archive metadata from a checkpoint."""
    meta, arrays = checkpoint.load_archive(path)
    gen_cfg = config_from_dict(GeneratorConfig, meta["configs"]["generator"])
    gen = Generator(gen_cfg)
    gen.load_state_dict(
        {k[len("generator/") :]: torch.from_numpy(v.copy())
         for k, v in arrays.items() if k.startswith("generator/")}  # fmt: skip
    )
    return gen.eval(), meta


def write_history_csv(path, history):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        w.writeheader()
        for rec in history:
            w.writerow({k: rec[k] for k in HISTORY_FIELDS})


# --------------------------------------------------------------------------
# step / fit
# --------------------------------------------------------------------------


def collate(samples, include_confidence=True):
    def chw(imgs):
        arr = np.stack([np.asarray(i, dtype=np.float32) for i in imgs]) * 2.0 - 1.0
        return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))

    return {
        "source": chw([s.source_img for s in samples]),
        "pose": torch.from_numpy(
            np.stack([pose_condition(s.target_pose, include_confidence) for s in samples])
        ),
        "target": chw([s.target_img for s in samples]),
        "identity": torch.tensor([s.identity for s in samples], dtype=torch.long),
    }


def _set_lr(opt, lr):
    for g in opt.param_groups:
        g["lr"] = lr


def _check_finite(components):
    vals = {k: float(v.detach()) for k, v in components.items()}
    if not all(np.isfinite(v) for v in vals.values()):
        raise NonFiniteLoss(f"non-finite loss components: {vals}", vals)


def train_step(batch, state, cfg, backbone, descriptors=None):
    """One discriminator update then one generator update on a collated batch."""
    if batch["source"].shape[0] == 0:
        raise ValueError("empty batch")
    gen, disc = state.generator, state.discriminator
    lr = lr_schedule(state.epoch, cfg)
    _set_lr(state.opt_g, lr)
    _set_lr(state.opt_d, lr)
    d = descriptors if descriptors is not None else backbone.extract(batch["source"])
    fake = gen(d, batch["pose"])
    labels = batch["identity"]

    real_out = disc(batch["target"])
    fake_out = disc(fake.detach())
    fake_labels = labels if state.disc_cfg.classify_fake else None
    loss_d, comp_d = discriminator_loss(real_out, fake_out, labels, cfg, fake_labels)
    _check_finite({"L_D_bce": comp_d["bce"], "L_D_cce": comp_d["cce"]})
    state.opt_d.zero_grad(set_to_none=True)
    loss_d.backward()
    state.opt_d.step()

    disc.requires_grad_(False)
    try:
        loss_g, comp_g = generator_loss(fake, batch["target"], disc(fake), cfg)
        _check_finite({"L_G_rec": comp_g["rec"], "L_G_adv": comp_g["adv"]})
        state.opt_g.zero_grad(set_to_none=True)
        loss_g.backward()
        state.opt_g.step()
    finally:
        disc.requires_grad_(True)

    record = {
        "epoch": state.epoch,
        "step": state.step,
        "lr": lr,
        "L_D_bce": float(comp_d["bce"].detach()),
        "L_D_cce": float(comp_d["cce"].detach()),
        "L_G_rec": float(comp_g["rec"].detach()),
        "L_G_adv": float(comp_g["adv"].detach()),
    }
    state.history.append(record)
    state.step += 1
    return state, record


def epoch_order(n, seed, epoch):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED, int(epoch)]))
    return rng.permutation(n)


def fit(pairs, backbone, state, augmenter, out_dir=None, reader=read_image_cached, workers=0,
        stop_epoch=None):  # fmt: skip
    """Run epochs from ``state.epoch`` until the configured count (or ``stop_epoch``).

    A checkpoint ``epoch_XXXX.ckpt`` and ``history.csv`` are written into
    ``out_dir`` after every epoch. Resuming from any of them reproduces the
    uninterrupted run exactly.
    """
    cfg = state.trainer_cfg
    if not pairs:
        raise ValueError("need at least one training pair")
    n = len(pairs)
    last = cfg.epochs if stop_epoch is None else min(stop_epoch, cfg.epochs)
    cache = {}
    pool = ThreadPoolExecutor(workers) if workers > 0 else None
    try:
        for epoch in range(state.epoch, last):
            state.epoch = epoch
            order = epoch_order(n, cfg.seed, epoch)
            for start in range(0, n, cfg.batch_size):
                if cfg.max_steps and state.step >= cfg.max_steps:
                    break
                idx = [int(i) for i in order[start : start + cfg.batch_size]]

                def load(i, epoch=epoch):
                    return load_sample(pairs[i], augmenter, epoch * n + i, reader=reader)

                samples = list(pool.map(load, idx)) if pool else [load(i) for i in idx]
                batch = collate(samples, cfg.pose_include_confidence)
                desc = None
                if not augmenter.enabled:
                    missing = [j for j, i in enumerate(idx) if pairs[i].source.image_path not in cache]
                    for j in missing:
                        # one image at a time so cached values never depend on batch makeup
                        row = backbone.extract(batch["source"][j : j + 1])[0]
                        cache[pairs[idx[j]].source.image_path] = row
                    desc = torch.stack([cache[pairs[i].source.image_path] for i in idx])
                train_step(batch, state, cfg, backbone, desc)
            state.epoch = epoch + 1
            if out_dir is not None:
                out = Path(out_dir)
                save_state(out / f"epoch_{state.epoch:04d}.ckpt", state)
                write_history_csv(out / "history.csv", state.history)
            if state.history:
                log.info("epoch %d done: %s", state.epoch, state.history[-1])
            if cfg.max_steps and state.step >= cfg.max_steps:
                break
    finally:
        if pool:
            pool.shutdown()
    return state
