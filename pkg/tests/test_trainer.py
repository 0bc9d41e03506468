import csv
import dataclasses
import math

import numpy as np
import pytest
import torch

from ptgan.augmentation import AugmentConfig, compose_pipeline
from ptgan.backbone import BackboneConfig, build_backbone
from ptgan.datasets import build_pairs, load_sample, make_synthetic_dataset
from ptgan.discriminator import DiscOutput, DiscriminatorConfig
from ptgan.errors import LabelOutOfRange, NonFiniteLoss
from ptgan.generator import GeneratorConfig
from ptgan.trainer import (
    TrainerConfig, collate, discriminator_loss, fit, generator_loss, init_state, load_state,
    lr_schedule, save_state, train_step, write_history_csv,
)  # fmt: skip

SIZE = 32


@pytest.fixture(scope="module")
def data():
    ds = make_synthetic_dataset(3, 3, seed=5, dims=(SIZE, SIZE))
    return ds, build_pairs(ds.index)


@pytest.fixture(scope="module")
def backbone():
    return build_backbone(BackboneConfig(seed=1))


def _state(seed=0, **kw):
    tcfg = TrainerConfig(seed=seed, batch_size=4, **kw)
    return init_state(GeneratorConfig.miniature(), DiscriminatorConfig.miniature(num_classes=3), tcfg)


def _augmenter(enabled=True):
    return compose_pipeline(AugmentConfig(image_size=SIZE, seed=2), enabled=enabled)


def _batch(data, n=4, index0=0):
    ds, pairs = data
    aug = _augmenter()
    return collate([load_sample(pairs[i], aug, index0 + i, reader=ds.read) for i in range(n)])


def _out(real, classes):
    return DiscOutput(torch.as_tensor(real, dtype=torch.float32), torch.as_tensor(classes, dtype=torch.float32))


# ---- schedule -------------------------------------------------------------


def test_lr_schedule_examples():
    cfg = TrainerConfig()
    assert lr_schedule(0, cfg) == 0.0002
    assert lr_schedule(19, cfg) == 0.0002
    assert lr_schedule(20, cfg) == 0.00002
    assert lr_schedule(45, cfg) == 0.000002
    with pytest.raises(ValueError):
        lr_schedule(-1, cfg)


@pytest.mark.parametrize("bad", [dict(lr0=0.0), dict(decay_every=0), dict(batch_size=0),
                                 dict(adv_form="hinge")])  # fmt: skip
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainerConfig(**bad)


# ---- losses ---------------------------------------------------------------


def test_generator_loss_constant_offset():
    t = torch.rand(2, 3, 8, 8)
    total, comp = generator_loss(t + 0.1, t, None, TrainerConfig(lambda_rec=1.0), include_adv=False)
    assert math.isclose(float(total), 0.01, rel_tol=1e-4)
    assert float(comp["adv"]) == 0.0


def test_generator_loss_linearity_and_optimum():
    t = torch.rand(2, 3, 8, 8)
    g = t + torch.randn_like(t) * 0.3
    _, a = generator_loss(g, t, None, TrainerConfig(lambda_rec=3.0))
    _, b = generator_loss(g, t, None, TrainerConfig(lambda_rec=6.0))
    assert float(b["rec"]) == 2 * float(a["rec"])
    fooled = _out([50.0, 50.0], np.zeros((2, 2)))
    total, _ = generator_loss(t, t, fooled, TrainerConfig())
    assert 0 <= float(total) < 1e-12


def test_generator_loss_saturating_form():
    out = _out([0.0], [[0.0, 0.0]])
    t = torch.zeros(1, 3, 2, 2)
    _, ns = generator_loss(t, t, out, TrainerConfig())
    _, sat = generator_loss(t, t, out, TrainerConfig(adv_form="saturating"))
    assert math.isclose(float(ns["adv"]), math.log(2), rel_tol=1e-6)
    assert math.isclose(float(sat["adv"]), -math.log(2), rel_tol=1e-6)


def test_discriminator_loss_examples():
    n = 5
    real = _out([0.0, 0.0], np.zeros((2, n)))
    fake = _out([0.0, 0.0], np.zeros((2, n)))
    total, comp = discriminator_loss(real, fake, torch.tensor([0, 3]))
    assert math.isclose(float(comp["cce"]), math.log(n), rel_tol=1e-6)
    assert math.isclose(float(comp["bce"]), 2 * math.log(2), rel_tol=1e-6)
    perfect_classes = np.full((2, n), -60.0)
    perfect_classes[0, 0] = perfect_classes[1, 3] = 60.0
    total, _ = discriminator_loss(_out([60.0, 60.0], perfect_classes), _out([-60.0, -60.0], np.zeros((2, n))),
                                  torch.tensor([0, 3]))  # fmt: skip
    assert 0 <= float(total) < 1e-12


def test_discriminator_loss_classify_fake_and_labels():
    real = _out([0.0], [[0.0, 0.0, 0.0]])
    _, a = discriminator_loss(real, real, torch.tensor([1]))
    _, b = discriminator_loss(real, real, torch.tensor([1]), fake_labels=torch.tensor([2]))
    assert math.isclose(float(b["cce"]), 2 * float(a["cce"]), rel_tol=1e-6)
    with pytest.raises(LabelOutOfRange):
        discriminator_loss(real, real, torch.tensor([3]))
    with pytest.raises(LabelOutOfRange):
        discriminator_loss(real, real, torch.tensor([-1]))


# ---- steps ----------------------------------------------------------------


def test_step_deterministic(data, backbone):
    batch = _batch(data)
    a, b = _state(), _state()
    assert a.checksum() == b.checksum()
    train_step(batch, a, a.trainer_cfg, backbone)
    train_step(batch, b, b.trainer_cfg, backbone)
    assert a.checksum() == b.checksum()


def test_step_changes_generator_not_backbone(data, backbone):
    state = _state()
    before_g = {k: v.clone() for k, v in state.generator.state_dict().items()}
    before_bb = backbone.checksum()
    _, rec = train_step(_batch(data), state, state.trainer_cfg, backbone)
    assert backbone.checksum() == before_bb
    assert any(not torch.equal(v, state.generator.state_dict()[k]) for k, v in before_g.items())
    assert len(state.history) == 1 and state.step == 1
    assert set(rec) == {"epoch", "step", "lr", "L_D_bce", "L_D_cce", "L_G_rec", "L_G_adv"}


def test_nonfinite_loss_aborts(data, backbone, monkeypatch):
    import ptgan.trainer as trainer

    real = trainer.discriminator_loss

    def poisoned(*args, **kw):
        total, comp = real(*args, **kw)
        comp["bce"] = comp["bce"] * float("nan")
        return total, comp

    monkeypatch.setattr(trainer, "discriminator_loss", poisoned)
    state = _state()
    before = state.checksum()
    with pytest.raises(NonFiniteLoss) as exc:
        train_step(_batch(data), state, state.trainer_cfg, backbone)
    assert math.isnan(exc.value.components["L_D_bce"])
    assert state.checksum() == before


def test_discriminator_loss_decreases_on_fixed_batch(data, backbone):
    state = _state(seed=3)
    batch = _batch(data)
    with torch.no_grad():
        fake = state.generator(backbone.extract(batch["source"]), batch["pose"])
    losses = []
    for _ in range(50):
        loss, _ = discriminator_loss(state.discriminator(batch["target"]), state.discriminator(fake),
                                     batch["identity"])  # fmt: skip
        state.opt_d.zero_grad()
        loss.backward()
        state.opt_d.step()
        losses.append(float(loss.detach()))
    assert losses[-1] < losses[0]


# ---- fit / persistence ----------------------------------------------------


def test_fit_lr_history_and_csv(data, backbone, tmp_path):
    ds, pairs = data
    state = _state(epochs=3, decay_every=1)
    fit(pairs, backbone, state, _augmenter(), out_dir=tmp_path, reader=ds.read)
    steps_per_epoch = math.ceil(len(pairs) / 4)
    assert state.step == 3 * steps_per_epoch == len(state.history)
    for rec in state.history:
        assert rec["lr"] == lr_schedule(rec["epoch"], state.trainer_cfg)
    assert sorted(p.name for p in tmp_path.glob("*.ckpt")) == [f"epoch_000{k}.ckpt" for k in (1, 2, 3)]
    with open(tmp_path / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "step", "lr", "L_D_bce", "L_D_cce", "L_G_rec", "L_G_adv"]
    assert len(rows) == len(state.history)


@pytest.mark.parametrize("augment", [True, False])
def test_resume_matches_uninterrupted(data, backbone, tmp_path, augment):
    ds, pairs = data
    straight = _state(epochs=3)
    fit(pairs, backbone, straight, _augmenter(augment), reader=ds.read)
    first = _state(epochs=3)
    fit(pairs, backbone, first, _augmenter(augment), out_dir=tmp_path, reader=ds.read, stop_epoch=2)
    resumed = load_state(tmp_path / "epoch_0002.ckpt")
    assert resumed.checksum() == first.checksum()
    fit(pairs, backbone, resumed, _augmenter(augment), reader=ds.read)
    assert resumed.step == straight.step
    assert resumed.checksum() == straight.checksum()
    assert resumed.history == straight.history


def test_save_load_save_byte_identical(data, backbone, tmp_path):
    state = _state()
    train_step(_batch(data), state, state.trainer_cfg, backbone)
    save_state(tmp_path / "a.ckpt", state)
    save_state(tmp_path / "b.ckpt", load_state(tmp_path / "a.ckpt"))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_max_steps_caps_training(data, backbone):
    ds, pairs = data
    state = _state(epochs=5, max_steps=2)
    fit(pairs, backbone, state, _augmenter(), reader=ds.read)
    assert state.step == 2


def test_collate_ranges_and_pose_width(data):
    ds, pairs = data
    s = load_sample(pairs[0], _augmenter(), 0, reader=ds.read)
    b = collate([s, s], include_confidence=False)
    assert tuple(b["source"].shape) == (2, 3, SIZE, SIZE)
    assert b["source"].min() >= -1 and b["source"].max() <= 1
    assert tuple(b["pose"].shape) == (2, 50)
    assert b["identity"].tolist() == [pairs[0].identity] * 2


def test_history_csv_empty(tmp_path):
    write_history_csv(tmp_path / "h.csv", [])
    assert (tmp_path / "h.csv").read_text().strip() == "epoch,step,lr,L_D_bce,L_D_cce,L_G_rec,L_G_adv"


def test_classify_fake_switch_trains(data, backbone):
    tcfg = TrainerConfig(batch_size=4)
    state = init_state(GeneratorConfig.miniature(),
                       dataclasses.replace(DiscriminatorConfig.miniature(num_classes=3), classify_fake=True),
                       tcfg)  # fmt: skip
    _, rec = train_step(_batch(data), state, tcfg, backbone)
    assert rec["L_D_cce"] > 0
