import pytest
import torch

from ptgan.discriminator import Discriminator, DiscriminatorConfig, discriminate
from ptgan.errors import DimMismatch


@pytest.fixture(scope="module")
def disc():
    torch.manual_seed(0)
    return Discriminator(DiscriminatorConfig(num_classes=5)).eval()


def test_default_trunk_is_five_conv_relu_pool_stages(disc):
    kinds = [type(m).__name__ for m in disc.trunk]
    assert kinds == ["Conv2d", "LeakyReLU", "MaxPool2d"] * 5
    assert disc.cfg.final_size == 8


def test_batch_of_32_shapes(disc):
    with torch.no_grad():
        out = discriminate(torch.rand(32, 3, 256, 256) * 2 - 1, disc)
    assert tuple(out.realness.shape) == (32,)
    assert tuple(out.class_logits.shape) == (32, 5)


def test_distinct_inputs_distinct_outputs(disc):
    x = torch.rand(2, 3, 256, 256) * 2 - 1
    with torch.no_grad():
        out = disc(x)
    assert out.realness[0] != out.realness[1]
    assert not torch.equal(out.class_logits[0], out.class_logits[1])


def test_permutation_consistency():
    torch.manual_seed(1)
    d = Discriminator(DiscriminatorConfig.miniature(num_classes=3)).eval()
    x = torch.rand(6, 3, 32, 32) * 2 - 1
    perm = torch.tensor([4, 2, 0, 5, 1, 3])
    with torch.no_grad():
        a, b = d(x), d(x[perm])
    torch.testing.assert_close(a.realness[perm], b.realness)
    torch.testing.assert_close(a.class_logits[perm], b.class_logits)


def test_wrong_size_rejected(disc):
    with pytest.raises(DimMismatch):
        disc(torch.zeros(1, 3, 128, 128))
    with pytest.raises(DimMismatch):
        disc(torch.zeros(3, 256, 256))


@pytest.mark.parametrize("bad", [dict(num_classes=1), dict(trunk_channels=()),
                                 dict(input_size=100)])  # fmt: skip
def test_config_validation(bad):
    with pytest.raises(ValueError):
        DiscriminatorConfig(**bad)
