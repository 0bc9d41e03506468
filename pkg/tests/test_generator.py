import numpy as np
import pytest
import torch

from ptgan.errors import DimMismatch, NonFiniteActivation
from ptgan.generator import Generator, GeneratorConfig, ResBlock, generate


@pytest.fixture(scope="module")
def full_gen():
    torch.manual_seed(0)
    return Generator(GeneratorConfig()).eval()


def test_projection_shape_reference_descriptor():
    cfg = GeneratorConfig(descriptor_dim=2048)
    g = Generator(cfg)
    assert tuple(g.project.weight.shape) == (4096, 2123)
    seed = g.merge_inputs(torch.randn(2, 2048), torch.rand(2, 75))
    assert tuple(seed.shape) == (2, 64, 8, 8)


def test_zero_inputs_give_projection_bias():
    g = Generator(GeneratorConfig.miniature())
    seed = g.merge_inputs(torch.zeros(1, 64), torch.zeros(1, 75))
    torch.testing.assert_close(seed.flatten(), g.project.bias, rtol=0, atol=0)


def test_pose_permutation_changes_seed():
    torch.manual_seed(1)
    g = Generator(GeneratorConfig.miniature())
    d = torch.randn(1, 64)
    p = torch.rand(1, 75)
    q = p.clone()
    q[0, [3, 10]] = q[0, [10, 3]]
    assert not torch.allclose(g.merge_inputs(d, p), g.merge_inputs(d, q))


def test_merge_dim_mismatch():
    g = Generator(GeneratorConfig.miniature())
    with pytest.raises(DimMismatch):
        g.merge_inputs(torch.zeros(1, 63), torch.zeros(1, 75))
    with pytest.raises(DimMismatch):
        g.merge_inputs(torch.zeros(1, 64), torch.zeros(1, 50))


def test_resblock_zero_branch_is_identity():
    torch.manual_seed(2)
    block = ResBlock(16).zero_branch_()
    x = torch.randn(3, 16, 16, 16)
    torch.testing.assert_close(block(x), x, rtol=0, atol=0)


def test_resblock_bottleneck_trace():
    torch.manual_seed(3)
    block = ResBlock(8)
    x = torch.randn(1, 8, 16, 16)
    inner = block.act(block.norm(block.down_conv(x)))
    assert tuple(inner.shape[-2:]) == (8, 8)
    assert tuple(block.up_conv(inner).shape) == (1, 8, 16, 16)
    assert tuple(block(x).shape) == tuple(x.shape)


def test_resblock_odd_dims_rejected():
    with pytest.raises(DimMismatch):
        ResBlock(4)(torch.randn(1, 4, 7, 8))


def test_default_has_nine_blocks_applied_in_sequence(full_gen):
    assert len(full_gen.blocks) == 9
    seen = []
    hooks = [b.register_forward_hook(lambda m, i, o, k=k: seen.append(k))
             for k, b in enumerate(full_gen.blocks)]  # fmt: skip
    with torch.no_grad():
        full_gen(torch.randn(1, 64), torch.rand(1, 75))
    for h in hooks:
        h.remove()
    assert seen == list(range(9))


def test_output_contract_and_conditioning(full_gen):
    torch.manual_seed(4)
    d = torch.randn(1, 64)
    with torch.no_grad():
        a = full_gen(d, torch.rand(1, 75))
        b = full_gen(d, torch.rand(1, 75))
    assert tuple(a.shape) == (1, 3, 256, 256)
    assert a.abs().max() <= 1.0
    assert not torch.equal(a, b)


def test_generate_numpy_and_deterministic():
    torch.manual_seed(5)
    g = Generator(GeneratorConfig.miniature()).eval()
    d = np.random.default_rng(0).standard_normal(64).astype(np.float32)
    p = np.random.default_rng(1).random(75).astype(np.float32)
    a = generate(d, p, g)
    assert a.shape == (32, 32, 3)
    np.testing.assert_array_equal(a, generate(d, p, g))


def test_nonfinite_detected():
    g = Generator(GeneratorConfig.miniature())
    d = torch.zeros(1, 64)
    d[0, 0] = float("nan")
    with pytest.raises(NonFiniteActivation):
        g(d, torch.zeros(1, 75))


def test_every_parameter_gets_gradient():
    torch.manual_seed(6)
    g = Generator(GeneratorConfig.miniature())
    out = g(torch.randn(2, 64), torch.rand(2, 75))
    ((out - torch.rand_like(out)) ** 2).mean().backward()
    for name, p in g.named_parameters():
        assert p.grad is not None and p.grad.norm() > 0, name


@pytest.mark.parametrize("bad", [dict(num_res_blocks=0), dict(latent_h=8, latent_w=4),
                                 dict(output_size=48), dict(norm_kind="batch")])  # fmt: skip
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GeneratorConfig(**bad)


def test_config_derived():
    cfg = GeneratorConfig()
    assert cfg.num_up_stages == 5 and cfg.input_dim == 64 + 75
