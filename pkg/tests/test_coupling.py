import math

import pytest
import torch
import torch.nn as nn

from invmihnet.coupling import DenseSubnet, InvBlock, NonFiniteError, SubnetConfig, clamp_scale, run_blocks

from .helpers import functional_gradcheck, randomize


class Zero(nn.Module):
    def forward(self, x):
        return torch.zeros_like(x)


def scalar_stub_block():
    # phi(h) = h, s(rho(.)) = 0, psi(l) = l
    return InvBlock(nn.Identity(), Zero(), nn.Identity())


def test_subnet_zero_init_output():
    net = DenseSubnet(9, 3)
    out = net(torch.randn(2, 9, 16, 16))
    assert out.shape == (2, 3, 16, 16)
    assert torch.count_nonzero(out) == 0


def test_single_layer_subnet_parameter_count():
    net = DenseSubnet(3, 8, SubnetConfig(n_layers=1))
    assert sum(p.numel() for p in net.parameters()) == 3 * 8 * 9 + 8 == 224
    assert len(net.hidden) == 0


def test_subnet_dense_connectivity():
    cfg = SubnetConfig(n_layers=5, growth_channels=32)
    net = DenseSubnet(12, 12, cfg)
    assert [c.in_channels for c in net.hidden] == [12, 44, 76, 108]
    assert net.out.in_channels == 140


def test_subnet_channel_mismatch():
    with pytest.raises(ValueError):
        DenseSubnet(9, 3)(torch.zeros(1, 4, 8, 8))


def test_subnet_config_rejects_even_kernel():
    with pytest.raises(ValueError):
        SubnetConfig(kernel_size=4)


def test_clamp_scale_values():
    assert clamp_scale(torch.tensor(0.0), 2.0) == 0
    assert abs(clamp_scale(torch.tensor(1.0, dtype=torch.float64), 2.0).item() - 0.924234) < 1e-6
    assert abs(clamp_scale(torch.tensor(50.0, dtype=torch.float64), 2.0).item() - 2.0) < 1e-12
    u = torch.linspace(-30, 30, 1001)
    assert clamp_scale(u, 1.5).abs().max() < 1.5 + 1e-6


def test_scalar_stub_forward_and_reverse():
    block = scalar_stub_block()
    l, h = block(torch.tensor([[[[1.0]]]]), torch.tensor([[[[2.0]]]]))
    assert (l.item(), h.item()) == (3.0, 5.0)
    l0, h0 = block.reverse(l, h)
    assert (l0.item(), h0.item()) == (1.0, 2.0)


def test_zero_subnets_are_identity():
    block = InvBlock.dense(3, 9)
    x_l, x_h = torch.randn(2, 3, 8, 8), torch.randn(2, 9, 8, 8)
    for out in (block(x_l, x_h), block.reverse(x_l, x_h)):
        assert torch.equal(out[0], x_l) and torch.equal(out[1], x_h)


def test_zero_high_branch_stays_zero():
    block = randomize(InvBlock.dense(3, 9), seed=3, scale=0.1, outputs_only=False)
    nn.init.zeros_(block.psi.out.weight)
    nn.init.zeros_(block.psi.out.bias)
    _, h = block(torch.randn(1, 3, 8, 8), torch.zeros(1, 9, 8, 8))
    assert torch.count_nonzero(h) == 0


@pytest.mark.parametrize("dtype,tol", [(torch.float32, 1e-4), (torch.float64, 1e-10)])
@pytest.mark.parametrize("depth", [1, 8, 16])
def test_stack_inversion(depth, dtype, tol):
    torch.manual_seed(depth)
    blocks = nn.ModuleList(InvBlock.dense(3, 9) for _ in range(depth))
    randomize(blocks, seed=depth).to(dtype)
    g = torch.Generator().manual_seed(1)
    x_l = torch.rand(2, 3, 12, 12, generator=g, dtype=dtype)
    x_h = torch.randn(2, 9, 12, 12, generator=g, dtype=dtype) * 0.1
    with torch.no_grad():
        y_l, y_h = run_blocks(blocks, x_l, x_h)
        back_l, back_h = run_blocks(blocks, y_l, y_h, reverse=True)
    assert y_l.shape == x_l.shape and y_h.shape == x_h.shape
    err = max((back_l - x_l).abs().max().item(), (back_h - x_h).abs().max().item())
    assert err < tol


def test_scale_term_is_bounded():
    block = randomize(InvBlock.dense(3, 3, SubnetConfig(n_layers=2, clamp_constant=1.0)), scale=0.1, outputs_only=False).double()
    s = clamp_scale(block.rho(torch.randn(1, 3, 8, 8, dtype=torch.float64) * 3), block.clamp_constant)
    assert s.abs().max() > 0.5
    assert s.abs().max() < 1.0
    assert math.exp(-1.0) < torch.exp(s).min() and torch.exp(s).max() < math.exp(1.0)


def test_non_finite_reports_block_index():
    blocks = nn.ModuleList([InvBlock.dense(1, 1), InvBlock(Zero(), Zero(), Zero())])
    blocks[1].phi = nn.Identity()
    with pytest.raises(NonFiniteError) as info:
        run_blocks(blocks, torch.zeros(1, 1, 2, 2), torch.full((1, 1, 2, 2), float("inf")))
    assert info.value.block_index == 0


def test_branch_shape_mismatch():
    with pytest.raises(ValueError):
        InvBlock.dense(3, 9)(torch.zeros(1, 3, 8, 8), torch.zeros(1, 9, 4, 4))


def test_invblock_gradcheck():
    cfg = SubnetConfig(n_layers=2, growth_channels=4)
    block = randomize(InvBlock.dense(3, 3, cfg), seed=11, scale=0.3, outputs_only=False).double()
    g = torch.Generator().manual_seed(2)
    x_l = torch.rand(1, 3, 8, 8, dtype=torch.float64, generator=g).requires_grad_(True)
    x_h = torch.rand(1, 3, 8, 8, dtype=torch.float64, generator=g).requires_grad_(True)
    assert functional_gradcheck(block, (x_l, x_h))


@pytest.mark.parametrize("cin,cout", [(3, 9), (9, 3), (12, 12)])
def test_subnet_gradcheck(cin, cout):
    net = randomize(DenseSubnet(cin, cout, SubnetConfig(n_layers=3, growth_channels=4)), seed=cin, scale=0.3, outputs_only=False).double()
    x = torch.rand(1, cin, 6, 6, dtype=torch.float64, generator=torch.Generator().manual_seed(0)).requires_grad_(True)
    assert functional_gradcheck(net, (x,))
