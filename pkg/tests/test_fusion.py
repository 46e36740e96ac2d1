import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import loop_joint_loss, naive_conv_same

from even import fusion, layers
from even.fusion import (
    FusionConfig, FusionNet, attention_weights, branch_transform, build_fusion_net, fuse, joint_loss,
    soft_attention,
)
from even.gradcheck import FUSION_GROUPS, fusion_gradient_check


def small_net(seed=0, channels=4, d=3):
    return build_fusion_net(FusionConfig(C=channels, d=d), seed=seed).double()


def test_branch_shapes_and_zero_input():
    net = small_net()
    with torch.no_grad():
        net.g.bias.zero_()
        net.h.bias.zero_()
    f_e, f_h = branch_transform(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), net)
    assert f_e.shape == f_h.shape == (8, 8, 4)
    assert not f_e.any() and not f_h.any()


def test_identity_kernel_passes_input():
    net = small_net()
    with torch.no_grad():
        net.h.weight.zero_()
        net.h.bias.zero_()
        net.h.weight[0, 1, 1, 1] = 1.0
    img = np.random.default_rng(0).uniform(-1, 1, (8, 8, 3))
    _, f_h = branch_transform(img, img, net)
    np.testing.assert_allclose(f_h[..., 0], img[..., 1], atol=1e-12)


def test_branch_convs_match_sliding_window_oracle():
    net = small_net(seed=3)
    rng = np.random.default_rng(4)
    ev_img = rng.uniform(-1, 1, (8, 8, 3))
    rgb_img = rng.uniform(-1, 1, (8, 8, 3))
    f_e, f_h = branch_transform(ev_img, rgb_img, net)
    g_w, g_b = net.g.weight.detach().numpy(), net.g.bias.detach().numpy()
    h_w, h_b = net.h.weight.detach().numpy(), net.h.bias.detach().numpy()
    assert net.g.weight.shape[-1] == 5 and net.h.weight.shape[-1] == 3
    assert np.abs(f_e - naive_conv_same(ev_img, g_w, g_b)).max() < 1e-6
    assert np.abs(f_h - naive_conv_same(rgb_img, h_w, h_b)).max() < 1e-6


def test_branch_shape_mismatch():
    with pytest.raises(ValueError):
        branch_transform(np.zeros((8, 8, 3)), np.zeros((8, 4, 3)), small_net())


def test_equal_attention_vectors_give_half():
    net = small_net()
    with torch.no_grad():
        net.B.copy_(net.A)
    rng = np.random.default_rng(0)
    a, b, k = attention_weights(rng.normal(size=(8, 8, 4)), rng.normal(size=(8, 8, 4)), net)
    np.testing.assert_allclose(a, 0.5, atol=1e-15)
    np.testing.assert_allclose(b, 0.5, atol=1e-15)
    assert k.shape == (3,)


def test_attention_matches_scalar_oracle():
    net = small_net(seed=2)
    rng = np.random.default_rng(2)
    f_e, f_h = rng.normal(size=(8, 8, 4)), rng.normal(size=(8, 8, 4))
    a, b, k = attention_weights(f_e, f_h, net)
    v = (f_e + f_h).mean(axis=(0, 1))
    fc_w, fc_b = net.fc.weight.detach().numpy(), net.fc.bias.detach().numpy()
    k_ref = fc_w @ v + fc_b
    np.testing.assert_allclose(k, k_ref, atol=1e-12)
    A, B = net.A.detach().numpy(), net.B.detach().numpy()
    for c in range(4):
        ea, eb = math.exp(A[c] @ k_ref), math.exp(B[c] @ k_ref)
        assert abs(a[c] - ea / (ea + eb)) < 1e-12
        assert abs(b[c] - eb / (ea + eb)) < 1e-12


def test_stable_softmax_large_gap():
    a, b = soft_attention(torch.tensor([20.0], dtype=torch.float64), torch.tensor([0.0], dtype=torch.float64))
    assert abs(a.item() - 1.0 / (1.0 + math.exp(-20.0))) < 1e-15
    assert a.item() > 1 - 1e-8
    a, b = soft_attention(torch.tensor([1000.0]), torch.tensor([-1000.0]))
    assert torch.isfinite(a).all() and torch.isfinite(b).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 30.0))
def test_attention_normalization_property(seed, scale):
    gen = torch.Generator().manual_seed(seed)
    la = torch.randn(5, 7, generator=gen, dtype=torch.float64) * scale
    lb = torch.randn(5, 7, generator=gen, dtype=torch.float64) * scale
    a, b = soft_attention(la, lb)
    assert torch.all((a + b - 1).abs() < 1e-6)


def test_attention_open_interval_for_random_nets():
    rng = np.random.default_rng(9)
    for seed in range(20):
        net = small_net(seed=seed)
        _, _, a, b = fuse(rng.uniform(-1, 1, (8, 8, 3)), rng.uniform(-1, 1, (8, 8, 3)), net)
        assert np.all((a > 0) & (a < 1) & (b > 0) & (b < 1))
        np.testing.assert_allclose(a + b, 1.0, atol=1e-12)


def test_attention_permutation_equivariance():
    net = small_net(seed=5)
    rng = np.random.default_rng(5)
    f_e, f_h = rng.normal(size=(8, 8, 4)), rng.normal(size=(8, 8, 4))
    perm = np.array([2, 0, 3, 1])
    a, b, _ = attention_weights(f_e, f_h, net)
    permuted = small_net(seed=5)
    with torch.no_grad():
        permuted.fc.weight.copy_(net.fc.weight[:, perm])
        permuted.A.copy_(net.A[perm])
        permuted.B.copy_(net.B[perm])
    a2, b2, _ = attention_weights(f_e[..., perm], f_h[..., perm], permuted)
    np.testing.assert_allclose(a2, a[perm], atol=1e-12)
    np.testing.assert_allclose(b2, b[perm], atol=1e-12)


def test_forced_attention_endpoints_and_convexity():
    net = small_net(seed=1)
    rng = np.random.default_rng(1)
    ev_img, rgb_img = rng.uniform(-1, 1, (8, 8, 3)), rng.uniform(-1, 1, (8, 8, 3))
    f_e, f_h = branch_transform(ev_img, rgb_img, net)
    out = fuse(ev_img, rgb_img, net, force_a=1.0)
    np.testing.assert_array_equal(out.fused_feature, f_e)
    out = fuse(ev_img, ev_img, net, force_a=0.5)
    f_e2, f_h2 = branch_transform(ev_img, ev_img, net)
    if np.array_equal(f_e2, f_h2):
        np.testing.assert_allclose(out.fused_feature, f_e2)
    out = fuse(ev_img, rgb_img, net)
    lo, hi = np.minimum(f_e, f_h), np.maximum(f_e, f_h)
    assert np.all(out.fused_feature >= lo - 1e-12) and np.all(out.fused_feature <= hi + 1e-12)


def test_equal_branches_half_attention_gives_branch():
    net = small_net(seed=1)
    with torch.no_grad():
        net.g.weight.zero_()
        net.g.weight[:, :, 1:4, 1:4] = net.h.weight
        net.g.bias.copy_(net.h.bias)
    img = np.random.default_rng(0).uniform(-1, 1, (8, 8, 3))
    f_e, f_h = branch_transform(img, img, net)
    np.testing.assert_allclose(f_e, f_h, atol=1e-12)
    out = fuse(img, img, net, force_a=0.5)
    np.testing.assert_allclose(out.fused_feature, f_e, atol=1e-12)


def test_output_resolution_and_divisibility():
    net = build_fusion_net(FusionConfig(C=8, d=4))
    out = fuse(np.zeros((64, 64, 3)), np.zeros((64, 64, 3)), net)
    assert out.fusion_image.shape == (64, 64, 3)
    with pytest.raises(ValueError, match="pad by 2 rows"):
        fuse(np.zeros((10, 8, 3)), np.zeros((10, 8, 3)), net)


def test_joint_loss_examples():
    x = np.random.default_rng(0).normal(size=(4, 4, 3))
    assert joint_loss(x, x, x) == 0.0
    y = np.zeros((2, 2, 3))
    assert joint_loss(y, y + 1.0, y, beta=0.8) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ValueError):
        joint_loss(y, y, np.zeros((2, 3, 3)))


def test_joint_loss_matches_loop_oracle():
    rng = np.random.default_rng(8)
    for _ in range(20):
        shape = tuple(rng.integers(1, 6, 3))
        y, e, v = (rng.normal(size=shape) for _ in range(3))
        beta = rng.uniform()
        assert abs(joint_loss(y, e, v, beta) - loop_joint_loss(y, e, v, beta)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_joint_loss_linear_in_beta(seed):
    rng = np.random.default_rng(seed)
    y, e, v = (rng.normal(size=(3, 3, 3)) for _ in range(3))
    m1, m2 = ((y - e) ** 2).mean(), ((y - v) ** 2).mean()
    assert joint_loss(y, e, v, 0.5) == pytest.approx((m1 + m2) / 2, rel=1e-12)
    l0, l1, lb = joint_loss(y, e, v, 0.0), joint_loss(y, e, v, 1.0), joint_loss(y, e, v, 0.3)
    assert lb == pytest.approx(0.7 * l0 + 0.3 * l1, rel=1e-12)


def test_gradients_match_finite_differences():
    report = fusion_gradient_check()
    assert set(report.errors) == set(FUSION_GROUPS)
    assert report.worst < 1e-4, report.errors


def test_parameter_shapes():
    net = FusionNet(6, 4)
    assert net.g.weight.shape == (6, 3, 5, 5)
    assert net.h.weight.shape == (6, 3, 3, 3)
    assert net.fc.weight.shape == (4, 6)
    assert net.A.shape == net.B.shape == (6, 4)
    assert net.unet.widths == (6, 12)


def test_param_file_round_trip(tmp_path):
    net = build_fusion_net(FusionConfig(C=4, d=3), seed=11)
    fusion.save_fusion_net(net, tmp_path / "f.evnp")
    back = fusion.load_fusion_net(tmp_path / "f.evnp")
    assert layers.params_equal(net, back)


def test_training_contract(tiny_manifest):
    cfg = FusionConfig(C=4, d=3, epochs=0)
    net, history = fusion.train_fusion(tiny_manifest, cfg, "rgb+sobel")
    assert history == []
    assert layers.params_equal(net, build_fusion_net(cfg))
    cfg = FusionConfig(C=4, d=3, epochs=3, batch_size=4)
    n1, h1 = fusion.train_fusion(tiny_manifest, cfg, "rgb+event")
    n2, h2 = fusion.train_fusion(tiny_manifest, cfg, "rgb+event")
    assert h1 == h2 and layers.params_equal(n1, n2)
    assert h1[-1] < h1[0]
    with pytest.raises(ValueError):
        fusion.train_fusion(tiny_manifest, cfg, "rgb+event", ids=[])


def test_enhanced_pairs_need_enhanced_images(tiny_manifest):
    from even.formats import MissingArtifactError

    with pytest.raises(MissingArtifactError, match="train-enhance"):
        fusion.train_fusion(tiny_manifest, FusionConfig(C=4, d=3, epochs=1), "even")


def test_export_is_deterministic(tiny_manifest, tmp_path):
    net = build_fusion_net(FusionConfig(C=4, d=3), seed=2)
    m1 = fusion.export_fusion_images(net, tiny_manifest, tmp_path / "a", "rgb+sobel")
    fusion.export_fusion_images(net, tiny_manifest, tmp_path / "b", "rgb+sobel")
    files = sorted((tmp_path / "a").iterdir())
    assert len(files) == len(tiny_manifest)
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    img = m1.load_image("fusion:rgb+sobel", tiny_manifest.ids()[0])
    assert img.min() >= 0 and img.max() <= 1
