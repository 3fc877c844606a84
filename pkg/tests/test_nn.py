import numpy as np
import pytest

from ceforensics.errors import (
    BadMagic,
    IoFailure,
    LabelOutOfRange,
    NonFiniteActivation,
    ShapeMismatch,
    StaleCache,
)
from ceforensics.nn import (
    SPP,
    AvgPool,
    BatchNorm,
    Conv2d,
    FC,
    FixedHPF,
    Network,
    ReLU,
    SoftmaxLoss,
    TrainConfig,
    checkpoint_from_network,
    grad_check,
    init_velocity,
    layer_from_spec,
    learning_rate,
    load_checkpoint,
    loss_softmax_xent,
    save_checkpoint,
    set_debug_checks,
    sgd_step,
)

RNG = np.random.default_rng(7)


def small_net(layers, name="t"):
    return Network(name, layers, dtype=np.float64)


# ---- loss ----

def test_loss_uniform_logits():
    loss, grad = loss_softmax_xent(np.zeros((3, 2)), np.array([0, 1, 0]))
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)
    assert grad.shape == (3, 2)


def test_loss_saturated():
    loss, _ = loss_softmax_xent(np.array([[30.0, -30.0]]), np.array([0]))
    assert loss < 1e-12


def test_loss_gradient_finite_difference():
    z = RNG.standard_normal((5, 2))
    y = np.array([0, 1, 1, 0, 1])
    loss, grad = loss_softmax_xent(z, y)
    eps = 1e-7
    for i in range(5):
        for j in range(2):
            zp = z.copy(); zp[i, j] += eps
            zm = z.copy(); zm[i, j] -= eps
            num = (loss_softmax_xent(zp, y)[0] - loss_softmax_xent(zm, y)[0]) / (2 * eps)
            assert abs(num - grad[i, j]) < 1e-6 * max(1.0, abs(num))


def test_loss_softmax_rows_sum_to_one():
    z = RNG.standard_normal((6, 2)).astype(np.float32)
    y = np.zeros(6, dtype=np.int64)
    _, grad = loss_softmax_xent(z, y)
    onehot = np.zeros((6, 2), np.float32)
    onehot[np.arange(6), y] = 1
    p = grad * 6 + onehot
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-6


def test_loss_label_out_of_range():
    with pytest.raises(LabelOutOfRange):
        loss_softmax_xent(np.zeros((2, 2)), np.array([0, 2]))


# ---- fixed high-pass front end ----

def test_hpf_constant_input_zero():
    net = Network("h", [FixedHPF()], dtype=np.float32)
    out = net.forward(np.full((1, 1, 3, 5), 0.7, np.float32))
    assert np.abs(out).max() == 0


def test_hpf_row_difference():
    x = np.array([10.0, 12.0, 15.0], np.float32).reshape(1, 1, 1, 3)
    net = Network("h", [FixedHPF()], dtype=np.float32)
    out = net.forward(x)
    assert out.reshape(-1).tolist() == [-2.0, -3.0]


def test_hpf_kernel_constant():
    assert FixedHPF.KERNEL == (1.0, -1.0)
    assert FixedHPF().params() == []


# ---- layer gradients against central differences ----

def layer_gradcheck(layers, x, samples=12, seed=0):
    # size the classifier head by probing the body's output width
    body = small_net(list(layers))
    probe = body.forward(x, train=False)
    rng = np.random.default_rng(seed)
    head = FC(int(np.prod(probe.shape[1:])), 2, rng=rng, dtype=np.float64)
    net = small_net(list(layers) + [head])
    y = (np.arange(x.shape[0]) % 2).astype(np.int64)
    return grad_check(net, x, y, samples_per_array=samples, seed=seed)


def test_conv_gradcheck():
    r = np.random.default_rng(1)
    x = RNG.random((4, 2, 9, 9))
    err = layer_gradcheck([Conv2d(2, 3, (3, 3), (1, 1), (1, 1), rng=r, dtype=np.float64)], x)
    assert err < 1e-4


def test_conv_strided_gradcheck():
    r = np.random.default_rng(2)
    x = RNG.random((3, 2, 11, 10))
    err = layer_gradcheck([Conv2d(2, 4, (3, 3), (2, 2), (1, 1), rng=r, dtype=np.float64)], x)
    assert err < 1e-4


def test_conv_wide_path_gradcheck():
    # more than _SMALL_K patch columns exercises the per-offset GEMM route
    r = np.random.default_rng(3)
    x = RNG.random((2, 8, 7, 7))
    err = layer_gradcheck([Conv2d(8, 4, (3, 3), (1, 1), (1, 1), rng=r, dtype=np.float64)], x)
    assert err < 1e-4


def test_batchnorm_gradcheck():
    x = RNG.random((6, 2, 5, 5))
    err = layer_gradcheck([BatchNorm(2, dtype=np.float64)], x)
    assert err < 1e-4


def test_avgpool_gradcheck():
    x = RNG.random((3, 2, 9, 8))
    err = layer_gradcheck([AvgPool((5, 5), (2, 2))], x)
    assert err < 1e-4


def test_spp_gradcheck():
    x = RNG.random((3, 2, 6, 7))
    err = layer_gradcheck([SPP((2, 1))], x)
    assert err < 1e-4


def test_hpf_relu_gradcheck():
    x = RNG.random((4, 1, 6, 8))
    err = layer_gradcheck([FixedHPF(), ReLU()], x)
    assert err < 1e-4


def test_tiny_end_to_end_gradcheck():
    # one conv plus classifier head on an 8x8 input
    r = np.random.default_rng(4)
    x = RNG.random((4, 1, 8, 8))
    err = layer_gradcheck(
        [Conv2d(1, 3, (3, 3), (1, 1), (1, 1), rng=r, dtype=np.float64), ReLU()], x)
    assert err < 1e-4


def test_linear_net_gradcheck_tight():
    r = np.random.default_rng(5)
    net = small_net([FC(12, 2, rng=r, dtype=np.float64)])
    x = RNG.random((5, 3, 2, 2))
    err = grad_check(net, x, np.array([0, 1, 0, 1, 1]), samples_per_array=24)
    assert err < 1e-8


def test_corrupted_backward_detected():
    class BadFC(FC):
        def backward(self, dy):
            dx = super().backward(dy)
            self.dw = -self.dw  # sign flip
            return dx

    r = np.random.default_rng(6)
    net = small_net([BadFC(12, 2, rng=r, dtype=np.float64)])
    x = RNG.random((5, 3, 2, 2))
    err = grad_check(net, x, np.array([0, 1, 0, 1, 1]), samples_per_array=24)
    assert 1.5 < err < 2.5


def test_zero_upstream_gradient_zeroes_param_grads():
    r = np.random.default_rng(8)
    net = small_net([Conv2d(1, 2, (3, 3), rng=r, dtype=np.float64), FC(2 * 4 * 4, 2, rng=r, dtype=np.float64)])
    x = RNG.random((2, 1, 6, 6))
    net.forward(x, train=True)
    net.backward(np.zeros((2, 2)))
    for g in net.grad_arrays():
        assert np.abs(g).max() == 0


def test_gradients_finite_on_random_batch():
    r = np.random.default_rng(9)
    net = small_net([Conv2d(1, 2, (3, 3), rng=r, dtype=np.float64),
                     BatchNorm(2, dtype=np.float64), ReLU(),
                     FC(2 * 4 * 4, 2, rng=r, dtype=np.float64)])
    x = RNG.random((4, 1, 6, 6))
    logits = net.forward(x, train=True)
    _, dl = loss_softmax_xent(logits, np.array([0, 1, 1, 0]))
    net.backward(dl)
    for g in net.grad_arrays():
        assert np.isfinite(g).all()


# ---- batchnorm behavior ----

def test_batchnorm_normalizes_batch():
    bn = BatchNorm(3, dtype=np.float32)
    x = (RNG.random((16, 4, 4, 3)) * 5 + 2).astype(np.float32)
    y = bn.forward(x, train=True)  # scale 1, bias 0
    mean = y.mean(axis=(0, 1, 2))
    var = y.var(axis=(0, 1, 2))
    assert np.abs(mean).max() < 1e-4
    assert np.abs(var - 1).max() < 1e-3


def test_batchnorm_running_stats_update():
    bn = BatchNorm(2, momentum=0.9, dtype=np.float64)
    x = RNG.random((8, 3, 3, 2)) + 1.5
    mu = x.mean(axis=(0, 1, 2))
    var = x.var(axis=(0, 1, 2))
    bn.forward(x, train=True)
    assert np.allclose(bn.running_mean, 0.9 * 0 + 0.1 * mu)
    assert np.allclose(bn.running_var, 0.9 * 1 + 0.1 * var)


def test_batchnorm_infer_uses_running_stats():
    bn = BatchNorm(1, dtype=np.float64)
    bn.running_mean[:] = 2.0
    bn.running_var[:] = 4.0
    x = np.full((1, 1, 1, 1), 4.0)
    y = bn.forward(x, train=False)
    assert y[0, 0, 0, 0] == pytest.approx((4 - 2) / np.sqrt(4 + 1e-5), rel=1e-6)


def test_batchnorm_no_update_flag():
    bn = BatchNorm(2, dtype=np.float64)
    x = RNG.random((4, 2, 2, 2))
    bn.forward(x, train=True, update_stats=False)
    assert np.allclose(bn.running_mean, 0) and np.allclose(bn.running_var, 1)


# ---- pooling oracles ----

def brute_force_avgpool(x, kh, kw, sh, sw):
    n, h, w, c = x.shape
    oh = -((h - kh) // -sh) + 1
    ow = -((w - kw) // -sw) + 1
    y = np.zeros((n, oh, ow, c))
    for i in range(oh):
        for j in range(ow):
            r0, c0 = i * sh, j * sw
            y[:, i, j, :] = x[:, r0 : min(r0 + kh, h), c0 : min(c0 + kw, w), :].mean((1, 2))
    return y


def test_avgpool_matches_bruteforce():
    for hh, ww in ((9, 8), (12, 13), (5, 5)):
        x = RNG.random((2, hh, ww, 3))
        pool = AvgPool((5, 5), (2, 2))
        got = pool.forward(x, train=False)
        assert np.allclose(got, brute_force_avgpool(x, 5, 5, 2, 2), atol=1e-12)


def test_avgpool_ceil_mode_sizes():
    pool = AvgPool((5, 5), (2, 2))
    x = RNG.random((1, 64, 63, 1))
    assert pool.forward(x, train=False).shape == (1, 31, 30, 1)
    x = RNG.random((1, 14, 14, 1))
    assert pool.forward(x, train=False).shape == (1, 6, 6, 1)


def test_spp_flat_length_independent_of_size():
    spp = SPP((4, 2, 1))
    for hw in ((6, 6), (14, 13), (4, 4), (2, 3)):
        x = RNG.random((2, hw[0], hw[1], 128))
        out = spp.forward(x, train=False)
        assert out.shape == (2, 128 * 21)


def test_spp_single_scale_is_global_average():
    spp = SPP((1,))
    x = RNG.random((3, 5, 7, 4))
    out = spp.forward(x, train=False)
    assert np.allclose(out, x.mean(axis=(1, 2)), atol=1e-12)


def test_spp_rejects_bad_scales():
    with pytest.raises(ValueError):
        SPP((2, 4))
    with pytest.raises(ValueError):
        SPP(())


# ---- conv oracle ----

def brute_force_conv(x, w, b, stride, pad):
    n, h, wd, c = x.shape
    kh, kw, _, oc = w.shape
    sh, sw = stride
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (wd + 2 * pw - kw) // sw + 1
    y = np.zeros((n, oh, ow, oc))
    for i in range(oh):
        for j in range(ow):
            patch = xp[:, i * sh : i * sh + kh, j * sw : j * sw + kw, :]
            y[:, i, j, :] = np.tensordot(patch, w, axes=([1, 2, 3], [0, 1, 2]))
    return y + b


def test_conv_matches_bruteforce():
    r = np.random.default_rng(11)
    for cin, cout, stride, pad in ((1, 3, (1, 1), (1, 1)), (4, 2, (2, 2), (0, 0)),
                                   (8, 5, (1, 1), (1, 1))):
        conv = Conv2d(cin, cout, (3, 3), stride, pad, rng=r, dtype=np.float64)
        x = RNG.random((2, 7, 8, cin))
        got = conv.forward(x, train=False)
        want = brute_force_conv(x, conv.w, conv.b, stride, pad)
        assert np.abs(got - want).max() < 1e-10


def test_conv_correlation_convention():
    # kernel [[1, -1]] horizontally: out = x[i] - x[i+1], matching correlation
    conv = Conv2d(1, 1, (1, 2), dtype=np.float64)
    conv.w[0, 0, 0, 0] = 1.0
    conv.w[0, 1, 0, 0] = -1.0
    x = np.array([10.0, 12.0, 15.0]).reshape(1, 1, 3, 1)
    out = conv.forward(x, train=False)
    assert out.reshape(-1).tolist() == [-2.0, -3.0]


def test_conv_shape_mismatch():
    conv = Conv2d(2, 3, (3, 3))
    with pytest.raises(ShapeMismatch):
        conv.forward(RNG.random((1, 5, 5, 4)), train=False)


# ---- optimizer ----

def test_sgd_plain_reduction():
    cfg = TrainConfig(momentum=0.0, weight_decay=0.0, base_lr=0.1)
    w = np.array([1.0, 2.0], np.float32)
    g = np.array([0.5, -0.5], np.float32)
    v = np.zeros(2, np.float32)
    sgd_step([w], [g], [v], cfg, 0)
    assert np.allclose(w, [0.95, 2.05])


def test_lr_schedule():
    cfg = TrainConfig(base_lr=0.001, lr_step=10000, lr_factor=0.1)
    assert learning_rate(cfg, 0) == pytest.approx(0.001)
    assert learning_rate(cfg, 9999) == pytest.approx(0.001)
    assert learning_rate(cfg, 10000) == pytest.approx(0.0001)
    soft = TrainConfig(base_lr=0.001, lr_step=10000, lr_factor=0.9)
    assert learning_rate(soft, 10000) == pytest.approx(0.0009)


def test_velocity_decays_by_momentum():
    cfg = TrainConfig(momentum=0.9, weight_decay=0.0, base_lr=0.1)
    w = np.zeros(3, np.float32)
    v = np.array([1.0, -2.0, 0.5], np.float32)
    g = np.zeros(3, np.float32)
    sgd_step([w], [g], [v], cfg, 0)
    assert np.allclose(v, [0.9, -1.8, 0.45])
    sgd_step([w], [g], [v], cfg, 1)
    assert np.allclose(v, [0.81, -1.62, 0.405])


def test_sgd_shape_mismatch():
    cfg = TrainConfig()
    with pytest.raises(ShapeMismatch):
        sgd_step([np.zeros(2, np.float32)], [np.zeros(3, np.float32)],
                 [np.zeros(2, np.float32)], cfg, 0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(base_lr=-1)


# ---- network plumbing ----

def build_random_net(seed=0, dtype=np.float32):
    r = np.random.default_rng(seed)
    return Network("tiny", [
        Conv2d(1, 4, (3, 3), (1, 1), (1, 1), rng=r, dtype=dtype),
        BatchNorm(4, dtype=dtype),
        ReLU(),
        FC(4 * 6 * 6, 2, rng=r, dtype=dtype),
        SoftmaxLoss(2),
    ], input_shape=(1, 6, 6), dtype=dtype)


def test_stale_cache_guard():
    net = build_random_net()
    with pytest.raises(StaleCache):
        net.backward(np.zeros((2, 2), np.float32))
    x = RNG.random((2, 1, 6, 6)).astype(np.float32)
    net.forward(x, train=False)
    with pytest.raises(StaleCache):
        net.backward(np.zeros((2, 2), np.float32))
    net.forward(x, train=True)
    _, dl = loss_softmax_xent(net.forward(x, train=True), np.array([0, 1]))
    net.backward(dl)
    with pytest.raises(StaleCache):
        net.backward(dl)


def test_debug_finite_guard():
    net = build_random_net()
    x = np.full((1, 1, 6, 6), np.inf, np.float32)
    set_debug_checks(True)
    try:
        with np.errstate(invalid="ignore"), pytest.raises(NonFiniteActivation):
            net.forward(x)
    finally:
        set_debug_checks(False)


def test_layer_spec_roundtrip():
    net = build_random_net()
    for layer in net.layers:
        clone = layer_from_spec(layer.spec())
        assert clone.spec() == layer.spec()


# ---- checkpoints ----

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = build_random_net(seed=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, 123, path)
    ckpt = load_checkpoint(path)
    assert ckpt.model == "tiny"
    assert ckpt.iteration == 123
    assert ckpt.layer_specs == net.layer_specs()
    for (name, arr), loaded in zip(net.blocks(), ckpt.blocks):
        assert np.array_equal(arr, loaded), name
    # file-level determinism
    save_checkpoint(net, 123, tmp_path / "m2.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()


def test_checkpoint_rebuild_reproduces_outputs(tmp_path):
    net = build_random_net(seed=6)
    x = RNG.random((2, 1, 6, 6)).astype(np.float32)
    want = net.forward(x, train=False).copy()
    save_checkpoint(net, 1, tmp_path / "m.ckpt")
    net2 = load_checkpoint(tmp_path / "m.ckpt").build()
    got = net2.forward(x, train=False)
    assert np.array_equal(want, got)


def test_checkpoint_truncated_and_bad_magic(tmp_path):
    net = build_random_net()
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, 0, path)
    raw = path.read_bytes()
    (tmp_path / "trunc.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises((BadMagic, IoFailure)):
        load_checkpoint(tmp_path / "trunc.ckpt")
    bumped = b"CEF2" + raw[4:]
    (tmp_path / "v2.ckpt").write_bytes(bumped)
    with pytest.raises(BadMagic):
        load_checkpoint(tmp_path / "v2.ckpt")
    (tmp_path / "noise.ckpt").write_bytes(b"XX")
    with pytest.raises(BadMagic):
        load_checkpoint(tmp_path / "noise.ckpt")


def test_checkpoint_spec_mismatch(tmp_path):
    from ceforensics.errors import SpecMismatch
    from ceforensics.nn import require_same_spec

    net = build_random_net(seed=1)
    ckpt = checkpoint_from_network(net, 0)
    other = Network("tiny", [FC(8, 2), SoftmaxLoss(2)], dtype=np.float32)
    with pytest.raises(SpecMismatch):
        require_same_spec(ckpt, other)
    with pytest.raises(ShapeMismatch):
        other.load_blocks(ckpt.blocks)
