import numpy as np
import pytest

from ossikit.errors import ConfigError, DivergenceError
from ossikit.models import (ArchConfig, TrainConfig, build_dae, build_network,
                            build_plain_cnn, build_unet, dataset_psnr, denoise,
                            load_checkpoint, save_checkpoint, train)
from ossikit.nn.layers import ConcatSkip

DIMS = 64


def _cfg(arch, **kw):
    base = dict(base_channels=8, height=DIMS, width=DIMS)
    base.update(kw)
    return ArchConfig(arch, **base)


def _rng(seed=0):
    return np.random.default_rng(seed)


@pytest.mark.parametrize("arch", ["dae", "unet", "plaincnn"])
def test_forward_preserves_shape(arch):
    net = build_network(_cfg(arch), rng=_rng())
    x = _rng(1).random((2, 1, DIMS, DIMS), dtype=np.float32)
    y = net.forward(x)
    assert y.shape == x.shape


@pytest.mark.parametrize("arch", ["dae", "unet", "plaincnn"])
def test_output_in_unit_range_any_params(arch):
    net = build_network(_cfg(arch), rng=_rng(7))
    for p in net.params().values():
        p *= 3.0  # exaggerate parameters; sigmoid still bounds the output
    x = (_rng(2).random((1, 1, DIMS, DIMS), dtype=np.float32) - 0.3) * 5
    y = net.forward(x)
    assert y.min() >= 0.0 and y.max() <= 1.0


def test_dae_has_fewer_params_than_unet():
    dae = build_dae(_cfg("dae"), rng=_rng())
    unet = build_unet(_cfg("unet"), rng=_rng())
    assert dae.num_params() < unet.num_params()


def test_dae_latent_is_eighth_resolution():
    net = build_dae(_cfg("dae"), rng=_rng())
    tape = {}
    net.forward(_rng(0).random((1, 1, DIMS, DIMS), dtype=np.float32), tape=tape)
    # encoder output: node 5 output after 3 stride-2 convs (conv,relu)*3
    latent = tape["outputs"][5]
    assert latent.shape[2:] == (DIMS // 8, DIMS // 8)


def test_unet_skip_dims_match_decoder():
    net = build_unet(_cfg("unet"), rng=_rng())
    tape = {}
    net.forward(_rng(0).random((1, 1, DIMS, DIMS), dtype=np.float32), tape=tape)
    for i, node in enumerate(net.nodes):
        if isinstance(node.layer, ConcatSkip):
            a, b = (tape["outputs"][j] for j in node.inputs)
            assert a.shape == b.shape


def test_unet_muted_skips_still_well_formed():
    net = build_unet(_cfg("unet"), rng=_rng())
    for node in net.nodes:
        if isinstance(node.layer, ConcatSkip):
            node.layer.mute = True
    y = net.forward(_rng(3).random((1, 1, DIMS, DIMS), dtype=np.float32))
    assert y.shape == (1, 1, DIMS, DIMS)
    assert np.all(np.isfinite(y))


def test_plaincnn_zero_weights_is_sigmoid_of_input():
    net = build_plain_cnn(_cfg("plaincnn", depth=4), rng=None)  # zero-init
    x = _rng(4).random((1, 1, DIMS, DIMS), dtype=np.float32)
    y = net.forward(x)
    assert np.allclose(y, 1.0 / (1.0 + np.exp(-x.astype(np.float64))), atol=1e-6)


def test_plaincnn_gradients_reach_all_layers():
    from ossikit.nn.layers import mse_loss

    net = build_plain_cnn(_cfg("plaincnn", depth=4), rng=_rng(5))
    x = _rng(6).random((2, 1, DIMS, DIMS), dtype=np.float32)
    t = _rng(7).random((2, 1, DIMS, DIMS), dtype=np.float32)
    tape = {}
    pred = net.forward(x, training=True, tape=tape)
    _, d = mse_loss(pred, t)
    _, grads = net.backward(d, tape)
    for key, g in grads.items():
        assert np.any(g != 0.0), key


def test_arch_config_validation():
    with pytest.raises(ConfigError):
        ArchConfig("dae", height=100, width=64)
    with pytest.raises(ConfigError):
        ArchConfig("mlp")


def _toy_data(n=8, dims=DIMS, seed=0):
    rng = _rng(seed)
    clean = rng.random((n, 1, dims, dims), dtype=np.float32)
    noisy = np.clip(clean + 0.1 * rng.standard_normal(clean.shape).astype(np.float32), 0, 1)
    return noisy, clean


def test_train_step_bookkeeping():
    noisy, clean = _toy_data(n=8)
    net = build_network(_cfg("dae"), rng=_rng(1))
    hist = train(net, noisy, clean, TrainConfig(epochs=1, batch_size=4, lr=1e-3,
                                                seed=0, val_fraction=0.0))
    assert len(hist) == 1
    assert hist[0]["steps"] == 2  # 8 items / batch 4 -> exactly 2 optimizer steps


def test_train_epochs_zero_keeps_initialization():
    noisy, clean = _toy_data(n=4)
    net = build_network(_cfg("dae"), rng=_rng(2))
    before = net.copy_state()
    hist = train(net, noisy, clean, TrainConfig(epochs=0, batch_size=2, val_fraction=0.0))
    assert hist == []
    for k, v in net.state_arrays().items():
        assert np.array_equal(v, before[k])


def test_train_deterministic_under_seed(tmp_path):
    noisy, clean = _toy_data(n=6)

    def run(out):
        net = build_network(_cfg("dae"), rng=np.random.default_rng((3, 0)))
        train(net, noisy, clean, TrainConfig(epochs=2, batch_size=2, lr=1e-3, seed=3,
                                             val_fraction=0.0), out_dir=out)
        net.save(out / "final.nnc1")

    run(tmp_path / "a")
    run(tmp_path / "b")
    assert (tmp_path / "a/final.nnc1").read_bytes() == (tmp_path / "b/final.nnc1").read_bytes()


def test_train_divergence_raises_and_keeps_checkpoint(tmp_path):
    noisy, clean = _toy_data(n=4)
    net = build_network(_cfg("dae"), rng=_rng(4))
    cfg = TrainConfig(epochs=3, batch_size=2, lr=1e18, seed=0, val_fraction=0.0)
    with pytest.raises(DivergenceError):
        train(net, noisy, clean, cfg, out_dir=tmp_path)
    assert (tmp_path / "last_good.nnc1").is_file()
    load_checkpoint(tmp_path / "last_good.nnc1")


def test_train_loss_decreases_on_toy_problem():
    noisy, clean = _toy_data(n=8, seed=9)
    net = build_network(_cfg("dae"), rng=_rng(5))
    hist = train(net, noisy, clean, TrainConfig(epochs=8, batch_size=4, lr=2e-3,
                                                seed=1, val_fraction=0.0))
    assert hist[-1]["train_loss"] < hist[0]["train_loss"]


def test_train_validates_batch_size():
    noisy, clean = _toy_data(n=4)
    net = build_network(_cfg("dae"), rng=_rng(6))
    with pytest.raises(ConfigError):
        train(net, noisy, clean, TrainConfig(epochs=1, batch_size=64, val_fraction=0.0))


def test_denoise_multiple_of_16_direct():
    net = build_network(_cfg("dae"), rng=_rng(7))
    img = _rng(8).random((64, 64), dtype=np.float32)
    out = denoise(net, img)
    assert out.shape == (64, 64)
    assert np.array_equal(out, net.forward(img[None, None])[0, 0])


def test_denoise_pads_and_crops_odd_sizes():
    net = build_network(_cfg("dae"), rng=_rng(9))
    for dims in ((50, 50), (64, 41), (17, 90)):
        img = _rng(10).random(dims, dtype=np.float32)
        out = denoise(net, img)
        assert out.shape == dims
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_checkpoint_helpers_round_trip(tmp_path):
    net = build_network(_cfg("unet"), rng=_rng(11))
    save_checkpoint(net, tmp_path / "u.nnc1")
    net2 = load_checkpoint(tmp_path / "u.nnc1")
    x = _rng(12).random((1, 1, DIMS, DIMS), dtype=np.float32)
    assert np.array_equal(net.forward(x), net2.forward(x))


def test_dataset_psnr_monotone_with_quality():
    noisy, clean = _toy_data(n=4, seed=13)

    class Id:
        def forward(self, x, training=False):
            return x

    worse = np.clip(clean + 0.3 * _rng(14).standard_normal(clean.shape).astype(np.float32), 0, 1)
    assert dataset_psnr(Id(), noisy, clean) > dataset_psnr(Id(), worse, clean)
