import numpy as np
import pytest

from qshield import cednet
from qshield.cednet import AeTrainConfig
from qshield.errors import ShapeMismatch


@pytest.fixture(scope="module")
def params():
    return cednet.init_ae_params(seed=13)


def test_init_is_deterministic_and_biases_zero():
    a = cednet.init_ae_params(seed=4)
    b = cednet.init_ae_params(seed=4)
    for name in cednet.AeParams.FIELDS:
        assert np.array_equal(getattr(a, name), getattr(b, name))
    for name in cednet.AeParams.FIELDS:
        if name.endswith("_b"):
            assert np.all(getattr(a, name) == 0.0)


def test_init_seed_fans_out_per_field():
    a = cednet.init_ae_params(seed=4)
    c = cednet.init_ae_params(seed=5)
    assert not np.array_equal(a.conv1_w, c.conv1_w)
    # different fields of the same seed must not share a stream
    assert a.conv1_w.reshape(-1)[0] != a.conv2_w.reshape(-1)[0]


def test_param_shapes_match_contract(params):
    for name, shape in cednet.AeParams.SHAPES.items():
        assert getattr(params, name).shape == shape


def test_im2col_col2im_are_adjoint():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 3, 6, 6))
    cols = cednet.im2col(x, 3, 2, 1)
    y = rng.normal(size=cols.shape)
    lhs = float(np.sum(cols * y))
    rhs = float(np.sum(x * cednet.col2im(y, x.shape, 3, 2, 1)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conv_methods_agree():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 9, 9))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    a = cednet.conv2d(x, w, b, 2, 1, method="im2col")
    d = cednet.conv2d(x, w, b, 2, 1, method="direct")
    assert np.allclose(a, d, atol=1e-12)
    wt = rng.normal(size=(3, 2, 3, 3))
    bt = rng.normal(size=2)
    at = cednet.conv_transpose2d(x, wt, bt, 2, 1, 1, method="im2col")
    dt = cednet.conv_transpose2d(x, wt, bt, 2, 1, 1, method="direct")
    assert np.allclose(at, dt, atol=1e-12)


def test_conv_rejects_bad_shapes():
    with pytest.raises(ShapeMismatch):
        cednet.conv2d(np.zeros((2, 3, 5, 5)), np.zeros((4, 2, 3, 3)), np.zeros(4))
    with pytest.raises(ShapeMismatch):
        cednet.conv_transpose2d(
            np.zeros((1, 2, 4, 4)), np.zeros((2, 1, 3, 3)), np.zeros(1), 2, 1, 2
        )  # output_padding must stay below stride


def test_ae_forward_shapes_and_range(params):
    rng = np.random.default_rng(5)
    imgs = rng.uniform(0, 1, size=(3, 28, 28))
    out, cache = cednet.ae_forward(params, imgs)
    assert out.shape == (3, 1, 28, 28)
    assert np.all(out > 0) and np.all(out < 1)  # sigmoid output
    assert cache["z"].shape == (3, cednet.CODE_SIZE)


def test_ae_rejects_wrong_image_size(params):
    with pytest.raises(ShapeMismatch):
        cednet.ae_forward(params, np.zeros((2, 27, 27)))


def test_encode_decode_compose_to_forward(params):
    rng = np.random.default_rng(6)
    imgs = rng.uniform(0, 1, size=(2, 28, 28))
    codes = cednet.encode(params, imgs)
    assert codes.shape == (2, cednet.CODE_SIZE)
    assert np.all(codes >= 0)  # relu codes
    via_parts = cednet.decode(params, codes)
    full, _ = cednet.ae_forward(params, imgs)
    assert np.allclose(via_parts, full, atol=1e-12)


def test_decode_rejects_wrong_code_size(params):
    with pytest.raises(ShapeMismatch):
        cednet.decode(params, np.zeros((2, 19)))


def test_reconstruct_batch_preserves_layout(params):
    rng = np.random.default_rng(7)
    square = rng.uniform(0, 1, size=(4, 28, 28))
    flat = square.reshape(4, 784)
    r_sq = cednet.reconstruct_batch(params, square)
    r_fl = cednet.reconstruct_batch(params, flat)
    assert r_sq.shape == (4, 28, 28)
    assert r_fl.shape == (4, 784)
    assert np.array_equal(r_sq.reshape(4, 784), r_fl)


def test_reconstruct_batch_chunking_and_repeatability(params):
    rng = np.random.default_rng(8)
    imgs = rng.uniform(0, 1, size=(5, 28, 28))
    a = cednet.reconstruct_batch(params, imgs, batch_size=2)
    b = cednet.reconstruct_batch(params, imgs, batch_size=512)
    # BLAS blocking may differ with the batch dimension (observed 1 ulp);
    # repeated calls at a fixed batch size must be bit-identical, which is
    # what the pipeline's determinism rests on
    assert np.allclose(a, b, atol=1e-12)
    assert np.array_equal(a, cednet.reconstruct_batch(params, imgs, batch_size=2))


def test_ae_backward_input_gradient_matches_fd(params):
    rng = np.random.default_rng(9)
    imgs = rng.uniform(0.2, 0.8, size=(1, 1, 28, 28))
    target = rng.uniform(0, 1, size=(1, 1, 28, 28))
    out, cache = cednet.ae_forward(params, imgs)
    diff = out - target
    loss0 = float(np.mean(diff * diff))
    _, d_x = cednet.ae_backward(params, cache, (2.0 / diff.size) * diff)
    h = 1e-5
    for idx in rng.choice(784, size=5, replace=False):
        pert = imgs.copy()
        pert.reshape(-1)[idx] += h
        up = float(np.mean((cednet.ae_forward(params, pert)[0] - target) ** 2))
        pert.reshape(-1)[idx] -= 2 * h
        down = float(np.mean((cednet.ae_forward(params, pert)[0] - target) ** 2))
        fd = (up - down) / (2 * h)
        assert d_x.reshape(-1)[idx] == pytest.approx(fd, rel=2e-4, abs=1e-9)
    assert loss0 > 0


def test_dataset_loss_matches_manual(params):
    rng = np.random.default_rng(10)
    adv = rng.uniform(0, 1, size=(3, 28, 28))
    clean = rng.uniform(0, 1, size=(3, 28, 28))
    recon, _ = cednet.ae_forward(params, adv)
    want = float(np.mean((recon - clean.reshape(recon.shape)) ** 2))
    assert cednet.dataset_loss(params, adv, clean) == pytest.approx(want, rel=1e-12)
    assert cednet.dataset_loss(params, adv, clean, batch_size=1) == pytest.approx(want, rel=1e-12)


def test_training_reduces_loss_and_logs_prefix():
    rng = np.random.default_rng(11)
    clean = rng.uniform(0, 1, size=(24, 28, 28))
    adv = np.clip(clean + rng.uniform(-0.3, 0.3, size=clean.shape), 0, 1)
    cfg = AeTrainConfig(learning_rate=0.01, batch_size=8, epochs=3, seed=1)
    params, losses = cednet.train_autoencoder(adv, clean, cfg)
    assert len(losses) == cfg.epochs + 1  # entry 0 is the pre-training loss
    assert losses[-1] < losses[0]


def test_training_is_bit_reproducible():
    rng = np.random.default_rng(12)
    clean = rng.uniform(0, 1, size=(16, 28, 28))
    adv = np.clip(clean + 0.1, 0, 1)
    cfg = AeTrainConfig(learning_rate=0.005, batch_size=8, epochs=2, seed=3)
    p1, l1 = cednet.train_autoencoder(adv, clean, cfg)
    p2, l2 = cednet.train_autoencoder(adv, clean, cfg)
    assert l1 == l2
    for name in cednet.AeParams.FIELDS:
        assert np.array_equal(getattr(p1, name), getattr(p2, name))


def test_training_rejects_mismatched_pairs():
    with pytest.raises(ShapeMismatch):
        cednet.train_autoencoder(
            np.zeros((4, 28, 28)), np.zeros((5, 28, 28)), AeTrainConfig(epochs=1)
        )
