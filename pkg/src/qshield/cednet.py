"""Convolutional encoder-decoder used to purify attacked images.

Shapes, fixed by construction for 28x28 single-channel input:

  encoder  conv 1->16, k3 s2 p1   (B, 16, 14, 14)  relu
           conv 16->32, k3 s2 p1  (B, 32, 7, 7)    relu
           flatten                (B, 1568)
           fc 1568->20            (B, 20)          relu   = code z
  decoder  fc 20->1568            (B, 1568)        relu
           reshape                (B, 32, 7, 7)
           deconv 32->16, k3 s2 p1 op1  (B, 16, 14, 14)   relu
           deconv 16->1,  k3 s2 p1 op1  (B, 1, 28, 28)    sigmoid

Convolutions run through an im2col/matmul path by default; a plain-loop
"direct" path computes the same arithmetic independently for checking.
Transposed convolution weights use the (C_in, C_out, k, k) layout, which
makes conv_transpose2d(w) the exact adjoint of conv2d(w) for matching
stride and padding. All backward passes are hand-derived.

Training minimizes MSE between reconstructed adversarial images and their
clean originals with Adam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeMismatch
from .numerics import (
    adam_init,
    adam_step,
    fc_backward,
    fc_forward,
    mse,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
)
from .rng import derive, normal_array, permutation

CODE_SIZE = 20
FLAT_SIZE = 32 * 7 * 7


@dataclass
class AeTrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 256
    epochs: int = 20
    seed: int = 0


@dataclass
class AeParams:
    conv1_w: np.ndarray  # (16, 1, 3, 3)
    conv1_b: np.ndarray
    conv2_w: np.ndarray  # (32, 16, 3, 3)
    conv2_b: np.ndarray
    fc_enc_w: np.ndarray  # (20, 1568)
    fc_enc_b: np.ndarray
    fc_dec_w: np.ndarray  # (1568, 20)
    fc_dec_b: np.ndarray
    deconv1_w: np.ndarray  # (32, 16, 3, 3) as (C_in, C_out, k, k)
    deconv1_b: np.ndarray
    deconv2_w: np.ndarray  # (16, 1, 3, 3)
    deconv2_b: np.ndarray
    version: str = "ced-1"

    FIELDS = (
        "conv1_w", "conv1_b", "conv2_w", "conv2_b",
        "fc_enc_w", "fc_enc_b", "fc_dec_w", "fc_dec_b",
        "deconv1_w", "deconv1_b", "deconv2_w", "deconv2_b",
    )

    SHAPES = {
        "conv1_w": (16, 1, 3, 3), "conv1_b": (16,),
        "conv2_w": (32, 16, 3, 3), "conv2_b": (32,),
        "fc_enc_w": (CODE_SIZE, FLAT_SIZE), "fc_enc_b": (CODE_SIZE,),
        "fc_dec_w": (FLAT_SIZE, CODE_SIZE), "fc_dec_b": (FLAT_SIZE,),
        "deconv1_w": (32, 16, 3, 3), "deconv1_b": (16,),
        "deconv2_w": (16, 1, 3, 3), "deconv2_b": (1,),
    }

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.FIELDS]

    def validate(self) -> "AeParams":
        for name in self.FIELDS:
            got = getattr(self, name).shape
            if got != self.SHAPES[name]:
                raise ShapeMismatch(f"{name} has shape {got}, expected {self.SHAPES[name]}")
        return self


def init_ae_params(seed: int) -> AeParams:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases.

    fan_in counts the values feeding one output unit: C_in * k * k for both
    conv layouts, n_in for fc. Each array gets its own derived stream, so
    the draw for one layer never depends on another layer's size.
    """
    arrays = {}
    for name in AeParams.FIELDS:
        shape = AeParams.SHAPES[name]
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = shape[0] * shape[2] * shape[3] if len(shape) == 4 else shape[1]
            if name.startswith(("conv1", "conv2")):
                fan_in = shape[1] * shape[2] * shape[3]
            std = np.sqrt(2.0 / fan_in)
            arrays[name] = std * normal_array(derive(seed, name), shape)
    return AeParams(**arrays).validate()


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """Gather k x k patches into columns: (B, C, H, W) -> (B, C*k*k, L)."""
    b, c, h, w = x.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    i0 = np.repeat(np.arange(k), k)
    j0 = np.tile(np.arange(k), k)
    i1 = stride * np.repeat(np.arange(out_h), out_w)
    j1 = stride * np.tile(np.arange(out_w), out_h)
    rows = i0[:, None] + i1[None, :]
    cols = j0[:, None] + j1[None, :]
    patches = xp[:, :, rows, cols]  # (B, C, k*k, L)
    return patches.reshape(b, c * k * k, out_h * out_w)


def col2im(cols: np.ndarray, x_shape: tuple, k: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add columns back to image space; exact adjoint of im2col."""
    b, c, h, w = x_shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    return _kernels.col2im_add(cols, b, c, h, w, k, stride, pad, out_h, out_w)


def conv2d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    method: str = "im2col",
) -> np.ndarray:
    """Cross-correlation with weight layout (C_out, C_in, k, k)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d got x {x.shape}, w {w.shape}")
    if method == "direct":
        return _kernels.conv2d_direct(x, w, b, stride, padding)
    o, _, k, _ = w.shape
    cols = im2col(x, k, stride, padding)
    out = np.matmul(w.reshape(o, -1), cols) + b[:, None]
    out_h = (x.shape[2] + 2 * padding - k) // stride + 1
    out_w = (x.shape[3] + 2 * padding - k) // stride + 1
    return out.reshape(x.shape[0], o, out_h, out_w)


def conv2d_backward(
    x: np.ndarray,
    w: np.ndarray,
    d_out: np.ndarray,
    stride: int,
    padding: int,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    o, _, k, _ = w.shape
    if cols is None:
        cols = im2col(x, k, stride, padding)
    d_mat = d_out.reshape(d_out.shape[0], o, -1)
    d_w = np.einsum("bol,bcl->oc", d_mat, cols).reshape(w.shape)
    d_b = d_out.sum(axis=(0, 2, 3))
    d_cols = np.matmul(w.reshape(o, -1).T, d_mat)
    d_x = col2im(d_cols, x.shape, k, stride, padding)
    return d_x, d_w, d_b


def conv_transpose2d(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
    method: str = "im2col",
) -> np.ndarray:
    """Transposed convolution with weight layout (C_in, C_out, k, k)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"conv_transpose2d got x {x.shape}, w {w.shape}")
    if output_padding >= stride:
        raise ShapeMismatch(
            f"output_padding {output_padding} must be smaller than stride {stride}"
        )
    if method == "direct":
        return _kernels.conv_transpose2d_direct(x, w, b, stride, padding, output_padding)
    bsz, c, h, width = x.shape
    _, o, k, _ = w.shape
    out_h = (h - 1) * stride - 2 * padding + k + output_padding
    out_w = (width - 1) * stride - 2 * padding + k + output_padding
    cols = np.matmul(w.reshape(c, -1).T, x.reshape(bsz, c, h * width))
    out = _kernels.col2im_add(cols, bsz, o, out_h, out_w, k, stride, padding, h, width)
    return out + b[None, :, None, None]


def conv_transpose2d_backward(
    x: np.ndarray,
    w: np.ndarray,
    d_out: np.ndarray,
    stride: int,
    padding: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    bsz, c, h, width = x.shape
    _, o, k, _ = w.shape
    d_cols = im2col(d_out, k, stride, padding)  # (B, O*k*k, h*width)
    x_mat = x.reshape(bsz, c, h * width)
    d_w = np.einsum("bch,bkh->ck", x_mat, d_cols).reshape(w.shape)
    d_b = d_out.sum(axis=(0, 2, 3))
    d_x = np.matmul(w.reshape(c, -1), d_cols).reshape(x.shape)
    return d_x, d_w, d_b


def _as_nchw(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        side = int(round(np.sqrt(images.shape[1])))
        images = images.reshape(images.shape[0], 1, side, side)
    elif images.ndim == 3:
        images = images[:, None, :, :]
    if images.ndim != 4 or images.shape[1:] != (1, 28, 28):
        raise ShapeMismatch(f"expected (B, 1, 28, 28) images, got {images.shape}")
    return images


def ae_forward(params: AeParams, images: np.ndarray) -> tuple[np.ndarray, dict]:
    """Full reconstruction pass; the cache feeds ae_backward."""
    x = _as_nchw(images)
    cache = {"x": x}
    cache["cols1"] = im2col(x, 3, 2, 1)
    c1 = np.matmul(params.conv1_w.reshape(16, -1), cache["cols1"]) + params.conv1_b[:, None]
    cache["c1_pre"] = c1.reshape(x.shape[0], 16, 14, 14)
    cache["r1"] = relu(cache["c1_pre"])
    cache["cols2"] = im2col(cache["r1"], 3, 2, 1)
    c2 = np.matmul(params.conv2_w.reshape(32, -1), cache["cols2"]) + params.conv2_b[:, None]
    cache["c2_pre"] = c2.reshape(x.shape[0], 32, 7, 7)
    r2 = relu(cache["c2_pre"])
    cache["flat"] = r2.reshape(x.shape[0], FLAT_SIZE)
    cache["fe_pre"] = fc_forward(cache["flat"], params.fc_enc_w, params.fc_enc_b)
    cache["z"] = relu(cache["fe_pre"])
    cache["fd_pre"] = fc_forward(cache["z"], params.fc_dec_w, params.fc_dec_b)
    rd = relu(cache["fd_pre"])
    cache["rd_img"] = rd.reshape(x.shape[0], 32, 7, 7)
    cache["d1_pre"] = conv_transpose2d(
        cache["rd_img"], params.deconv1_w, params.deconv1_b, 2, 1, 1
    )
    cache["r3"] = relu(cache["d1_pre"])
    cache["d2_pre"] = conv_transpose2d(
        cache["r3"], params.deconv2_w, params.deconv2_b, 2, 1, 1
    )
    out = sigmoid(cache["d2_pre"])
    cache["out"] = out
    return out, cache


def ae_backward(
    params: AeParams, cache: dict, d_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients in AeParams.FIELDS order plus the input gradient."""
    d = sigmoid_backward(cache["out"], d_out)
    d_r3, d_dc2w, d_dc2b = conv_transpose2d_backward(cache["r3"], params.deconv2_w, d, 2, 1)
    d = relu_backward(cache["d1_pre"], d_r3)
    d_rdimg, d_dc1w, d_dc1b = conv_transpose2d_backward(
        cache["rd_img"], params.deconv1_w, d, 2, 1
    )
    d = relu_backward(cache["fd_pre"], d_rdimg.reshape(d_rdimg.shape[0], FLAT_SIZE))
    d_z, d_fdw, d_fdb = fc_backward(cache["z"], params.fc_dec_w, d)
    d = relu_backward(cache["fe_pre"], d_z)
    d_flat, d_few, d_feb = fc_backward(cache["flat"], params.fc_enc_w, d)
    d = relu_backward(cache["c2_pre"], d_flat.reshape(d_flat.shape[0], 32, 7, 7))
    d_r1, d_c2w, d_c2b = conv2d_backward(
        cache["r1"], params.conv2_w, d, 2, 1, cache["cols2"]
    )
    d = relu_backward(cache["c1_pre"], d_r1)
    d_x, d_c1w, d_c1b = conv2d_backward(cache["x"], params.conv1_w, d, 2, 1, cache["cols1"])
    grads = [
        d_c1w, d_c1b, d_c2w, d_c2b,
        d_few, d_feb, d_fdw, d_fdb,
        d_dc1w, d_dc1b, d_dc2w, d_dc2b,
    ]
    return grads, d_x


def encode(params: AeParams, images: np.ndarray) -> np.ndarray:
    """Images to 20-d codes."""
    x = _as_nchw(images)
    r1 = relu(conv2d(x, params.conv1_w, params.conv1_b, 2, 1))
    r2 = relu(conv2d(r1, params.conv2_w, params.conv2_b, 2, 1))
    return relu(fc_forward(r2.reshape(x.shape[0], FLAT_SIZE), params.fc_enc_w, params.fc_enc_b))


def decode(params: AeParams, codes: np.ndarray) -> np.ndarray:
    """Codes back to (B, 1, 28, 28) images."""
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim == 1:
        codes = codes[None, :]
    if codes.shape[1] != CODE_SIZE:
        raise ShapeMismatch(f"codes are {codes.shape[1]}-d, expected {CODE_SIZE}")
    rd = relu(fc_forward(codes, params.fc_dec_w, params.fc_dec_b))
    r3 = relu(
        conv_transpose2d(rd.reshape(codes.shape[0], 32, 7, 7), params.deconv1_w, params.deconv1_b, 2, 1, 1)
    )
    return sigmoid(conv_transpose2d(r3, params.deconv2_w, params.deconv2_b, 2, 1, 1))


def reconstruct_batch(
    params: AeParams, images: np.ndarray, batch_size: int = 512
) -> np.ndarray:
    """Purify a stack of images; output shape matches the input shape."""
    arr = np.asarray(images, dtype=np.float64)
    x = _as_nchw(arr)
    out = np.empty_like(x)
    for start in range(0, x.shape[0], batch_size):
        out[start : start + batch_size] = ae_forward(params, x[start : start + batch_size])[0]
    return out.reshape(arr.shape)


def dataset_loss(params: AeParams, adv: np.ndarray, clean: np.ndarray, batch_size: int = 512) -> float:
    """Forward-only MSE over a whole paired dataset."""
    adv4, clean4 = _as_nchw(adv), _as_nchw(clean)
    if adv4.shape != clean4.shape:
        raise ShapeMismatch(f"pair shapes differ: {adv4.shape} vs {clean4.shape}")
    total = 0.0
    for start in range(0, adv4.shape[0], batch_size):
        recon, _ = ae_forward(params, adv4[start : start + batch_size])
        target = clean4[start : start + batch_size]
        total += float(np.sum((recon - target) ** 2))
    return total / adv4.size


def train_autoencoder(
    adv_images: np.ndarray,
    clean_images: np.ndarray,
    config: AeTrainConfig,
) -> tuple[AeParams, list[float]]:
    """Train the purifier on (attacked, clean) pairs.

    Returns the parameters and a loss log of epochs + 1 entries: entry 0 is
    the pre-training full-set MSE (forward only), entry i the full-set MSE
    after epoch i. Bit-reproducible for a fixed config.
    """
    adv4, clean4 = _as_nchw(adv_images), _as_nchw(clean_images)
    if adv4.shape != clean4.shape:
        raise ShapeMismatch(f"pair shapes differ: {adv4.shape} vs {clean4.shape}")
    params = init_ae_params(derive(config.seed, "init"))
    opt = adam_init(params.as_list())
    losses = [dataset_loss(params, adv4, clean4)]
    shuffle_root = derive(config.seed, "shuffle")
    for epoch in range(config.epochs):
        order = permutation(adv4.shape[0], derive(shuffle_root, f"epoch{epoch}"))
        for start in range(0, adv4.shape[0], config.batch_size):
            idx = order[start : start + config.batch_size]
            recon, cache = ae_forward(params, adv4[idx])
            _, d_out = mse(recon, clean4[idx])
            grads, _ = ae_backward(params, cache, d_out)
            adam_step(params.as_list(), grads, opt, config.learning_rate)
        losses.append(dataset_loss(params, adv4, clean4))
    return params, losses
