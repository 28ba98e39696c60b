"""Small numerical building blocks shared by the classifier and the purifier.

Forward functions return plain arrays; backward functions take whatever the
forward cached (usually its own input or output) plus the upstream gradient.
Loss functions return (scalar loss, gradient w.r.t. predictions) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Gradient uses the pre-activation sign; exact zeros pass nothing."""
    return np.where(x > 0.0, d_out, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; no overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """y is the sigmoid output, not its input."""
    return d_out * y * (1.0 - y)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample CE losses and d(loss_b)/d(logits_b).

    logits (B, C), labels (B,) integer class ids. Returns losses (B,) and
    gradients (B, C) = softmax - onehot, not averaged; callers decide how to
    reduce over the batch.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(
            f"cross entropy got logits {logits.shape}, labels {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeMismatch("label out of range for logits width")
    p = softmax(logits)
    rows = np.arange(logits.shape[0])
    losses = -np.log(np.maximum(p[rows, labels], np.finfo(np.float64).tiny))
    d_logits = p.copy()
    d_logits[rows, labels] -= 1.0
    return losses, d_logits


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over all elements; gradient matches pred's shape."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x @ w.T + b with x (B, n_in), w (n_out, n_in), b (n_out,)."""
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatch(
            f"fc shapes: x {x.shape}, w {w.shape}, b {b.shape}"
        )
    return x @ w.T + b


def fc_backward(
    x: np.ndarray, w: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d_x, d_w, d_b) for the batched forward above."""
    d_x = d_out @ w
    d_w = d_out.T @ x
    d_b = d_out.sum(axis=0)
    return d_x, d_w, d_b


@dataclass
class AdamState:
    """First/second moment buffers, one pair per parameter array."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: list[np.ndarray]) -> AdamState:
    state = AdamState()
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]
    return state


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One in-place update: p -= lr * m_hat / (sqrt(v_hat) + eps)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch(
            f"adam got {len(params)} params, {len(grads)} grads, state of {len(state.m)}"
        )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"adam grad shape {g.shape} vs param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
