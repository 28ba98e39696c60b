"""Quantum variational classifier.

Pixels are amplitude-encoded onto 10 qubits, pushed through the layered
Rot + CZ ansatz, and read out as the 10 single-qubit Z expectations, which
serve directly as class logits (argmax wins, ties to the lowest index).
Training minimizes softmax cross-entropy with Adam on the rotation angles.

Angle gradients go through the adjoint sweep by default; grad_mode
"parameter-shift" swaps in the two-evaluations-per-angle rule, which is far
slower but shares no code path with the adjoint sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffsim
from .errors import ShapeMismatch
from .numerics import adam_init, adam_step, softmax_cross_entropy
from .rng import derive, permutation, uniform_array

GRAD_MODES = ("adjoint", "parameter-shift")
VERSION = "qvc-1"


@dataclass
class QvcParams:
    angles: np.ndarray  # (n_layers, n_qubits, 3)
    n_qubits: int = 10
    n_layers: int = 1
    topology: str = "ring"
    version: str = VERSION

    def validate(self) -> "QvcParams":
        want = (self.n_layers, self.n_qubits, 3)
        if self.angles.shape != want:
            raise ShapeMismatch(f"angles shape {self.angles.shape}, expected {want}")
        return self

    def tape(self) -> diffsim.CircuitTape:
        return diffsim.build_tape(self.n_qubits, self.n_layers, self.topology)


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    batch_size: int = 256
    epochs: int = 20
    seed: int = 0


@dataclass
class TrainMetrics:
    epoch_losses: list = field(default_factory=list)  # mean CE per epoch
    epoch_accuracies: list = field(default_factory=list)  # eval acc after each epoch
    n_steps: int = 0


def init_params(
    n_layers: int, seed: int, n_qubits: int = 10, topology: str = "ring"
) -> QvcParams:
    """Angles drawn Uniform[0, 2pi); n_layers=100 on 10 qubits is 3000 angles."""
    if n_layers < 1:
        raise ShapeMismatch(f"need at least one layer, got {n_layers}")
    angles = uniform_array(seed, (n_layers, n_qubits, 3), 0.0, 2.0 * np.pi)
    return QvcParams(angles, n_qubits, n_layers, topology).validate()


def _flatten_images(images: np.ndarray, n_pixels: int = 784) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 1:
        images = images[None, :]
    flat = images.reshape(images.shape[0], -1)
    if flat.shape[1] != n_pixels:
        raise ShapeMismatch(f"expected {n_pixels} pixels per image, got {flat.shape[1]}")
    return flat


def forward_logits(params: QvcParams, images: np.ndarray, workers: int = 1) -> np.ndarray:
    """Logits (B, n_qubits) for images given as (B, 28, 28) or (B, 784)."""
    params.validate()
    flat = _flatten_images(images)
    exps, _ = diffsim.forward_pixels(params.tape(), params.angles, flat, workers)
    return exps


def predict(params: QvcParams, images: np.ndarray, workers: int = 1) -> np.ndarray:
    return np.argmax(forward_logits(params, images, workers), axis=1)


def evaluate_accuracy(
    params: QvcParams,
    images: np.ndarray,
    labels: np.ndarray,
    workers: int = 1,
    batch_size: int = 512,
) -> float:
    """Fraction of argmax hits, streamed in chunks to bound memory."""
    flat = _flatten_images(images)
    labels = np.asarray(labels)
    if labels.shape != (flat.shape[0],):
        raise ShapeMismatch(f"labels {labels.shape} for {flat.shape[0]} images")
    hits = 0
    for start in range(0, flat.shape[0], batch_size):
        chunk = flat[start : start + batch_size]
        logits = forward_logits(params, chunk, workers)
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + chunk.shape[0]]))
    return hits / flat.shape[0] if flat.shape[0] else 0.0


def batch_loss_and_grads(
    params: QvcParams,
    images: np.ndarray,
    labels: np.ndarray,
    grad_mode: str = "adjoint",
    workers: int = 1,
) -> tuple[float, np.ndarray]:
    """Mean CE over the batch and its gradient w.r.t. the angles."""
    if grad_mode not in GRAD_MODES:
        raise ShapeMismatch(f"unknown grad_mode {grad_mode!r}")
    flat = _flatten_images(images)
    tape = params.tape()
    exps, cache = diffsim.forward_pixels(tape, params.angles, flat, workers)
    losses, d_logits = softmax_cross_entropy(exps, labels)
    d_exps = d_logits / flat.shape[0]
    if grad_mode == "adjoint":
        bundle = diffsim.backward(cache, d_exps, workers)
        d_params = bundle.d_params
    else:
        states = diffsim.encode_batch(flat, tape.n_qubits)
        d_params = diffsim.parameter_shift(tape, params.angles, states, d_exps, workers)
    return float(np.mean(losses)), d_params


def train_qvc(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    n_layers: int,
    config: TrainConfig,
    eval_images: np.ndarray | None = None,
    eval_labels: np.ndarray | None = None,
    n_qubits: int = 10,
    topology: str = "ring",
    grad_mode: str = "adjoint",
    workers: int = 1,
) -> tuple[QvcParams, TrainMetrics]:
    """Minibatch Adam training, bit-reproducible for a fixed config.

    config.seed fans out: derive(seed, "init") draws the starting angles,
    derive(seed, "shuffle") + epoch index orders each epoch's batches.
    Metrics record the mean training loss per epoch and, when an eval set is
    supplied, accuracy on it after every epoch.
    """
    flat = _flatten_images(train_images)
    labels = np.asarray(train_labels)
    if labels.shape != (flat.shape[0],):
        raise ShapeMismatch(f"labels {labels.shape} for {flat.shape[0]} images")
    params = init_params(n_layers, derive(config.seed, "init"), n_qubits, topology)
    opt = adam_init([params.angles])
    metrics = TrainMetrics()
    shuffle_root = derive(config.seed, "shuffle")
    for epoch in range(config.epochs):
        order = permutation(flat.shape[0], derive(shuffle_root, f"epoch{epoch}"))
        total = 0.0
        for start in range(0, flat.shape[0], config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, d_params = batch_loss_and_grads(
                params, flat[idx], labels[idx], grad_mode, workers
            )
            adam_step([params.angles], [d_params], opt, config.learning_rate)
            total += loss * idx.size
            metrics.n_steps += 1
        metrics.epoch_losses.append(total / flat.shape[0])
        if eval_images is not None:
            metrics.epoch_accuracies.append(
                evaluate_accuracy(params, eval_images, eval_labels, workers)
            )
    return params, metrics


@dataclass
class QvcModel:
    """Bound classifier: parameters plus execution settings.

    The attack module talks to this interface only, so anything exposing
    loss_pixel_grad with the same shapes can stand in for the real circuit.
    """

    params: QvcParams
    grad_mode: str = "adjoint"
    workers: int = 1
    tag: str = ""

    def __post_init__(self):
        self.params.validate()
        if not self.tag:
            p = self.params
            self.tag = f"qvc-L{p.n_layers}-q{p.n_qubits}-{p.topology}"

    def logits(self, images: np.ndarray) -> np.ndarray:
        return forward_logits(self.params, images, self.workers)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return predict(self.params, images, self.workers)

    def accuracy(self, images: np.ndarray, labels: np.ndarray) -> float:
        return evaluate_accuracy(self.params, images, labels, self.workers)

    def loss_pixel_grad(
        self, images: np.ndarray, labels: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample CE losses (B,) and dCE/dpixel (B, 784).

        This is the white-box surface the attacks differentiate through:
        logits, softmax CE, and the encoding normalization chain rule.
        """
        flat = _flatten_images(images)
        labels = np.asarray(labels)
        exps, cache = diffsim.forward_pixels(
            self.params.tape(), self.params.angles, flat, self.workers
        )
        losses, d_logits = softmax_cross_entropy(exps, labels)
        bundle = diffsim.input_gradients(cache, d_logits, self.workers)
        return losses, bundle.d_input_pixels
