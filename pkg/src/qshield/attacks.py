"""Gradient-sign attacks against a pixel-differentiable classifier.

Both attacks maximize the victim's cross-entropy at the true label by
stepping along sign(dL/dx) in pixel space. The model is anything with a
loss_pixel_grad(images, labels) -> (losses, grads) method; gradients flow
through the full classification chain, including the amplitude-encoding
normalization.

FGSM is the single step x + eps * sign(g). PGD iterates smaller signed
steps, after each one clipping to the L-inf ball of radius eps around the
original image and then, when clip_pixels is set, to the valid pixel range
[0, 1]. With steps=1, alpha=eps and clipping off, PGD reduces to FGSM
exactly. sign(0) is 0, so a zero gradient moves nothing, and eps=0 returns
the input unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeMismatch
from .rng import derive, uniform_array

ATTACK_KINDS = ("fgsm", "pgd")


@dataclass
class AttackConfig:
    kind: str = "pgd"
    epsilon: float = 0.3
    steps: int = 10
    alpha: float | None = None  # None means epsilon / 4
    clip_pixels: bool = True
    random_start: bool = False
    seed: int = 0

    def validate(self) -> "AttackConfig":
        if self.kind not in ATTACK_KINDS:
            raise ShapeMismatch(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ShapeMismatch(f"negative epsilon {self.epsilon}")
        if self.steps < 1:
            raise ShapeMismatch(f"steps must be >= 1, got {self.steps}")
        if self.alpha is not None and self.alpha < 0:
            raise ShapeMismatch(f"negative alpha {self.alpha}")
        return self

    def resolved_alpha(self) -> float:
        return self.epsilon / 4.0 if self.alpha is None else self.alpha


@dataclass
class AdversarialBatch:
    """Attack output kept next to everything needed to reuse it later."""

    originals: np.ndarray  # (B, 28, 28) float64 in [0, 1]
    adversarials: np.ndarray  # same shape, within eps of originals
    labels: np.ndarray  # (B,) true labels
    config: AttackConfig
    model_tag: str = ""


def _as_flat(images: np.ndarray) -> tuple[np.ndarray, tuple]:
    images = np.asarray(images, dtype=np.float64)
    shape = images.shape
    if images.ndim == 1:
        return images[None, :].copy(), shape
    return images.reshape(shape[0], -1).copy(), shape


def fgsm(model, images: np.ndarray, labels: np.ndarray, config: AttackConfig) -> np.ndarray:
    """One signed gradient step of size epsilon."""
    config.validate()
    flat, shape = _as_flat(images)
    _, grads = model.loss_pixel_grad(flat, labels)
    adv = flat + config.epsilon * np.sign(grads)
    if config.clip_pixels:
        np.clip(adv, 0.0, 1.0, out=adv)
    return adv.reshape(shape)


def pgd(model, images: np.ndarray, labels: np.ndarray, config: AttackConfig) -> np.ndarray:
    """Iterated signed steps projected onto the eps ball each iteration."""
    config.validate()
    flat, shape = _as_flat(images)
    eps = config.epsilon
    alpha = config.resolved_alpha()
    lo, hi = flat - eps, flat + eps
    x = flat.copy()
    if config.random_start and eps > 0:
        x += uniform_array(derive(config.seed, "pgd-start"), x.shape, -eps, eps)
        np.clip(x, lo, hi, out=x)
        if config.clip_pixels:
            np.clip(x, 0.0, 1.0, out=x)
    for _ in range(config.steps):
        _, grads = model.loss_pixel_grad(x, labels)
        x += alpha * np.sign(grads)
        np.clip(x, lo, hi, out=x)
        if config.clip_pixels:
            np.clip(x, 0.0, 1.0, out=x)
    return x.reshape(shape)


def run_attack(model, images: np.ndarray, labels: np.ndarray, config: AttackConfig) -> np.ndarray:
    return (fgsm if config.kind == "fgsm" else pgd)(model, images, labels, config)


def linf_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.asarray(a).size else 0.0


def attack_batch(
    model,
    images: np.ndarray,
    labels: np.ndarray,
    config: AttackConfig,
) -> AdversarialBatch:
    """Attack a batch and package originals, adversarials and provenance.

    Verifies the L-inf budget before returning; a violation here is a bug in
    the attack, not recoverable state, so it raises.
    """
    config.validate()
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim == 2:
        side = int(round(np.sqrt(images.shape[1])))
        if side * side != images.shape[1]:
            raise ShapeMismatch(f"cannot fold {images.shape[1]} pixels into a square")
        images = images.reshape(images.shape[0], side, side)
    if labels.shape != (images.shape[0],):
        raise ShapeMismatch(f"labels {labels.shape} for {images.shape[0]} images")
    adv = run_attack(model, images, labels, config)
    worst = linf_distance(adv, images)
    # written so NaN fails too, not only a finite overshoot
    if not worst <= config.epsilon + 1e-12:
        raise ShapeMismatch(
            f"attack exceeded its budget: L-inf {worst} > eps {config.epsilon}"
        )
    return AdversarialBatch(
        originals=images.copy(),
        adversarials=adv,
        labels=labels.copy(),
        config=replace(config),
        model_tag=getattr(model, "tag", ""),
    )
