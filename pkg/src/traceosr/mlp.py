"""Two-layer MLP classifier trained from scratch with Adam and cross-entropy.

Forward pass: x -> relu(x W1 + b1) -> W2 + b2 -> softmax. Initialization is
uniform in +-sqrt(6 / (fan_in + fan_out)) drawn from a seeded PCG64 stream,
and mini-batch order is a seeded permutation per epoch, so training is fully
deterministic for a given config. The last incomplete mini-batch is used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 128
    epochs: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: int = 128
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1 or self.hidden < 1:
            raise ValueError("batch_size, epochs and hidden must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "hidden": self.hidden,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }


@dataclass
class MlpModel:
    w1: np.ndarray  # F x H
    b1: np.ndarray  # H
    w2: np.ndarray  # H x W
    b2: np.ndarray  # W
    classes: tuple[str, ...]

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.w1.shape[0]:
            raise ShapeMismatch(f"input width {x.shape[1]} != model feature size {self.w1.shape[0]}")
        hidden = np.maximum(x @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    def predict(self, x: np.ndarray) -> tuple[int, np.ndarray]:
        """Predicted class index (argmax, lowest index on ties) and softmax vector."""
        probs = _softmax(self.logits(x))[0]
        return int(np.argmax(probs)), probs

    def predict_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        probs = _softmax(self.logits(x))
        return np.argmax(probs, axis=1), probs


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(n_features: int, classes: Sequence[str], config: TrainConfig) -> MlpModel:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((config.seed, 2))))
    h = config.hidden
    w = len(classes)
    return MlpModel(
        w1=_xavier(rng, n_features, h),
        b1=np.zeros(h),
        w2=_xavier(rng, h, w),
        b2=np.zeros(w),
        classes=tuple(classes),
    )


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and gradients for every parameter."""
    n = x.shape[0]
    z1 = x @ model.w1 + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2 + model.b2
    shifted = z2 - z2.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(n), y].mean())

    probs = np.exp(log_probs)
    dz2 = probs
    dz2[np.arange(n), y] -= 1.0
    dz2 /= n
    gw2 = a1.T @ dz2
    gb2 = dz2.sum(axis=0)
    da1 = dz2 @ model.w2.T
    dz1 = da1 * (z1 > 0.0)
    gw1 = x.T @ dz1
    gb1 = dz1.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def train(
    x: np.ndarray,
    labels: Sequence[str],
    config: TrainConfig = TrainConfig(),
    classes: Sequence[str] | None = None,
) -> tuple[MlpModel, list[float]]:
    """Train on string-labeled feature rows; returns the model and per-epoch losses."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D feature matrix, got shape {x.shape}")
    if x.shape[0] != len(labels):
        raise ShapeMismatch(f"{x.shape[0]} feature rows but {len(labels)} labels")
    if classes is None:
        classes = sorted(set(labels))
    index_of = {c: i for i, c in enumerate(classes)}
    try:
        y = np.array([index_of[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ShapeMismatch(f"label {exc.args[0]!r} not in class table") from None

    model = init_model(x.shape[1], classes, config)
    params = {"w1": model.w1, "b1": model.b1, "w2": model.w2, "b2": model.b2}
    moment1 = {k: np.zeros_like(v) for k, v in params.items()}
    moment2 = {k: np.zeros_like(v) for k, v in params.items()}
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((config.seed, 3))))

    n = x.shape[0]
    step = 0
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch + 1}")
            total += loss * idx.shape[0]
            step += 1
            bias1 = 1.0 - config.beta1**step
            bias2 = 1.0 - config.beta2**step
            for key, grad in grads.items():
                m = moment1[key]
                v = moment2[key]
                m *= config.beta1
                m += (1.0 - config.beta1) * grad
                v *= config.beta2
                v += (1.0 - config.beta2) * grad * grad
                params[key] -= config.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + config.eps)
        epoch_losses.append(total / n)
        logger.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, epoch_losses[-1])

    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteLoss(f"non-finite values in {name} after training")
    return model, epoch_losses
