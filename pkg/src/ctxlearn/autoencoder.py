"""Minimal feed-forward autoencoder trained by gradient descent on MSE.

One sigmoid bottleneck layer, identity output. Small enough that plain
numpy full-batch gradient descent converges in seconds on the stream sizes
this package targets; no momentum, no regularization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class TrainConfig:
    """Hyperparameters for one autoencoder update call."""

    learning_rate: float = 0.05
    epochs_per_update: int = 20
    batch_size: int | None = None  # None: the whole provided window per step
    init_scale: float = 0.3

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs_per_update < 1:
            raise ValueError("epochs_per_update must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 when set")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be > 0")


@dataclass
class Autoencoder:
    """Parameters of one reconstruction model plus a count of updates applied."""

    w1: np.ndarray  # (m, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, m)
    b2: np.ndarray  # (m,)
    train_step_count: int = 0

    @property
    def input_width(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[1]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_width, self.hidden_width, self.input_width]

    @property
    def is_trained(self) -> bool:
        return self.train_step_count > 0

    def copy(self) -> "Autoencoder":
        return Autoencoder(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.train_step_count
        )

    def to_json_dict(self) -> dict:
        """Flat snapshot with row-major parameter arrays; round-trips exactly."""
        return {
            "layer_sizes": self.layer_sizes,
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.ravel().tolist(),
            "b2": self.b2.tolist(),
            "train_step_count": self.train_step_count,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Autoencoder":
        m, h, m2 = d["layer_sizes"]
        if m != m2:
            raise ValueError("first and last layer sizes must match")
        return cls(
            w1=np.asarray(d["w1"], dtype=np.float64).reshape(m, h),
            b1=np.asarray(d["b1"], dtype=np.float64),
            w2=np.asarray(d["w2"], dtype=np.float64).reshape(h, m),
            b2=np.asarray(d["b2"], dtype=np.float64),
            train_step_count=int(d["train_step_count"]),
        )


def default_hidden_width(input_width: int) -> int:
    """Bottleneck width used when none is given: the smallest compressing layer."""
    return max(1, (input_width + 1) // 2)


def init_autoencoder(
    input_width: int,
    hidden_width: int,
    rng: np.random.Generator,
    init_scale: float = 0.3,
) -> Autoencoder:
    """Fresh model: weights uniform in [-init_scale, +init_scale], biases zero."""
    if input_width < 1 or hidden_width < 1:
        raise ValueError(f"layer widths must be positive, got m={input_width}, h={hidden_width}")
    if init_scale <= 0:
        raise ValueError("init_scale must be > 0")
    w1 = rng.uniform(-init_scale, init_scale, size=(input_width, hidden_width))
    w2 = rng.uniform(-init_scale, init_scale, size=(hidden_width, input_width))
    return Autoencoder(w1=w1, b1=np.zeros(hidden_width), w2=w2, b2=np.zeros(input_width))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # numerically stable for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(model: Autoencoder, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hidden = _sigmoid(batch @ model.w1 + model.b1)
    return hidden, hidden @ model.w2 + model.b2


def _as_batch(model: Autoencoder, z: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    batch = np.asarray(z, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != model.input_width:
        raise ValueError(
            f"input width mismatch: model expects {model.input_width}, got shape {batch.shape}"
        )
    return batch


def reconstruct(model: Autoencoder, z: np.ndarray) -> np.ndarray:
    """Forward pass for a single vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != model.input_width:
        raise ValueError(f"expected vector of length {model.input_width}, got shape {z.shape}")
    _, out = _forward(model, z[None, :])
    return out[0]


def reconstruction_error(model: Autoencoder, z: np.ndarray) -> float:
    """Mean squared reconstruction error of one vector (mean over dimensions)."""
    z = np.asarray(z, dtype=np.float64)
    zhat = reconstruct(model, z)
    return float(np.mean((z - zhat) ** 2))


def reconstruction_errors(model: Autoencoder, batch: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    """Per-row mean squared reconstruction errors for a batch."""
    batch = _as_batch(model, batch)
    _, out = _forward(model, batch)
    return np.mean((batch - out) ** 2, axis=1)


def loss_and_gradients(
    model: Autoencoder, batch: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Training loss and its gradient w.r.t. every parameter.

    The objective is the batch mean of per-sample squared reconstruction
    error summed over dimensions; summing (not averaging) over dimensions
    keeps gradient magnitudes independent of input width, so one default
    learning rate converges across all stream widths. This is the reported
    per-vector error times a constant, so every error comparison is
    unaffected. Exposed separately from train() so gradients can be checked
    against finite differences.
    """
    batch = _as_batch(model, batch)
    n, m = batch.shape
    hidden, out = _forward(model, batch)
    diff = out - batch
    loss = float(np.sum(diff**2) / n)
    d_out = (2.0 / n) * diff
    d_w2 = hidden.T @ d_out
    d_b2 = d_out.sum(axis=0)
    d_hidden = d_out @ model.w2.T
    d_pre = d_hidden * hidden * (1.0 - hidden)
    d_w1 = batch.T @ d_pre
    d_b1 = d_pre.sum(axis=0)
    return loss, {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}


def train(
    model: Autoencoder,
    batch: np.ndarray | Sequence[np.ndarray],
    cfg: TrainConfig | None = None,
) -> Autoencoder:
    """Run epochs_per_update passes of (mini-)batch gradient descent in place.

    With the default config each epoch is one full-batch step, which keeps
    training deterministic. Returns the same (mutated) model.
    """
    cfg = cfg or TrainConfig()
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.size == 0:
        raise ValueError("training batch must be non-empty")
    batch = _as_batch(model, batch)
    n = batch.shape[0]
    step = cfg.batch_size or n
    for _ in range(cfg.epochs_per_update):
        for start in range(0, n, step):
            part = batch[start : start + step]
            _, grads = loss_and_gradients(model, part)
            model.w1 -= cfg.learning_rate * grads["w1"]
            model.b1 -= cfg.learning_rate * grads["b1"]
            model.w2 -= cfg.learning_rate * grads["w2"]
            model.b2 -= cfg.learning_rate * grads["b2"]
            model.train_step_count += 1
    for arr in (model.w1, model.b1, model.w2, model.b2):
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                "autoencoder parameters diverged; lower the learning rate"
            )
    return model
