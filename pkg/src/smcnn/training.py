"""
Mini-batch training with Adam on the softmax cross-entropy, stratified
splitting and ring-aware augmentation of signal-matrix windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import nn
from .errors import DegenerateDataError, TrainingDivergedError
from .model import ArchDescriptor, backward, forward_logits


@dataclass(frozen=True)
class AugmentConfig:
    channel_roll_max: int = 15
    axial_shift_max: int = 50
    amplitude_scale_range: tuple[float, float] = (0.8, 1.2)
    apply_probability: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.channel_roll_max < 16:
            raise ValueError("channel_roll_max must be in [0, 16)")
        if self.axial_shift_max < 0:
            raise ValueError("axial_shift_max must be >= 0")
        lo, hi = self.amplitude_scale_range
        if not 0 < lo <= hi:
            raise ValueError("amplitude_scale_range must be positive with lo <= hi")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise ValueError("apply_probability must be in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    augmentation: Optional[AugmentConfig] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied in place.

    theta -= lr * m_hat / (sqrt(v_hat) + eps)
    """
    if grads.keys() != params.keys():
        raise ValueError("gradient keys do not match parameter keys")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.dtype, copy=False)
    return params, state


def split_dataset(labels, ratio: float = 0.7, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified seeded split; returns sorted (train_idx, test_idx).

    Each class contributes floor(ratio * n_class) samples to the train side.
    """
    labels = np.asarray(labels)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if len(idx) == 0:
            raise DegenerateDataError(f"class {cls} has no samples")
        idx = rng.permutation(idx)
        n_train = int(math.floor(ratio * len(idx) + 1e-9))
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def subsample(labels, fraction: float, seed: int = 0) -> np.ndarray:
    """Stratified subset of indices keeping ``fraction`` of each class (at least one)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    keep = []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        n = max(1, int(math.floor(fraction * len(idx) + 1e-9))) if len(idx) else 0
        keep.append(rng.permutation(idx)[:n])
    return np.sort(np.concatenate(keep))


def augment_window(values: np.ndarray, roll: int = 0, shift: int = 0,
                   scale: float = 1.0) -> np.ndarray:
    """Circular channel roll, circular axial shift, then amplitude scaling.

    Values pushed beyond [-1, 1] by the scaling are renormalized by max-abs.
    """
    out = np.roll(values, (shift, roll), axis=(0, 1))
    if scale != 1.0:
        out = out * np.float32(scale)
        peak = np.abs(out).max()
        if peak > 1.0:
            out = out / peak
        out = np.clip(out, -1.0, 1.0)
    return out.astype(values.dtype, copy=False)


def augment(sample, cfg: AugmentConfig, rng: np.random.Generator):
    """Random transform of a window (array or WindowSample); labels untouched."""
    values = getattr(sample, "values", sample)
    roll = int(rng.integers(-cfg.channel_roll_max, cfg.channel_roll_max + 1))
    shift = int(rng.integers(-cfg.axial_shift_max, cfg.axial_shift_max + 1))
    scale = float(rng.uniform(*cfg.amplitude_scale_range))
    if rng.random() >= cfg.apply_probability:
        roll, shift, scale = 0, 0, 1.0
    out = augment_window(np.asarray(values), roll, shift, scale)
    if hasattr(sample, "values"):
        return replace(sample, values=out)
    return out


def batch_gradient(arch: ArchDescriptor, params: dict[str, np.ndarray],
                   x: np.ndarray, y: np.ndarray):
    """Mean loss over the batch, its parameter gradients and the logits."""
    logits, cache = forward_logits(arch, params, x, keep_cache=True)
    loss, dlogits = nn.softmax_cross_entropy(logits, y)
    dlogits = (dlogits / len(y)).astype(logits.dtype, copy=False)
    grads, _ = backward(arch, params, cache, dlogits)
    return float(loss.mean()), grads, logits


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


def train(arch: ArchDescriptor, params: dict[str, np.ndarray], x: np.ndarray, y: np.ndarray,
          cfg: TrainConfig = TrainConfig(), state: AdamState | None = None,
          ) -> tuple[dict[str, np.ndarray], list[EpochRecord]]:
    """Train a copy of ``params`` on windows ``x`` (n, T, C) with labels ``y``.

    Each epoch reshuffles, optionally appends one augmented copy of every
    sample, and steps Adam once per batch (the last partial batch is kept).
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise DegenerateDataError("empty training set")
    if len(x) != len(y):
        raise ValueError("x and y lengths differ")
    params = {k: p.copy() for k, p in params.items()}
    state = state or AdamState.zeros_like(params)
    shuffle_rng = np.random.default_rng(cfg.shuffle_seed)
    aug = cfg.augmentation
    aug_rng = np.random.default_rng(aug.seed) if aug is not None else None
    history: list[EpochRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        ex, ey = x, y
        if aug is not None:
            copies = np.stack([augment(w, aug, aug_rng) for w in x])
            ex = np.concatenate([x, copies])
            ey = np.concatenate([y, y])
        order = shuffle_rng.permutation(len(ex))
        total_loss, correct = 0.0, 0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads, logits = batch_gradient(arch, params, ex[idx], ey[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {s // cfg.batch_size}")
            adam_step(params, grads, state, cfg)
            total_loss += loss * len(idx)
            correct += int((logits.argmax(axis=-1) == ey[idx]).sum())
        history.append(EpochRecord(epoch, total_loss / len(ex), correct / len(ex)))
    return params, history


def history_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,loss,accuracy"]
    lines += [f"{h.epoch},{h.loss!r},{h.accuracy!r}" for h in history]
    return "\n".join(lines) + "\n"
