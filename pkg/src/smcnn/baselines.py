"""
Reference detectors for comparison with SM-CNN.

pca-threshold
    Each time sample of a window is a 16-vector observation. Windows are
    projected onto the first principal direction of the training
    observations and flagged when the peak |projection| reaches a constant
    threshold chosen by a train-set F1 sweep. A constant threshold only
    means something in physical units, so callers pass cleaned windows
    before max-abs normalization (``WindowSample.values * scale``).
cnn1d
    The SM-CNN time axis applied to one channel at a time. Training treats
    every channel of a window as an independent sample carrying the window's
    label; at test time the 16 per-channel defect probabilities are averaged.
    Each channel is max-abs normalized on its own: a window-wide peak would
    leak the other channels' content into every single-channel input.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError
from .model import ArchDescriptor, Conv2D, Dense, Flatten, MaxPool, ReLU, Softmax, predict_proba
from .nn import DEFECT
from .preprocess import normalize_with_scale


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # (C,)
    components: np.ndarray    # (k, C), orthonormal rows
    eigenvalues: np.ndarray   # (k,), non-increasing

    @property
    def n_components(self) -> int:
        return len(self.components)


def pca_fit(observations, n_components: int = 1) -> PcaModel:
    """Eigendecomposition of the sample covariance of the rows of ``observations``.

    Windows (n, T, C) are accepted and flattened to (n*T, C) observations.
    """
    X = np.asarray(observations, dtype=np.float64)
    X = X.reshape(-1, X.shape[-1])
    if X.shape[0] < 2:
        raise DegenerateDataError("PCA needs at least 2 observations")
    if not 1 <= n_components <= X.shape[1]:
        raise ValueError(f"n_components must be in [1, {X.shape[1]}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (X.shape[0] - 1)
    if np.trace(cov) <= 0:
        raise DegenerateDataError("observations have zero variance")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    # sign convention: largest-magnitude entry positive
    flip = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    comps = comps * flip[:, None]
    return PcaModel(mean, comps, evals)


def pca_project(window, model: PcaModel, component: int = 0) -> np.ndarray:
    w = np.asarray(window, dtype=np.float64)
    if w.shape[-1] != len(model.mean):
        raise ValueError(f"window has {w.shape[-1]} channels, model expects {len(model.mean)}")
    return (w - model.mean) @ model.components[component]


def peak_statistic(window, model: PcaModel) -> float:
    return float(np.abs(pca_project(window, model)).max())


@dataclass(frozen=True)
class ThresholdDetector:
    threshold: float
    train_f1: float = float("nan")

    def predict(self, statistics) -> np.ndarray:
        return (np.asarray(statistics) >= self.threshold).astype(np.uint8)


def _f1(pred: np.ndarray, labels: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def threshold_candidates(statistics) -> np.ndarray:
    """Lowest unique statistic followed by every midpoint between neighbours."""
    u = np.unique(np.asarray(statistics, dtype=np.float64))
    return np.concatenate([u[:1], (u[:-1] + u[1:]) / 2.0])


def threshold_calibrate(statistics, labels) -> ThresholdDetector:
    """Pick the candidate threshold maximizing train F1 (rule: stat >= tau),
    smallest threshold on ties."""
    s = np.asarray(statistics, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if len(s) != len(y):
        raise ValueError("statistics and labels differ in length")
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("threshold calibration needs both classes")
    cands = threshold_candidates(s)
    if len(cands) == 1:
        warnings.warn("all statistics identical; threshold placed at the shared value",
                      RuntimeWarning, stacklevel=2)
    best_tau, best_f1 = cands[0], -1.0
    for tau in cands:
        f1 = _f1((s >= tau).astype(np.int64), y)
        if f1 > best_f1:
            best_tau, best_f1 = tau, f1
    return ThresholdDetector(float(best_tau), best_f1)


@dataclass(frozen=True)
class PcaThreshold:
    pca: PcaModel
    detector: ThresholdDetector

    def statistics(self, windows) -> np.ndarray:
        return np.array([peak_statistic(w, self.pca) for w in windows])

    def predict(self, windows) -> np.ndarray:
        return self.detector.predict(self.statistics(windows))


def fit_pca_threshold(windows, labels) -> PcaThreshold:
    pca = pca_fit(windows, 1)
    stats = np.array([peak_statistic(w, pca) for w in windows])
    return PcaThreshold(pca, threshold_calibrate(stats, labels))


# --------------------------------------------------------------------------
# single-channel 1D-CNN
# --------------------------------------------------------------------------

def build_1d_cnn(length: int = 300) -> ArchDescriptor:
    """Five conv(2)+ReLU+pool(2) stages along time, filters 16..256, dense 128, softmax 2.

    Input is (length, 1, 1); kernels are 2x1 so only the time axis is convolved.
    """
    layers: list = []
    c_in = 1
    for c_out in (16, 32, 64, 128, 256):
        layers += [Conv2D(2, 1, c_in, c_out), ReLU(), MaxPool(2, 1)]
        c_in = c_out
    arch = ArchDescriptor((length, 1, 1), tuple(layers), "cnn1d")
    flat = int(np.prod(arch.shapes()[-1]))
    layers += [Flatten(), Dense(flat, 128), ReLU(), Dense(128, 2), Softmax()]
    return ArchDescriptor((length, 1, 1), tuple(layers), "cnn1d")


def channels_as_samples(windows, labels=None):
    """(n, T, C) windows -> (n*C, T, 1) per-channel normalized samples, labels repeated."""
    w = np.asarray(windows)
    n, T, C = w.shape
    x = np.ascontiguousarray(np.moveaxis(w, 2, 1)).reshape(n * C, T)
    x = normalize_with_scale(x.T, axis=0)[0].T[..., None]
    if labels is None:
        return x
    return x, np.repeat(np.asarray(labels), C)


def channel_probabilities(window, arch: ArchDescriptor, params) -> np.ndarray:
    """Defect probability of every channel of one (T, C) window."""
    x = channels_as_samples(np.asarray(window)[None])
    return predict_proba(arch, params, x)[:, DEFECT]


def mean_defect_probability(windows, arch: ArchDescriptor, params) -> np.ndarray:
    w = np.asarray(windows)
    n, _, C = w.shape
    p = predict_proba(arch, params, channels_as_samples(w), batch_size=256)[:, DEFECT]
    return np.array([math.fsum(row) / C for row in p.reshape(n, C).astype(np.float64)])


def decide_from_channels(channel_probs) -> int:
    # boundary inclusive: a mean of exactly 0.5 counts as defect
    p = np.asarray(channel_probs, dtype=np.float64).ravel()
    return int(math.fsum(p) / len(p) >= 0.5)


def classify_1d_window(window, arch: ArchDescriptor, params) -> int:
    """Defect when the channel-averaged defect probability is >= 0.5."""
    return decide_from_channels(channel_probabilities(window, arch, params))
