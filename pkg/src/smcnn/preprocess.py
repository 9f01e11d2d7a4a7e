"""
Record-to-window preprocessing: smoothing, detrending, residual sliding-mean
removal, fixed-length windowing and max-abs normalization.

Records are (M, N) arrays indexed [axial sample, channel]; every operation
works channel by channel along axis 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFECT_LABEL, NORMAL_LABEL = 1, 0


@dataclass(frozen=True)
class SmoothingKernel:
    """Symmetric FIR weights w[k], k = -K..K, summing to one."""
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or len(w) % 2 != 1:
            raise ValueError("kernel needs an odd number of taps")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"kernel weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return len(self.weights) // 2

    @classmethod
    def uniform(cls, K: int = 5) -> "SmoothingKernel":
        if K < 0:
            raise ValueError("K must be >= 0")
        return cls(np.full(2 * K + 1, 1.0 / (2 * K + 1)))

    @classmethod
    def gaussian(cls, K: int = 5, sigma: float | None = None) -> "SmoothingKernel":
        if K < 0:
            raise ValueError("K must be >= 0")
        sigma = K / 2.0 if sigma is None else sigma
        if K == 0 or sigma <= 0:
            return cls(np.ones(1))
        k = np.arange(-K, K + 1)
        w = np.exp(-k**2 / (2.0 * sigma**2))
        return cls(w / w.sum())


@dataclass(frozen=True)
class TrendModel:
    """Per-channel polynomial coefficients, row d = coefficient of m**d.

    For the default linear fit row 0 is the intercept and row 1 the slope.
    """
    coefficients: np.ndarray

    def evaluate(self, length: int) -> np.ndarray:
        m = np.arange(length, dtype=np.float64)
        return np.polynomial.polynomial.polyval(m, self.coefficients).T


@dataclass(frozen=True)
class PreprocessConfig:
    K: int = 5
    kernel: str = "uniform"
    trend_degree: int = 1
    residual_mean_window: int = 300
    window_length: int = 300
    stride: int = 300
    normalization: str = "max_abs"

    def __post_init__(self):
        if self.window_length <= 0 or self.stride <= 0:
            raise ValueError("window_length and stride must be positive")
        if self.residual_mean_window < 1:
            raise ValueError("residual_mean_window must be >= 1")
        if self.K < 0 or self.trend_degree < 0:
            raise ValueError("K and trend_degree must be >= 0")
        if self.kernel not in ("uniform", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.normalization != "max_abs":
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def smoothing_kernel(self) -> SmoothingKernel:
        if self.kernel == "gaussian":
            return SmoothingKernel.gaussian(self.K)
        return SmoothingKernel.uniform(self.K)


@dataclass
class WindowSample:
    values: np.ndarray  # (W, N) float32 in [-1, 1]
    label: int
    source_offset: int
    source_record: int = -1
    scale: float = 1.0  # max-abs divided out by normalize(); values * scale restores units


def _as_record(x) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected an (M, N) record, got shape {x.shape}")
    return x


def smooth(x, kernel: SmoothingKernel) -> np.ndarray:
    """x_hat[m] = sum_k w[k] x[m+k], taps falling outside the record are
    dropped and the remaining weights renormalized."""
    x = _as_record(x)
    M = x.shape[0]
    K = kernel.K
    num = np.zeros_like(x)
    den = np.zeros(M)
    for k, wk in zip(range(-K, K + 1), kernel.weights):
        lo, hi = max(0, -k), min(M, M - k)
        if lo >= hi:
            continue
        num[lo:hi] += wk * x[lo + k:hi + k]
        den[lo:hi] += wk
    return num / den[:, None]


def detrend(x, degree: int = 1) -> tuple[np.ndarray, TrendModel]:
    """Subtract a least-squares polynomial in the sample index from every channel."""
    x = _as_record(x)
    M = x.shape[0]
    if M < 2:
        raise ValueError(f"detrending needs at least 2 samples, got {M}")
    degree = min(degree, M - 1)
    m = np.arange(M, dtype=np.float64)
    coef = np.polynomial.polynomial.polyfit(m, x, degree)
    model = TrendModel(coef)
    return x - model.evaluate(M), model


def remove_residual_mean(x, R: int) -> np.ndarray:
    """Subtract a centered moving mean of width R, windows truncated at the ends.

    Window for sample m spans [m - R//2, m - R//2 + R).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    x = _as_record(x)
    M = x.shape[0]
    # shifting by the first sample keeps constant channels exactly zero
    xs = x - x[:1]
    c = np.zeros((M + 1, x.shape[1]))
    np.cumsum(xs, axis=0, out=c[1:])
    start = np.arange(M) - R // 2
    lo = np.clip(start, 0, M)
    hi = np.clip(start + R, 0, M)
    mean = (c[hi] - c[lo]) / (hi - lo)[:, None]
    return xs - mean


def window(x, W: int, stride: int) -> list[tuple[int, np.ndarray]]:
    """Cut (offset, x[offset:offset+W]) windows; a trailing partial window is dropped."""
    x = _as_record(x)
    M = x.shape[0]
    if W <= 0 or stride <= 0:
        raise ValueError("W and stride must be positive")
    if M < W:
        raise ValueError(f"record of length {M} is shorter than the window ({W})")
    return [(off, x[off:off + W]) for off in range(0, M - W + 1, stride)]


def window_label(offset: int, W: int, defect_centers: Iterable[float]) -> int:
    """Defect iff some defect center m0 satisfies offset <= m0 < offset + W."""
    return int(any(offset <= m0 < offset + W for m0 in defect_centers))


def normalize_with_scale(w, axis=None) -> tuple[np.ndarray, np.ndarray | float]:
    """Max-abs scaling; returns the scaled array and the divisor(s).

    ``axis=None`` scales the whole window by one peak, ``axis=0`` scales each
    channel by its own peak. All-zero inputs stay zero with divisor 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("window contains non-finite values")
    if w.size == 0:
        return w.astype(np.float32), 0.0
    peak = np.abs(w).max(axis=axis, keepdims=axis is not None)
    safe = np.where(peak > 0, peak, 1.0)
    out = np.where(peak > 0, w / safe, 0.0).astype(np.float32)
    return out, (float(peak) if axis is None else np.squeeze(peak, axis=axis))


def normalize(w) -> np.ndarray:
    """Scale by the largest absolute value; an all-zero window stays zero."""
    return normalize_with_scale(w)[0]


def clean_record(x, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Smoothing, detrending and residual-mean removal for a whole record."""
    xs = smooth(x, cfg.smoothing_kernel())
    xd, _ = detrend(xs, cfg.trend_degree)
    return remove_residual_mean(xd, cfg.residual_mean_window)


def record_windows(x, cfg: PreprocessConfig = PreprocessConfig(),
                   defect_centers: Sequence[float] | None = None,
                   record_label: int | None = None,
                   record_index: int = -1) -> list[WindowSample]:
    """Full chain for one record.

    Window labels come from ``defect_centers`` when given, else every window
    inherits ``record_label``.
    """
    if defect_centers is None and record_label is None:
        defect_centers = [m.axial_center for m in getattr(x, "defects", [])]
    clean = clean_record(x, cfg)
    W = cfg.window_length
    out = []
    for off, raw in window(clean, W, cfg.stride):
        if defect_centers is not None:
            label = window_label(off, W, defect_centers)
        else:
            label = int(record_label)
        values, peak = normalize_with_scale(raw)
        out.append(WindowSample(values, label, off, record_index, peak))
    return out


def preprocess_window(raw, cfg: PreprocessConfig = PreprocessConfig()) -> np.ndarray:
    """Raw W-sample segment straight to a normalized network input."""
    return normalize(clean_record(raw, cfg))
