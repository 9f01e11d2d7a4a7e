"""
Seeded synthetic multi-channel MFL records.

A record is the additive superposition of
  * per-channel sinusoidal strand noise sharing one lay period,
  * a per-channel quadratic baseline drift,
  * white sensor noise,
  * zero or more local-flaw pulses. Each pulse has a negated-Ricker axial
    profile (two peaks around one valley) and a Gaussian fall-off in circular
    channel distance from the flaw.

Noise is drawn from the record seed alone, so the flaw contributions can be
added to or removed from a fixed noise realization.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

Range = tuple[float, float]


@dataclass(frozen=True)
class GeneratorConfig:
    channel_count: int = 16
    record_length: int = 300
    strand_period: float = 60.0
    strand_amplitude: Range = (0.2, 0.4)
    strand_phase_jitter: float = 0.3
    drift_coeffs_range: Range = (-2.0, 2.0)
    white_noise_std: float = 0.05
    defect_amplitude_range: Range = (2.0, 4.0)
    defect_axial_width_range: Range = (4.0, 10.0)
    defect_circ_spread_range: Range = (0.5, 1.2)
    max_defects_per_record: int = 1
    seed: int = 7

    def __post_init__(self):
        if self.channel_count < 2:
            raise ValueError("channel_count must be >= 2")
        if self.record_length < 1:
            raise ValueError("record_length must be >= 1")
        if self.strand_period <= 0:
            raise ValueError("strand_period must be > 0")
        if self.max_defects_per_record < 1:
            raise ValueError("max_defects_per_record must be >= 1")
        for name in ("strand_amplitude", "drift_coeffs_range", "defect_amplitude_range",
                     "defect_axial_width_range", "defect_circ_spread_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lo > hi ({lo}, {hi})")
        if min(self.strand_amplitude) < 0 or min(self.defect_amplitude_range) < 0:
            raise ValueError("amplitudes must be >= 0")
        if self.white_noise_std < 0 or self.strand_phase_jitter < 0:
            raise ValueError("noise parameters must be >= 0")
        if min(self.defect_axial_width_range) <= 0 or min(self.defect_circ_spread_range) <= 0:
            raise ValueError("defect widths and spreads must be > 0")

    def noise_free(self) -> "GeneratorConfig":
        return replace(self, strand_amplitude=(0.0, 0.0), drift_coeffs_range=(0.0, 0.0),
                       white_noise_std=0.0)

    @property
    def nominal_snr(self) -> float:
        """Mid defect amplitude over mid strand amplitude."""
        strand = float(np.mean(self.strand_amplitude))
        defect = float(np.mean(self.defect_amplitude_range))
        return defect / strand if strand > 0 else float("inf")


@dataclass(frozen=True)
class DefectSpec:
    axial_center: float
    channel_center: float
    amplitude: float
    axial_width: float
    circ_spread: float

    def __post_init__(self):
        if self.amplitude <= 0 or self.axial_width <= 0 or self.circ_spread <= 0:
            raise ValueError(f"defect amplitude, width and spread must be > 0: {self}")


@dataclass
class SignalMatrix:
    values: np.ndarray  # (M, N) float64
    seed: int
    defects: list[DefectSpec] = field(default_factory=list)

    @property
    def label(self) -> int:
        return int(bool(self.defects))


def defect_profile(t, axial_width: float):
    """Negated Ricker wavelet: -1 at t=0, peaks of 2*exp(-1.5) at t = +-width*sqrt(3)."""
    if axial_width <= 0:
        raise ValueError("axial_width must be > 0")
    u = np.asarray(t, dtype=np.float64) / axial_width
    return -(1.0 - u * u) * np.exp(-0.5 * u * u)


def circular_distance(n, c0: float, N: int):
    d = np.abs(np.asarray(n, dtype=np.float64) - c0) % N
    return np.minimum(d, N - d)


def defect_contribution(defect: DefectSpec, M: int, N: int) -> np.ndarray:
    m = np.arange(M, dtype=np.float64)
    axial = defect.amplitude * defect_profile(m - defect.axial_center, defect.axial_width)
    d = circular_distance(np.arange(N), defect.channel_center, N)
    circ = np.exp(-d * d / (2.0 * defect.circ_spread**2))
    return np.outer(axial, circ)


def _noise(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    M, N = cfg.record_length, cfg.channel_count
    m = np.arange(M, dtype=np.float64)
    # fixed draw order keeps records reproducible across config tweaks of one term
    amp = rng.uniform(*cfg.strand_amplitude, size=N)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    jitter = rng.uniform(-cfg.strand_phase_jitter, cfg.strand_phase_jitter, size=N)
    drift = rng.uniform(*cfg.drift_coeffs_range, size=(3, N))
    white = rng.standard_normal((M, N))

    strand = amp * np.sin(2.0 * np.pi * m[:, None] / cfg.strand_period + phase0 + jitter)
    s = (m / M)[:, None]
    baseline = drift[0] + drift[1] * s + drift[2] * s * s
    return strand + baseline + cfg.white_noise_std * white


def generate_record(cfg: GeneratorConfig, defects: Sequence[DefectSpec], rng_seed) -> SignalMatrix:
    M, N = cfg.record_length, cfg.channel_count
    for d in defects:
        if not 0 <= d.axial_center < M:
            raise ValueError(f"defect axial center {d.axial_center} outside record [0, {M})")
        if not 0 <= d.channel_center < N:
            raise ValueError(f"defect channel center {d.channel_center} outside [0, {N})")
    values = _noise(cfg, np.random.default_rng(rng_seed))
    for d in defects:
        values += defect_contribution(d, M, N)
    seed = int(rng_seed) if np.isscalar(rng_seed) else -1
    return SignalMatrix(values, seed, list(defects))


def random_defect(cfg: GeneratorConfig, rng: np.random.Generator) -> DefectSpec:
    width = rng.uniform(*cfg.defect_axial_width_range)
    # keep the full pulse (about +-3 widths) inside the record when possible
    margin = min(3.0 * width, cfg.record_length / 2.0 - 1.0)
    margin = max(margin, 0.0)
    m0 = rng.uniform(margin, cfg.record_length - margin)
    m0 = min(m0, np.nextafter(cfg.record_length, 0))
    return DefectSpec(
        axial_center=float(m0),
        channel_center=float(rng.uniform(0.0, cfg.channel_count)) % cfg.channel_count,
        amplitude=float(max(rng.uniform(*cfg.defect_amplitude_range), 1e-12)),
        axial_width=float(width),
        circ_spread=float(rng.uniform(*cfg.defect_circ_spread_range)),
    )


@dataclass
class SyntheticDataset:
    records: list[SignalMatrix]
    metadata: dict

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.uint8)


def generate_dataset(cfg: GeneratorConfig, n_defect: int, n_normal: int,
                     seed: int | None = None) -> SyntheticDataset:
    """``n_defect`` flawed records followed by ``n_normal`` clean ones."""
    if n_defect < 0 or n_normal < 0:
        raise ValueError("record counts must be >= 0")
    seed = cfg.seed if seed is None else seed
    children = np.random.SeedSequence(seed).spawn(n_defect + n_normal)
    records = []
    for k, child in enumerate(children):
        noise_seed, defect_seed = (int(s) for s in child.generate_state(2))
        defects: list[DefectSpec] = []
        if k < n_defect:
            drng = np.random.default_rng(defect_seed)
            n = int(drng.integers(1, cfg.max_defects_per_record + 1))
            defects = [random_defect(cfg, drng) for _ in range(n)]
        records.append(generate_record(cfg, defects, noise_seed))
    meta = {
        "seed": int(seed),
        "n_defect": n_defect,
        "n_normal": n_normal,
        "snr_nominal": cfg.nominal_snr,
        "snr_convention": "defect amplitude / strand amplitude",
    }
    return SyntheticDataset(records, meta)
