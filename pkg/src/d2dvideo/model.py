"""Domain types shared by the placement solver, the scenario generator and
the streaming simulator.

Quality levels and file indices are 0-based everywhere inside the package;
CSV/JSON writers convert to 1-based labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "Catalog",
    "QualityProfile",
    "RadioParams",
    "ControlParams",
    "zipf_popularity",
    "snr_db_to_noise_var",
    "DEFAULT_NOMA_RATIOS",
]


class ConfigError(ValueError):
    """Raised when a parameter set violates a documented invariant."""


def zipf_popularity(file_count: int, exponent: float) -> np.ndarray:
    """Zipf request probabilities ``f_i = i**-exponent / sum_j j**-exponent``."""
    if int(file_count) != file_count or file_count < 1:
        raise ConfigError(f"file_count must be a positive integer, got {file_count!r}")
    if exponent < 0:
        raise ConfigError(f"Zipf exponent must be nonnegative, got {exponent!r}")
    ranks = np.arange(1, int(file_count) + 1, dtype=float)
    weights = ranks ** (-float(exponent))
    return weights / weights.sum()


def snr_db_to_noise_var(snr_db: float) -> float:
    # unit transmit power, so the noise variance is the inverse linear SNR
    return 10.0 ** (-float(snr_db) / 10.0)


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"{name} must be a non-empty 1-D sequence")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Catalog:
    file_count: int
    zipf_exponent: float = 1.0
    popularity: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pop = zipf_popularity(self.file_count, self.zipf_exponent)
        pop.setflags(write=False)
        object.__setattr__(self, "popularity", pop)


@dataclass(frozen=True)
class QualityProfile:
    """Per-quality-level video parameters.

    ``measure_db`` is the quality measure (PSNR in dB), ``chunk_bits`` the
    size of one chunk in bits and ``storage_size`` the normalized footprint
    of a whole file in device storage. All three must increase strictly with
    the quality level.
    """

    measure_db: Sequence[float]
    chunk_bits: Sequence[float]
    storage_size: Sequence[float]

    def __post_init__(self):
        arrays = {}
        for name in ("measure_db", "chunk_bits", "storage_size"):
            arrays[name] = _frozen_array(getattr(self, name), name)
            object.__setattr__(self, name, arrays[name])
        sizes = {a.size for a in arrays.values()}
        if len(sizes) != 1:
            raise ConfigError("quality profile sequences must have equal length")
        for name, arr in arrays.items():
            if np.any(np.diff(arr) <= 0):
                raise ConfigError(f"{name} must be strictly increasing in quality level")
        if np.any(self.chunk_bits <= 0) or np.any(self.storage_size <= 0):
            raise ConfigError("chunk sizes and storage sizes must be positive")

    @property
    def level_count(self) -> int:
        return int(self.measure_db.size)

    @property
    def measure_linear(self) -> np.ndarray:
        return 10.0 ** (self.measure_db / 10.0)


@dataclass(frozen=True)
class RadioParams:
    """Link-level constants.

    ``rate_threshold`` of ``None`` means "equal to the bandwidth", i.e. a
    spectral efficiency threshold of 1 bit/s/Hz. A scalar or an ``F x Q``
    table is also accepted.
    """

    bandwidth: float
    noise_var: float
    device_intensity: float
    coverage_radius: float
    coherence_time: float
    chunks_per_slot: int = 1
    rate_threshold: float | np.ndarray | None = None

    def __post_init__(self):
        for name in ("bandwidth", "noise_var", "coverage_radius", "coherence_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.device_intensity < 0:
            raise ConfigError("device_intensity must be nonnegative")
        if int(self.chunks_per_slot) != self.chunks_per_slot or self.chunks_per_slot < 1:
            raise ConfigError("chunks_per_slot must be an integer >= 1")
        if self.rate_threshold is not None:
            rho = np.asarray(self.rate_threshold, dtype=float)
            if np.any(rho <= 0):
                raise ConfigError("rate_threshold must be strictly positive")

    def threshold_table(self, file_count: int, level_count: int) -> np.ndarray:
        if self.rate_threshold is None:
            return np.full((file_count, level_count), float(self.bandwidth))
        rho = np.asarray(self.rate_threshold, dtype=float)
        return np.broadcast_to(rho, (file_count, level_count)).astype(float)


# strongest channel first; the weakest user gets the largest share
DEFAULT_NOMA_RATIOS: Mapping[int, tuple[float, ...]] = {
    2: (0.2, 0.8),
    3: (1 / 13, 3 / 13, 9 / 13),
}


@dataclass(frozen=True)
class ControlParams:
    quality_weight: float = 0.01
    queue_target: float = 100.0
    noma_power_ratios: Mapping[int, tuple[float, ...]] = field(
        default_factory=lambda: dict(DEFAULT_NOMA_RATIOS)
    )

    def __post_init__(self):
        if self.quality_weight < 0:
            raise ConfigError("quality_weight (V) must be nonnegative")
        if not self.queue_target > 0:
            raise ConfigError("queue_target must be positive")
        ratios = {}
        for size, betas in self.noma_power_ratios.items():
            betas = tuple(float(b) for b in betas)
            if len(betas) != int(size):
                raise ConfigError(f"NOMA group of {size} needs {size} power ratios")
            if abs(sum(betas) - 1.0) > 1e-12:
                raise ConfigError(f"NOMA power ratios for {size} users must sum to 1")
            if any(b <= 0 for b in betas) or any(np.diff(betas) <= 0):
                raise ConfigError("NOMA power ratios must be positive and strictly increasing")
            ratios[int(size)] = betas
        object.__setattr__(self, "noma_power_ratios", ratios)
