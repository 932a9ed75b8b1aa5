from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .stft import _check_grid

__all__ = ["EnhancerConfig", "Fingerprint", "FingerprintError"]


class FingerprintError(ValueError):
    """Dictionary was built for a different array or STFT setup."""


@dataclass(frozen=True)
class EnhancerConfig:
    """Tunable parameters shared by calibration and enhancement.

    ``reference_policy`` is ``"auto"`` (per-segment SNR-based selection) or a
    fixed channel index.  ``store`` picks what the dictionary file holds per
    entry: precomputed inverses, or forward SCMs inverted after loading.
    """

    sample_rate: int = 32000
    frame_size: int = 2048
    hop: int = 256
    segment_length: float = 0.5
    pca_dims: int = 32
    loading: float = 1e-3
    reference_policy: Union[str, int] = "auto"
    store: str = "inverse"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        _check_grid(self.frame_size, self.hop)
        if self.segment_samples < self.frame_size:
            raise ValueError(
                f"segment of {self.segment_samples} samples is shorter than one frame "
                f"({self.frame_size})")
        if self.loading < 0:
            raise ValueError(f"loading must be non-negative, got {self.loading}")
        if self.pca_dims < 1:
            raise ValueError(f"pca_dims must be positive, got {self.pca_dims}")
        if self.reference_policy != "auto" and not (
                isinstance(self.reference_policy, int) and self.reference_policy >= 0):
            raise ValueError(
                f"reference_policy must be 'auto' or a channel index, got {self.reference_policy!r}")
        if self.store not in ("inverse", "forward"):
            raise ValueError(f"store must be 'inverse' or 'forward', got {self.store!r}")

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_length * self.sample_rate))

    @property
    def bin_count(self) -> int:
        return self.frame_size // 2 + 1

    def fingerprint(self, channels: int) -> "Fingerprint":
        return Fingerprint(channels, self.bin_count, self.frame_size, self.hop,
                           self.sample_rate, self.segment_samples, float(self.loading),
                           self.pca_dims)


@dataclass(frozen=True)
class Fingerprint:
    channels: int
    bins: int
    frame_size: int
    hop: int
    sample_rate: int
    segment_samples: int
    loading: float
    pca_dims: int

    def __str__(self):
        return (f"M={self.channels} K={self.bins} N={self.frame_size} hop={self.hop} "
                f"rate={self.sample_rate} segment={self.segment_samples} "
                f"loading={self.loading:g} I={self.pca_dims}")

    def to_config(self, **overrides) -> EnhancerConfig:
        kw = dict(sample_rate=self.sample_rate, frame_size=self.frame_size, hop=self.hop,
                  segment_length=self.segment_samples / self.sample_rate,
                  pca_dims=self.pca_dims, loading=self.loading)
        kw.update(overrides)
        return EnhancerConfig(**kw)
