"""Spatial covariance matrices: estimation, supervector packing, loaded inversion.

All SCM sets are stored as ``(K, M, M)`` complex arrays, one Hermitian
matrix per frequency bin.  Supervectors hold the upper triangle (diagonal
included, row-major) of every bin as interleaved real/imaginary float64
pairs, bins in ascending order, so their length is ``K * M * (M + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stft import Spectrogram

__all__ = [
    "Scm",
    "estimate",
    "flatten",
    "unflatten",
    "pack_upper",
    "unpack_upper",
    "invert_loaded",
    "loaded",
    "supervector_length",
]


@dataclass
class Scm:
    bins: np.ndarray
    frame_count: int = 0

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.complex128)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError(f"SCM bins must be (K, M, M), got {b.shape}")
        self.bins = b

    @property
    def channel_count(self) -> int:
        return self.bins.shape[1]

    @property
    def bin_count(self) -> int:
        return self.bins.shape[0]

    def trace(self) -> np.ndarray:
        return np.real(np.trace(self.bins, axis1=1, axis2=2))

    def diagonal(self) -> np.ndarray:
        """Real per-bin channel powers, shape ``(K, M)``."""
        return np.real(np.diagonal(self.bins, axis1=1, axis2=2)).copy()


def _hermitize(a: np.ndarray) -> np.ndarray:
    a = 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))
    idx = np.arange(a.shape[-1])
    a[..., idx, idx] = a[..., idx, idx].real
    return a


def estimate(spec: Spectrogram | np.ndarray, frame_range: tuple[int, int] | None = None) -> Scm:
    """Mean of ``X[k,l] X[k,l]^H`` over the frames in ``[l_start, l_end)``."""
    frames = spec.frames if isinstance(spec, Spectrogram) else np.asarray(spec)
    if frame_range is None:
        frame_range = (0, frames.shape[1])
    start, stop = frame_range
    if stop <= start:
        raise ValueError(f"empty frame range [{start}, {stop})")
    if start < 0 or stop > frames.shape[1]:
        raise IndexError(f"frame range [{start}, {stop}) outside 0..{frames.shape[1]}")
    x = np.transpose(frames[:, start:stop, :], (2, 0, 1))  # (K, M, L)
    phi = x @ np.conj(np.swapaxes(x, 1, 2)) / (stop - start)
    return Scm(_hermitize(phi), stop - start)


def supervector_length(channels: int, bins: int) -> int:
    return bins * channels * (channels + 1)


def pack_upper(mats: np.ndarray) -> np.ndarray:
    """``(..., M, M)`` -> ``(..., M(M+1)/2)`` complex, row-major upper triangle."""
    m = mats.shape[-1]
    iu = np.triu_indices(m)
    return np.ascontiguousarray(mats[..., iu[0], iu[1]])


def unpack_upper(tri: np.ndarray, channels: int) -> np.ndarray:
    """Inverse of :func:`pack_upper`; lower triangle filled by conjugation."""
    iu = np.triu_indices(channels)
    if tri.shape[-1] != len(iu[0]):
        raise ValueError(f"triangle length {tri.shape[-1]} does not fit {channels} channels")
    out = np.zeros(tri.shape[:-1] + (channels, channels), dtype=np.complex128)
    out[..., iu[1], iu[0]] = np.conj(tri)
    out[..., iu[0], iu[1]] = tri
    d = np.arange(channels)
    out[..., d, d] = out[..., d, d].real
    return out


def flatten(scm: Scm) -> np.ndarray:
    tri = pack_upper(scm.bins)
    return tri.view(np.float64).reshape(-1).copy()


def unflatten(v: np.ndarray, channels: int, bins: int) -> Scm:
    v = np.ascontiguousarray(v, dtype=np.float64)
    expected = supervector_length(channels, bins)
    if v.ndim != 1 or v.size != expected:
        raise ValueError(
            f"supervector length {v.size} != K*M*(M+1) = {expected} "
            f"(K={bins}, M={channels})")
    tri = v.view(np.complex128).reshape(bins, channels * (channels + 1) // 2)
    return Scm(unpack_upper(tri, channels))


def loaded(scm: Scm, loading: float = 1e-3, floor: float | None = None) -> Scm:
    """Diagonally loaded copy: ``phi + loading * tr(phi)/M * I`` per bin.

    Bins with zero trace get ``floor * I`` instead; ``floor`` defaults to
    ``1e-12 * max_k tr(phi[k]) / M`` (1.0 when the whole set is zero).
    """
    if loading < 0:
        raise ValueError(f"loading must be non-negative, got {loading}")
    m = scm.channel_count
    tr = scm.trace()
    if floor is None:
        floor = default_floor(tr.max(initial=0.0), m)
    amount = np.where(tr > 0, loading * tr / m, floor)
    out = scm.bins.copy()
    d = np.arange(m)
    out[:, d, d] += amount[:, None]
    return Scm(out, scm.frame_count)


def default_floor(max_trace: float, channels: int) -> float:
    f = 1e-12 * max_trace / channels
    return f if f > 0 else 1.0


def invert_loaded(scm: Scm, loading: float = 1e-3, floor: float | None = None) -> Scm:
    """Per-bin inverse of the diagonally loaded SCM (see :func:`loaded`).

    With ``loading=0`` a singular nonzero bin raises ``LinAlgError``.
    """
    inv = np.linalg.inv(loaded(scm, loading, floor).bins)
    return Scm(_hermitize(inv), scm.frame_count)
