"""Segment-wise MVDR enhancement driven by dictionary lookup.

For each segment: estimate the mixture SCM over the segment's frames, project
its supervector with the dictionary PCA, pick the nearest noise entry, form

    w[k] = (inv_B[k] @ phi_X[k]) u / tr(inv_B[k] @ phi_X[k])

and apply ``Y = w^H X`` to every frame of the segment.  The frame grid runs
continuously across segments, so weight changes are cross-faded by the
overlap-add rather than switched abruptly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as _dict
from . import pca as _pca
from . import scm as _scm
from .config import EnhancerConfig, FingerprintError
from .stft import MultichannelAudio, StreamState, TooShortError, stream_flush, \
    stream_overlap_add, stream_push

__all__ = [
    "EnhancerConfig",
    "FingerprintError",
    "MvdrWeights",
    "SegmentReport",
    "EnhancerState",
    "compute_weights",
    "select_reference",
    "beamform",
    "enhance_segment",
    "enhance_stream",
    "apply_weights_stream",
    "TRACE_FLOOR",
]

# bins whose |tr(inv_B phi_X)| falls below TRACE_FLOOR * M pass the reference through
TRACE_FLOOR = 1e-12


@dataclass
class MvdrWeights:
    weights: np.ndarray  # (K, M) complex
    reference: int
    floored_bins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass
class SegmentReport:
    segment: int
    selected: int
    reference: int
    distance: float
    wall_time: float
    frames: int = 0
    samples_out: int = 0
    partial: bool = False
    floored_bins: int = 0
    weights: np.ndarray | None = field(default=None, repr=False)


def compute_weights(phi_xx: _scm.Scm, inv_phi_bb: _scm.Scm, reference: int) -> MvdrWeights:
    """MVDR weights with trace normalization and a one-hot reference vector."""
    a, b = phi_xx.bins, inv_phi_bb.bins
    if a.shape != b.shape:
        raise ValueError(f"SCM shapes differ: {a.shape} vs {b.shape}")
    m = a.shape[1]
    if not 0 <= reference < m:
        raise ValueError(f"reference channel {reference} out of range for {m} channels")
    column = np.einsum("kij,kj->ki", b, a[:, :, reference])  # (inv_B phi_X) u
    trace = np.einsum("kij,kji->k", b, a)      # tr(inv_B phi_X)
    floored = np.abs(trace) < TRACE_FLOOR * m
    w = np.zeros_like(column)
    ok = ~floored
    w[ok] = column[ok] / trace[ok, None]
    w[floored, reference] = 1.0
    return MvdrWeights(w, reference, np.flatnonzero(floored))


def select_reference(phi_xx: _scm.Scm, noise_diag: np.ndarray,
                     policy: str | int = "auto") -> int:
    """Channel with the largest summed per-bin SNR estimate.

    SNR per bin and channel is ``max(P_x - P_b, 0) / P_b`` with ``P_x`` the
    mixture power and ``P_b`` the dictionary noise power.  Ties pick the
    lowest index.  An integer ``policy`` short-circuits to that channel.
    """
    if policy != "auto":
        return int(policy)
    px = phi_xx.diagonal()
    nd = np.asarray(noise_diag, dtype=np.float64)
    if px.shape != nd.shape:
        raise ValueError(f"noise_diag shape {nd.shape} != SCM diagonal shape {px.shape}")
    score = (np.maximum(px - nd, 0.0) / nd).sum(axis=0)
    return int(np.argmax(score))


def beamform(frames: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``Y[l, k] = w[k]^H X[:, l, k]`` for ``(M, L, K)`` frames; returns ``(1, L, K)``."""
    return np.einsum("km,mlk->lk", np.conj(weights), frames)[None]


@dataclass
class EnhancerState:
    """Per-session carry: streaming STFT state plus segment counter."""

    stream: StreamState
    segment: int = 0

    @classmethod
    def fresh(cls, channels: int, cfg: EnhancerConfig) -> "EnhancerState":
        return cls(StreamState(channels, cfg.frame_size, cfg.hop, out_channels=1))


def _segment_samples(segment, cfg: EnhancerConfig):
    x = segment.samples if isinstance(segment, MultichannelAudio) else np.asarray(segment, float)
    if x.ndim == 1:
        x = x[None]
    seg = cfg.segment_samples
    if x.shape[1] > seg:
        raise ValueError(f"segment has {x.shape[1]} samples, expected {seg}")
    partial = x.shape[1] < seg
    if partial:
        x = np.pad(x, ((0, 0), (0, seg - x.shape[1])))
    return x, partial


def enhance_segment(segment, dictionary: _dict.NoiseDictionary,
                    cfg: EnhancerConfig = EnhancerConfig(),
                    carry: EnhancerState | None = None):
    """Enhance one segment.

    Returns ``(mono_chunk, report, carry)``.  ``mono_chunk`` holds the output
    samples finalized by this segment, ``(1, n)``.  A segment shorter than
    ``cfg.segment_samples`` is zero-padded and flagged ``partial``.
    """
    x, partial = _segment_samples(segment, cfg)
    m = x.shape[0]
    dictionary.check(m, cfg)
    if carry is None:
        carry = EnhancerState.fresh(m, cfg)
    t0 = time.perf_counter()
    frames, _ = stream_push(carry.stream, x)
    phi_xx = _scm.estimate(frames)
    observed = _pca.project(dictionary.pca, _scm.flatten(phi_xx))
    dist = _dict.distances(dictionary, observed)
    j = int(np.argmin(dist))
    entry = dictionary.entry(j)
    ref = select_reference(phi_xx, entry.noise_diag, cfg.reference_policy)
    w = compute_weights(phi_xx, entry.inverse_scm, ref)
    out = stream_overlap_add(carry.stream, beamform(frames, w.weights))
    wall = time.perf_counter() - t0
    report = SegmentReport(carry.segment, j, ref, float(np.sqrt(dist[j])), wall,
                           frames.shape[1], out.shape[1], partial,
                           len(w.floored_bins), w.weights)
    carry.segment += 1
    return out, report, carry


def _segments(x: np.ndarray, seg: int):
    for start in range(0, x.shape[1], seg):
        yield x[:, start:start + seg]


def enhance_stream(audio: MultichannelAudio, dictionary: _dict.NoiseDictionary,
                   cfg: EnhancerConfig = EnhancerConfig()):
    """Enhance a whole recording segment by segment.

    Output sample ``i`` lines up with input sample ``i``; the output is
    ``frame_size - hop`` samples shorter than the input.
    """
    n = audio.n_samples
    if n < cfg.frame_size:
        raise TooShortError(f"input has {n} samples, need at least {cfg.frame_size}")
    dictionary.check(audio.channel_count, cfg)
    carry = EnhancerState.fresh(audio.channel_count, cfg)
    chunks, reports = [], []
    for seg in _segments(audio.samples, cfg.segment_samples):
        out, rep, carry = enhance_segment(seg, dictionary, cfg, carry)
        chunks.append(out)
        reports.append(rep)
    chunks.append(stream_flush(carry.stream))
    y = np.concatenate(chunks, axis=1)[:, :n - (cfg.frame_size - cfg.hop)]
    return MultichannelAudio(y, audio.sample_rate), reports


def apply_weights_stream(audio: MultichannelAudio | np.ndarray, weights: list,
                         cfg: EnhancerConfig = EnhancerConfig()) -> np.ndarray:
    """Replay recorded per-segment weights on another signal (e.g. a clean stem).

    Uses the same segmentation, padding and frame grid as :func:`enhance_stream`,
    so by linearity the outputs for two stems sum to the output for their sum.
    Returns a ``(n - frame_size + hop,)`` array.
    """
    x = audio.samples if isinstance(audio, MultichannelAudio) else np.asarray(audio, float)
    n = x.shape[1]
    state = StreamState(x.shape[0], cfg.frame_size, cfg.hop, out_channels=1)
    chunks = []
    segs = list(_segments(x, cfg.segment_samples))
    if len(segs) != len(weights):
        raise ValueError(f"{len(weights)} weight sets for {len(segs)} segments")
    for seg, w in zip(segs, weights):
        seg, _ = _segment_samples(seg, cfg)
        frames, _ = stream_push(state, seg)
        chunks.append(stream_overlap_add(state, beamform(frames, w)))
    chunks.append(stream_flush(state))
    return np.concatenate(chunks, axis=1)[0, :n - (cfg.frame_size - cfg.hop)]
