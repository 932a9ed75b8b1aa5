"""Hann-windowed STFT analysis and WOLA synthesis for multichannel audio.

Frames start at sample 0 with no padding: frame ``l`` covers samples
``[l*hop, l*hop + frame_size)``.  Synthesis uses the Hann window again and
divides by the steady-state squared-window sum, so any spectrogram coming
straight out of :func:`analyze` is reconstructed exactly wherever the full
set of ``frame_size / hop`` frames overlaps.  The first and last
``frame_size - hop`` samples fade in and out instead.

Streaming (:class:`StreamState`) keeps the frame grid continuous across
chunk boundaries.  Output samples become final ``frame_size - hop`` samples
after the corresponding input, which is the documented stream latency.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MultichannelAudio",
    "Spectrogram",
    "StreamState",
    "TooShortError",
    "hann",
    "frame_count",
    "analyze",
    "synthesize",
    "stream_push",
    "stream_overlap_add",
    "stream_flush",
    "window_energy",
]


class TooShortError(ValueError):
    """Signal shorter than what the operation needs."""


@dataclass
class MultichannelAudio:
    """Real samples laid out as ``(channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: int = 32000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError(f"expected (channels, n_samples) samples, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = s

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class Spectrogram:
    """Complex one-sided STFT frames indexed ``[channel, frame, bin]``."""

    frames: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int = 32000
    window: str = "hann"

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 3:
            raise ValueError(f"frames must be (channels, frames, bins), got shape {f.shape}")
        if f.shape[2] != self.frame_size // 2 + 1:
            raise ValueError(
                f"bin count {f.shape[2]} does not match frame_size {self.frame_size}")
        _check_grid(self.frame_size, self.hop)
        self.frames = f.astype(np.complex128, copy=False)

    @property
    def channel_count(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_count(self) -> int:
        return self.frames.shape[1]

    @property
    def bin_count(self) -> int:
        return self.frames.shape[2]


def _check_grid(frame_size: int, hop: int) -> None:
    if frame_size < 2 or frame_size & (frame_size - 1):
        raise ValueError(f"frame_size must be a power of two, got {frame_size}")
    if hop < 1 or hop >= frame_size or frame_size % hop:
        # hop == frame_size leaves sample 0 of every frame with zero Hann weight
        raise ValueError(
            f"hop must divide frame_size and be smaller than it, got hop={hop}, "
            f"frame_size={frame_size}")


def hann(frame_size: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant, COLA at any hop dividing N/2)."""
    n = np.arange(frame_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_size)


def frame_count(n_samples: int, frame_size: int, hop: int) -> int:
    if n_samples < frame_size:
        return 0
    return (n_samples - frame_size) // hop + 1


def _frame_signal(x: np.ndarray, frame_size: int, hop: int) -> np.ndarray:
    # x: (M, n) -> (M, L, N) strided view, no copy
    view = np.lib.stride_tricks.sliding_window_view(x, frame_size, axis=-1)
    return view[:, ::hop, :]


def _analyze_array(x: np.ndarray, frame_size: int, hop: int) -> np.ndarray:
    frames = _frame_signal(x, frame_size, hop)
    return np.fft.rfft(frames * hann(frame_size), axis=-1)


def analyze(audio: MultichannelAudio, frame_size: int = 2048, hop: int = 256) -> Spectrogram:
    """Windowed one-sided STFT of every channel.

    Raises TooShortError if the signal does not hold one full frame.
    """
    _check_grid(frame_size, hop)
    if audio.n_samples < frame_size:
        raise TooShortError(
            f"audio has {audio.n_samples} samples, need at least frame_size={frame_size}")
    frames = _analyze_array(audio.samples, frame_size, hop)
    return Spectrogram(frames, frame_size, hop, audio.sample_rate)


@dataclass
class StreamState:
    """Carry-over between chunks for streaming analysis and synthesis.

    ``input_backlog`` holds the unconsumed input tail (fewer than
    ``frame_size`` samples once a push returns).  ``ola_tail`` is the
    not-yet-final part of the synthesis buffer; ``window_norm`` is the
    squared-window compensation for each of the ``hop`` sample phases.
    """

    channel_count: int
    frame_size: int = 2048
    hop: int = 256
    out_channels: int | None = None
    input_backlog: np.ndarray = field(default=None, repr=False)
    ola_tail: np.ndarray = field(default=None, repr=False)
    window_norm: np.ndarray = field(default=None, repr=False)
    frames_in: int = 0
    frames_out: int = 0

    def __post_init__(self):
        _check_grid(self.frame_size, self.hop)
        if self.out_channels is None:
            self.out_channels = self.channel_count
        tail = self.frame_size - self.hop
        if self.input_backlog is None:
            self.input_backlog = np.zeros((self.channel_count, 0))
        if self.ola_tail is None:
            self.ola_tail = np.zeros((self.out_channels, tail))
        if self.window_norm is None:
            self.window_norm = window_energy(self.frame_size, self.hop)

    @property
    def latency(self) -> int:
        return self.frame_size - self.hop


def stream_push(state: StreamState, chunk: MultichannelAudio | np.ndarray):
    """Append a chunk and return the newly complete frames as ``(M, L, K)``.

    Frames are identical to what :func:`analyze` gives on the concatenation
    of everything pushed so far.
    """
    x = chunk.samples if isinstance(chunk, MultichannelAudio) else np.asarray(chunk, np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != state.channel_count:
        raise ValueError(
            f"chunk has {x.shape[0]} channels, stream expects {state.channel_count}")
    buf = np.concatenate([state.input_backlog, x], axis=1)
    n_frames = frame_count(buf.shape[1], state.frame_size, state.hop)
    if n_frames == 0:
        state.input_backlog = buf
        return np.zeros((state.channel_count, 0, state.frame_size // 2 + 1), complex), state
    frames = _analyze_array(buf[:, :(n_frames - 1) * state.hop + state.frame_size],
                            state.frame_size, state.hop)
    state.input_backlog = buf[:, n_frames * state.hop:].copy()
    state.frames_in += n_frames
    return frames, state


def window_energy(frame_size: int, hop: int) -> np.ndarray:
    """Steady-state sum of squared Hann weights landing on each hop phase."""
    w2 = hann(frame_size) ** 2
    return w2.reshape(frame_size // hop, hop).sum(axis=0)


def _overlap_add(time_frames: np.ndarray, hop: int) -> np.ndarray:
    """Overlap-add synthesis-windowed frames ``(C, L, N)``."""
    C, L, N = time_frames.shape
    win = hann(N)
    out = np.zeros((C, (L - 1) * hop + N))
    for r in range(N // hop):
        # frames l and l + N/hop never overlap inside one sub-block, so each
        # hop-sized piece of every frame lands via a single reshape-add
        seg = time_frames[:, :, r * hop:(r + 1) * hop] * win[r * hop:(r + 1) * hop]
        out[:, r * hop:r * hop + L * hop] += seg.reshape(C, L * hop)
    return out


def _normalize(acc: np.ndarray, norm: np.ndarray) -> np.ndarray:
    # acc always starts on a hop boundary of the global grid
    reps = -(-acc.shape[1] // norm.size)
    return acc / np.tile(norm, reps)[:acc.shape[1]]


def stream_overlap_add(state: StreamState, frames: np.ndarray) -> np.ndarray:
    """Synthesize ``(C, L, K)`` frames; returns the ``L*hop`` samples now final."""
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[2] != state.frame_size // 2 + 1:
        raise ValueError(f"frames must be (channels, frames, {state.frame_size // 2 + 1}), "
                         f"got {frames.shape}")
    if frames.shape[0] != state.out_channels:
        raise ValueError(
            f"frames have {frames.shape[0]} channels, stream emits {state.out_channels}")
    L = frames.shape[1]
    if L == 0:
        return np.zeros((state.out_channels, 0))
    N, hop = state.frame_size, state.hop
    acc = _overlap_add(np.fft.irfft(frames, n=N, axis=-1), hop)
    acc[:, :N - hop] += state.ola_tail
    done = L * hop
    state.ola_tail = acc[:, done:].copy()
    state.frames_out += L
    return _normalize(acc[:, :done], state.window_norm)


def stream_flush(state: StreamState) -> np.ndarray:
    """Emit the pending synthesis tail (``frame_size - hop`` samples) and clear it."""
    out = _normalize(state.ola_tail, state.window_norm)
    state.ola_tail = np.zeros_like(state.ola_tail)
    return out


def synthesize(spec: Spectrogram) -> MultichannelAudio:
    """Weighted overlap-add inverse of :func:`analyze`.

    Returns ``(L - 1) * hop + frame_size`` samples per channel.
    """
    state = StreamState(spec.channel_count, spec.frame_size, spec.hop)
    head = stream_overlap_add(state, spec.frames)
    tail = stream_flush(state)
    return MultichannelAudio(np.concatenate([head, tail], axis=1), spec.sample_rate)
