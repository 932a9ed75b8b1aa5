"""WAV reading and writing on top of :mod:`scipy.io.wavfile`.

Readers accept 8/16/24/32-bit integer PCM and 32/64-bit float and return
float64 samples scaled to [-1, 1).  Writers always emit 32-bit float PCM.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.io import wavfile

from .stft import MultichannelAudio

__all__ = ["read_wav", "write_wav", "WavError"]


class WavError(OSError):
    """WAV file missing, unreadable or in an unsupported encoding."""


def read_wav(path) -> MultichannelAudio:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise WavError(f"{path}: no such file") from exc
    except (ValueError, OSError) as exc:
        raise WavError(f"{path}: {exc}") from exc
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        x = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported sample type {data.dtype}")
    x = np.atleast_2d(x.T) if x.ndim == 2 else x[None, :]
    return MultichannelAudio(np.ascontiguousarray(x), int(rate))


def write_wav(path, audio: MultichannelAudio | np.ndarray, sample_rate: int | None = None) -> None:
    if isinstance(audio, MultichannelAudio):
        x, rate = audio.samples, audio.sample_rate
    else:
        x = np.atleast_2d(np.asarray(audio, dtype=np.float64))
        rate = sample_rate
    if rate is None:
        raise ValueError("sample_rate required for raw arrays")
    data = x.T.astype(np.float32)
    wavfile.write(path, int(rate), data[:, 0] if data.shape[1] == 1 else data)
