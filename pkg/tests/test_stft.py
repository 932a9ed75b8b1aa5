import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egonoise.stft import (MultichannelAudio, Spectrogram, StreamState, TooShortError, analyze,
                           frame_count, hann, stream_push, synthesize, window_energy)

N, HOP = 2048, 256


def test_frame_count_16000_samples():
    assert frame_count(16000, N, HOP) == (16000 - 2048) // 256 + 1 == 55
    spec = analyze(MultichannelAudio(np.zeros((2, 16000))))
    assert spec.frames.shape == (2, 55, 1025)


def test_zero_signal_gives_zero_spectrogram():
    assert not analyze(MultichannelAudio(np.zeros((3, 5000)))).frames.any()


def test_too_short():
    with pytest.raises(TooShortError):
        analyze(MultichannelAudio(np.zeros((2, N - 1))))


@pytest.mark.parametrize("frame_size,hop", [(2000, 250), (2048, 300), (2048, 2048), (2048, 0)])
def test_bad_grid(frame_size, hop):
    with pytest.raises(ValueError):
        analyze(MultichannelAudio(np.zeros((1, 4096))), frame_size, hop)


def test_periodic_hann():
    w = hann(8)
    assert w[0] == 0.0 and w[4] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:], w[:0:-1])


def _brute_dft(frame):
    n = np.arange(frame.size)
    k = np.arange(frame.size // 2 + 1)
    return (frame[None, :] * np.exp(-2j * np.pi * np.outer(k, n) / frame.size)).sum(axis=1)


def test_bin_centred_cosine():
    k0, n = 100, 8192
    x = np.cos(2 * np.pi * k0 * np.arange(n) / N)
    spec = analyze(MultichannelAudio(x[None]))
    mag = np.abs(spec.frames[0])
    assert (mag.argmax(axis=1) == k0).all()
    # brute-force DFT of the first windowed frame agrees with the fast path
    np.testing.assert_allclose(spec.frames[0, 0], _brute_dft(x[:N] * hann(N)), atol=1e-9)
    rel = 20 * np.log10(np.maximum(mag, 1e-300) / mag[:, [k0]])
    # periodic Hann: the two neighbours sit at -6.02 dB, everything else is an exact null
    np.testing.assert_allclose(rel[:, [k0 - 1, k0 + 1]], 20 * np.log10(0.5), atol=1e-9)
    far = np.ones(spec.bin_count, bool)
    far[k0 - 1:k0 + 2] = False
    assert (rel[:, far] <= -31.5).all()


def _interior_rel_rms(x, y):
    a, b = x[:, N:-N], y[:, N:x.shape[1] - N]
    return np.sqrt(np.mean((a - b) ** 2) / np.mean(a ** 2))


def test_roundtrip_white_noise(rng):
    x = rng.standard_normal((4, 20000))
    y = synthesize(analyze(MultichannelAudio(x))).samples
    assert y.shape[1] == (frame_count(20000, N, HOP) - 1) * HOP + N
    assert _interior_rel_rms(x, y) < 1e-10


@settings(max_examples=15, deadline=None)
@given(frames=st.integers(10, 40), hop_div=st.sampled_from([2, 4, 8]),
       seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(frames, hop_div, seed):
    n, hop = 256, 256 // hop_div
    x = np.random.default_rng(seed).standard_normal((2, (frames - 1) * hop + n))
    y = synthesize(analyze(MultichannelAudio(x), n, hop)).samples
    assert y.shape == x.shape
    a, b = x[:, n:-n], y[:, n:-n]
    assert np.sqrt(np.mean((a - b) ** 2) / np.mean(a ** 2)) < 1e-10


def test_synthesis_zero_and_linearity(rng):
    spec = analyze(MultichannelAudio(rng.standard_normal((2, 6000))))
    zero = Spectrogram(np.zeros_like(spec.frames), N, HOP)
    assert not synthesize(zero).samples.any()
    double = Spectrogram(2 * spec.frames, N, HOP)
    np.testing.assert_allclose(synthesize(double).samples, 2 * synthesize(spec).samples,
                               rtol=0, atol=1e-12)


def test_synthesis_shape_error():
    with pytest.raises(ValueError):
        Spectrogram(np.zeros((1, 3, 100), complex), N, HOP)


def test_parseval_per_frame(rng):
    x = rng.standard_normal((1, 4096))
    spec = analyze(MultichannelAudio(x))
    frame = x[0, :N] * hann(N)
    X = spec.frames[0, 0]
    energy = (abs(X[0]) ** 2 + abs(X[-1]) ** 2 + 2 * (abs(X[1:-1]) ** 2).sum()) / N
    assert energy == pytest.approx((frame ** 2).sum(), rel=1e-9)


def test_window_energy_constant_for_hann():
    np.testing.assert_allclose(window_energy(N, HOP), 3 * N / 8 / HOP * np.ones(HOP), rtol=1e-12)


def test_stream_55_then_63(rng):
    x = rng.standard_normal((2, 32000))
    state = StreamState(2, N, HOP)
    a, state = stream_push(state, x[:, :16000])
    b, state = stream_push(state, x[:, 16000:])
    assert (a.shape[1], b.shape[1]) == (55, 63)
    assert a.shape[1] + b.shape[1] == frame_count(32000, N, HOP) == 118
    assert np.array_equal(np.concatenate([a, b], axis=1), analyze(MultichannelAudio(x)).frames)


def test_stream_short_push():
    state = StreamState(1, N, HOP)
    frames, state = stream_push(state, np.ones((1, 100)))
    assert frames.shape[1] == 0 and state.input_backlog.shape[1] == 100


def test_stream_channel_mismatch():
    with pytest.raises(ValueError):
        stream_push(StreamState(2, N, HOP), np.zeros((3, 10)))


@settings(max_examples=25, deadline=None)
@given(cuts=st.lists(st.integers(0, 3000), min_size=0, max_size=6))
def test_chunked_analysis_bit_exact(cuts):
    x = np.random.default_rng(5).standard_normal((2, 3000))
    n, hop = 256, 64
    state = StreamState(2, n, hop)
    out = []
    bounds = [0, *sorted(cuts), 3000]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        frames, state = stream_push(state, x[:, lo:hi])
        out.append(frames)
    assert np.array_equal(np.concatenate(out, axis=1),
                          analyze(MultichannelAudio(x), n, hop).frames)
