"""Deterministic synthetic scenes: moving far-field target plus switching ego-noise.

Every noise state is a handful of near-field point sources ("motors") placed
around the array.  Each source has its own excitation (low-passed broadband
noise plus a harmonic whine) and reaches every microphone through a delay,
a 1/distance gain and a smooth per-channel spectral ripple.  States switch on
a random schedule with equal-power cross-fades and are slowly amplitude
modulated.  A weak spatially white floor stands in for sensor noise.

The target is evaluated analytically at each microphone's delayed time, so
moving sources need no interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..stft import MultichannelAudio

__all__ = ["SceneSpec", "NoiseState", "array_geometry", "make_noise_states",
           "synthesize_noise", "synthesize_scene", "synthesize_calibration", "snap_to_common_grid",
           "SPEED_OF_SOUND"]

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class SceneSpec:
    channels: int = 8
    sample_rate: int = 32000
    duration: float = 20.0
    radius: float = 0.15
    z_offset: float = 0.0
    noise_states: int = 4
    sources_per_state: int = 2
    dwell_min: float = 1.0
    dwell_max: float = 4.0
    transition: float = 0.1
    modulation_depth: float = 0.3
    noise_level: float = 0.05
    sensor_noise_db: float = -30.0
    target: str = "chirp+multitone"
    target_wav: str = ""
    chirp_low: float = 300.0
    chirp_high: float = 4000.0
    chirp_period: float = 2.0
    tone_f0: float = 220.0
    tone_count: int = 6
    azimuth_start: float = 30.0
    azimuth_rate: float = 15.0
    distance_min: float = 1.0
    distance_max: float = 3.0
    distance_period: float = 10.0
    snr_db: float = 0.0
    calibration_duration: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.channels < 2:
            raise ValueError(f"scene needs at least 2 channels, got {self.channels}")
        if self.radius <= 0:
            raise ValueError(f"array radius must be positive, got {self.radius}")
        if self.noise_states < 1 or self.sources_per_state < 1:
            raise ValueError("need at least one noise state with one source")
        if not 0 < self.dwell_min <= self.dwell_max:
            raise ValueError(f"invalid dwell range [{self.dwell_min}, {self.dwell_max}]")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")
        if self.target not in ("chirp+multitone", "chirp", "multitone", "wav"):
            raise ValueError(f"unknown target model {self.target!r}")
        if self.target == "wav" and not self.target_wav:
            raise ValueError("target 'wav' needs target_wav")
        if not 0 < self.distance_min <= self.distance_max:
            raise ValueError("invalid distance range")

    def _seeds(self):
        # states, target, scene noise, calibration noise
        return np.random.SeedSequence(self.seed).spawn(4)


def array_geometry(spec: SceneSpec) -> np.ndarray:
    """Uniform circular array, ``(M, 3)`` meters; odd microphones raised by ``z_offset``."""
    m = np.arange(spec.channels)
    phi = 2 * np.pi * m / spec.channels
    z = np.where(m % 2 == 1, spec.z_offset, 0.0)
    return np.stack([spec.radius * np.cos(phi), spec.radius * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class NoiseState:
    positions: np.ndarray       # (Q, 3) source positions
    cutoffs: np.ndarray         # (Q,) broadband low-pass corner, Hz
    whine_f0: np.ndarray        # (Q,) harmonic fundamental, Hz
    whine_gain: np.ndarray      # (Q,) whine-to-broadband amplitude ratio
    ripple_db: np.ndarray       # (Q, M, R) spectral ripple control points
    am_rate: float
    am_phase: float


def make_noise_states(spec: SceneSpec) -> list[NoiseState]:
    rng = np.random.default_rng(spec._seeds()[0])
    states = []
    q = spec.sources_per_state
    for _ in range(spec.noise_states):
        az = rng.uniform(0, 2 * np.pi, q)
        dist = rng.uniform(1.3, 2.5, q) * spec.radius
        pos = np.stack([dist * np.cos(az), dist * np.sin(az), rng.uniform(-0.1, 0.0, q)], axis=1)
        states.append(NoiseState(
            positions=pos,
            cutoffs=rng.uniform(800, 6000, q),
            whine_f0=rng.uniform(80, 400, q),
            whine_gain=rng.uniform(0.5, 2.0, q),
            ripple_db=rng.uniform(-3, 3, (q, spec.channels, 8)),
            am_rate=float(rng.uniform(0.3, 2.0)),
            am_phase=float(rng.uniform(0, 2 * np.pi)),
        ))
    return states


def _state_noise(state: NoiseState, mics: np.ndarray, n: int, fs: int,
                 rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    f = np.fft.rfftfreq(n, 1 / fs)
    ctrl = np.linspace(0, fs / 2, state.ripple_db.shape[2])
    spectra = np.zeros((len(mics), f.size), dtype=np.complex128)
    for qi in range(len(state.positions)):
        broad_t = np.fft.irfft(np.fft.rfft(rng.standard_normal(n))
                               / (1 + (f / state.cutoffs[qi]) ** 2), n)
        harmonics = np.arange(1, 9)
        harmonics = harmonics[harmonics * state.whine_f0[qi] < fs / 2]
        phases = rng.uniform(0, 2 * np.pi, len(harmonics))
        whine = np.zeros(n)
        for h, ph in zip(harmonics, phases):
            whine += np.cos(2 * np.pi * h * state.whine_f0[qi] * t + ph) / h
        whine *= state.whine_gain[qi] * broad_t.std() / max(whine.std(), 1e-12)
        excitation = np.fft.rfft(broad_t + whine)
        d = np.linalg.norm(mics - state.positions[qi], axis=1)
        ripple_db = np.stack([np.interp(f, ctrl, r) for r in state.ripple_db[qi]])
        gain = 10 ** (ripple_db / 20) / d[:, None]
        spectra += excitation * gain * np.exp(-2j * np.pi * np.outer(d / SPEED_OF_SOUND, f))
    out = np.fft.irfft(spectra, n, axis=1)
    out /= out[0].std()
    return out


def _schedule(spec: SceneSpec, n: int, rng: np.random.Generator, cycle: bool) -> np.ndarray:
    """Equal-power cross-fade gains ``(S, n)`` for the state sequence."""
    fs = spec.sample_rate
    gains = np.zeros((spec.noise_states, n))
    bounds, labels = [0], []
    state = 0 if cycle else int(rng.integers(spec.noise_states))
    while bounds[-1] < n:
        labels.append(state)
        bounds.append(bounds[-1] + int(rng.uniform(spec.dwell_min, spec.dwell_max) * fs))
        if cycle:
            state = (state + 1) % spec.noise_states
        elif spec.noise_states > 1:
            state = (state + int(rng.integers(1, spec.noise_states))) % spec.noise_states
    for i, s in enumerate(labels):
        gains[s, bounds[i]:min(bounds[i + 1], n)] = 1.0
    fade = int(spec.transition * fs)
    for i in range(1, len(labels)):
        b = bounds[i]
        lo, hi = max(b - fade // 2, 0), min(b + fade - fade // 2, n)
        if hi <= lo:
            continue
        ramp = np.linspace(0, np.pi / 2, hi - lo)
        gains[:, lo:hi] = 0.0
        gains[labels[i - 1], lo:hi] += np.cos(ramp)
        gains[labels[i], lo:hi] += np.sin(ramp)
    return gains


def synthesize_noise(spec: SceneSpec, duration: float, rng: np.random.Generator,
                     cycle: bool = False) -> np.ndarray:
    """Ego-noise ``(M, n)`` from the spec's noise states on a fresh schedule."""
    fs = spec.sample_rate
    n = int(round(duration * fs))
    mics = array_geometry(spec)
    t = np.arange(n) / fs
    gains = _schedule(spec, n, rng, cycle)
    out = np.zeros((spec.channels, n))
    for s, state in enumerate(make_noise_states(spec)):
        if not gains[s].any():
            continue
        am = 1 + spec.modulation_depth * np.sin(2 * np.pi * state.am_rate * t + state.am_phase)
        out += _state_noise(state, mics, n, fs, rng) * (gains[s] * am)
    out *= spec.noise_level
    floor = spec.noise_level * 10 ** (spec.sensor_noise_db / 20)
    out += floor * rng.standard_normal(out.shape)
    return out


def _target_source(spec: SceneSpec, rng: np.random.Generator):
    parts = []
    if "chirp" in spec.target:
        fc = 0.5 * (spec.chirp_low + spec.chirp_high)
        fd = 0.5 * (spec.chirp_high - spec.chirp_low)
        period = spec.chirp_period
        phi0 = rng.uniform(0, 2 * np.pi)

        def chirp(t):
            # sinusoidal sweep between chirp_low and chirp_high
            return np.sqrt(2) * np.cos(
                2 * np.pi * (fc * t - fd * period / (2 * np.pi) * np.cos(2 * np.pi * t / period))
                + phi0)
        parts.append(chirp)
    if "multitone" in spec.target:
        harmonics = np.arange(1, spec.tone_count + 1)
        harmonics = harmonics[harmonics * spec.tone_f0 < spec.sample_rate / 2]
        phases = rng.uniform(0, 2 * np.pi, len(harmonics))
        amps = 1.0 / harmonics
        amps *= np.sqrt(2 / np.sum(amps ** 2))

        def multitone(t):
            return sum(a * np.cos(2 * np.pi * h * spec.tone_f0 * t + p)
                       for a, h, p in zip(amps, harmonics, phases))
        parts.append(multitone)
    if spec.target == "wav":
        from ..wavio import read_wav
        wav = read_wav(spec.target_wav)
        mono = wav.samples.mean(axis=0)
        mono = mono / max(mono.std(), 1e-12)
        grid = np.arange(len(mono)) / wav.sample_rate
        span = len(mono) / wav.sample_rate

        def from_wav(t):
            return np.interp(np.mod(t, span), grid, mono)
        parts.append(from_wav)
    return lambda t: sum(p(t) for p in parts)


def _target(spec: SceneSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    fs = spec.sample_rate
    t = np.arange(n) / fs
    src = _target_source(spec, rng)
    az = np.deg2rad(spec.azimuth_start + spec.azimuth_rate * t)
    mid = 0.5 * (spec.distance_min + spec.distance_max)
    amp = 0.5 * (spec.distance_max - spec.distance_min)
    dist = mid + amp * np.sin(2 * np.pi * t / spec.distance_period)
    direction = np.stack([np.cos(az), np.sin(az), np.zeros_like(az)])
    out = np.empty((spec.channels, n))
    for m, p in enumerate(array_geometry(spec)):
        # far field: microphones closer to the source hear it earlier
        lead = p @ direction / SPEED_OF_SOUND
        out[m] = src(t + lead) / dist
    return out


def synthesize_scene(spec: SceneSpec = SceneSpec()):
    """Return ``(mixture, clean, noise)``, with ``mixture = clean + noise`` exactly.

    The target is scaled so that channel 0 has the requested input SNR over
    the whole duration; the noise keeps its absolute level so that it matches
    :func:`synthesize_calibration` output.
    """
    seeds = spec._seeds()
    n = int(round(spec.duration * spec.sample_rate))
    noise = synthesize_noise(spec, spec.duration, np.random.default_rng(seeds[2]))
    clean = _target(spec, n, np.random.default_rng(seeds[1]))
    ratio = np.sum(clean[0] ** 2) / np.sum(noise[0] ** 2)
    clean *= np.sqrt(10 ** (spec.snr_db / 10) / ratio)
    clean, noise = snap_to_common_grid([clean, noise], mantissa_bits=50)
    mixture = clean + noise
    fs = spec.sample_rate
    return (MultichannelAudio(mixture, fs), MultichannelAudio(clean, fs),
            MultichannelAudio(noise, fs))


def snap_to_common_grid(stems, mantissa_bits: int = 50):
    """Round stems to a shared power-of-two grid so that their sum is exact.

    With ``2**E >= max |sum of stems|`` and grid ``2**(E - mantissa_bits)``,
    every stem, their sum and all differences are integers times the grid
    below ``2**mantissa_bits``, hence exactly representable for any float
    format with at least ``mantissa_bits + 1`` significand bits (23 for
    float32, 52 for float64).
    """
    bound = sum(np.abs(s) for s in stems).max(initial=0.0)
    if bound == 0:
        return [np.array(s, dtype=np.float64) for s in stems]
    q = 2.0 ** (int(np.ceil(np.log2(bound))) - mantissa_bits)
    return [np.round(np.asarray(s, dtype=np.float64) / q) * q for s in stems]


def synthesize_calibration(spec: SceneSpec = SceneSpec(), duration: float | None = None):
    """Noise-only calibration recording from the same noise states.

    States are visited round-robin so every state is represented.
    """
    seeds = spec._seeds()
    duration = spec.calibration_duration if duration is None else duration
    noise = synthesize_noise(spec, duration, np.random.default_rng(seeds[3]), cycle=True)
    return MultichannelAudio(noise, spec.sample_rate)
