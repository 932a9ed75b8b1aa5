"""Ego-noise dictionary: calibration, nearest-neighbour lookup, persistence.

File layout (little-endian, all counts u64)::

    b"EGND"  u32 version (=1)
    fingerprint  M K N hop sample_rate segment_samples  f64 loading  I J  storage
    pca          mean[P] f64, basis[I*P] f64, variances[I] f64
    J entries    reduced[I] f64, triangle[K*M(M+1)/2] complex (re, im f64),
                 noise_diag[K*M] f64
    u32 CRC-32 of every preceding byte

``storage`` is 0 when the per-entry triangles are the loaded inverse SCMs and
1 when they are the forward (unloaded) SCMs, inverted on first access.
"""
from __future__ import annotations

import io
import os
import struct
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import pca as _pca
from . import scm as _scm
from .config import EnhancerConfig, Fingerprint, FingerprintError
from .stft import MultichannelAudio, TooShortError, analyze

__all__ = [
    "NoiseDictionary",
    "DictionaryEntry",
    "DictionaryFormatError",
    "calibrate",
    "lookup",
    "distances",
    "save",
    "load",
    "MAGIC",
    "VERSION",
]

MAGIC = b"EGND"
VERSION = 1
_STORAGE_CODES = {"inverse": 0, "forward": 1}
_FP = struct.Struct("<6Qd2Q")


class DictionaryFormatError(ValueError):
    """Malformed, truncated or corrupted dictionary file."""


@dataclass
class DictionaryEntry:
    reduced: np.ndarray
    inverse_scm: _scm.Scm
    noise_diag: np.ndarray
    segment_index: int


@dataclass(eq=False)
class NoiseDictionary:
    """Calibrated noise SCM dictionary.

    ``triangles`` is ``(J, K, M(M+1)/2)`` complex: the loaded inverses when
    ``storage == "inverse"``, the raw noise SCMs when ``storage == "forward"``.
    """

    fingerprint: Fingerprint
    pca: _pca.PcaModel
    reduced: np.ndarray
    triangles: np.ndarray
    noise_diag: np.ndarray
    storage: str = "inverse"
    _inverse_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.storage not in _STORAGE_CODES:
            raise ValueError(f"unknown storage {self.storage!r}")
        if len(self.reduced) < 1:
            raise ValueError("dictionary needs at least one entry")
        self._floor = None

    @property
    def size(self) -> int:
        return self.reduced.shape[0]

    @property
    def channel_count(self) -> int:
        return self.fingerprint.channels

    def __len__(self):
        return self.size

    def inverse(self, j: int) -> _scm.Scm:
        """Loaded inverse noise SCM of entry ``j`` as full ``(K, M, M)`` matrices."""
        m = self.channel_count
        if self.storage == "inverse":
            return _scm.Scm(_scm.unpack_upper(self.triangles[j], m))
        if j not in self._inverse_cache:
            if self._floor is None:
                self._floor = _scm.default_floor(_max_trace(self.triangles, m), m)
            fwd = _scm.Scm(_scm.unpack_upper(self.triangles[j], m))
            self._inverse_cache[j] = _scm.invert_loaded(fwd, self.fingerprint.loading,
                                                        self._floor)
        return self._inverse_cache[j]

    def entry(self, j: int) -> DictionaryEntry:
        return DictionaryEntry(self.reduced[j], self.inverse(j), self.noise_diag[j], j)

    def check(self, channels: int, cfg: EnhancerConfig) -> None:
        """Raise FingerprintError if ``cfg`` with ``channels`` inputs does not match."""
        want = cfg.fingerprint(channels)
        if want != self.fingerprint:
            raise FingerprintError(
                f"dictionary fingerprint [{self.fingerprint}] does not match "
                f"session fingerprint [{want}]")

    def __eq__(self, other):
        if not isinstance(other, NoiseDictionary):
            return NotImplemented
        arrays = ((self.reduced, other.reduced), (self.triangles, other.triangles),
                  (self.noise_diag, other.noise_diag))
        return (self.fingerprint == other.fingerprint and self.storage == other.storage
                and self.pca == other.pca
                and all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in arrays))


def _max_trace(triangles: np.ndarray, channels: int) -> float:
    iu = np.triu_indices(channels)
    diag_cols = np.flatnonzero(iu[0] == iu[1])
    return float(np.real(triangles[:, :, diag_cols]).sum(axis=2).max())


def segment_supervectors(audio: MultichannelAudio, cfg: EnhancerConfig) -> np.ndarray:
    """Forward SCM triangles ``(J, K, T)`` of consecutive non-overlapping segments.

    The STFT grid restarts at every segment boundary.
    """
    seg = cfg.segment_samples
    j_count = audio.n_samples // seg
    m, k = audio.channel_count, cfg.bin_count
    out = np.empty((j_count, k, m * (m + 1) // 2), dtype=np.complex128)
    for j in range(j_count):
        chunk = MultichannelAudio(audio.samples[:, j * seg:(j + 1) * seg], audio.sample_rate)
        phi = _scm.estimate(analyze(chunk, cfg.frame_size, cfg.hop))
        out[j] = _scm.pack_upper(phi.bins)
    return out


def calibrate(noise_audio: MultichannelAudio, cfg: EnhancerConfig = EnhancerConfig(),
              timings: dict | None = None) -> NoiseDictionary:
    """Build the dictionary from a noise-only recording.

    ``timings``, if given, receives wall-clock seconds per stage.
    """
    m = noise_audio.channel_count
    if noise_audio.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"recording rate {noise_audio.sample_rate} Hz != configured {cfg.sample_rate} Hz")
    j_count = noise_audio.n_samples // cfg.segment_samples
    if j_count < 2:
        raise TooShortError(
            f"calibration needs at least 2 segments of {cfg.segment_samples} samples, "
            f"recording has {noise_audio.n_samples}")
    if cfg.pca_dims > j_count - 1:
        raise TooShortError(
            f"pca_dims={cfg.pca_dims} needs at least {cfg.pca_dims + 1} segments, "
            f"recording gives {j_count}")
    clock = time.perf_counter
    t0 = clock()
    tri = segment_supervectors(noise_audio, cfg)
    t1 = clock()
    vectors = tri.view(np.float64).reshape(j_count, -1)
    model = _pca.train(vectors, cfg.pca_dims)
    reduced = _pca.project(model, vectors)
    t2 = clock()

    floor = _scm.default_floor(_max_trace(tri, m), m)
    noise_diag = np.empty((j_count, cfg.bin_count, m))
    stored = np.empty_like(tri) if cfg.store == "inverse" else tri
    for j in range(j_count):
        fwd = _scm.Scm(_scm.unpack_upper(tri[j], m))
        noise_diag[j] = _scm.loaded(fwd, cfg.loading, floor).diagonal()
        if cfg.store == "inverse":
            stored[j] = _scm.pack_upper(_scm.invert_loaded(fwd, cfg.loading, floor).bins)
    t3 = clock()
    if timings is not None:
        timings.update(scm=t1 - t0, pca=t2 - t1, inverse=t3 - t2)
    return NoiseDictionary(cfg.fingerprint(m), model, reduced, stored, noise_diag, cfg.store)


def distances(d: NoiseDictionary, observed: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from ``observed`` to every entry."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape != (d.reduced.shape[1],):
        raise ValueError(f"observed vector has shape {observed.shape}, "
                         f"dictionary uses {d.reduced.shape[1]} components")
    diff = d.reduced - observed
    return np.einsum("ji,ji->j", diff, diff)


def lookup(d: NoiseDictionary, observed: np.ndarray) -> int:
    """Index of the closest entry; ties go to the smallest index."""
    if d.size == 0:
        raise ValueError("empty dictionary")
    return int(np.argmin(distances(d, observed)))


class _CrcWriter:
    def __init__(self, f):
        self.f = f
        self.crc = 0

    def write(self, b):
        b = memoryview(b).cast("B")
        self.crc = zlib.crc32(b, self.crc)
        self.f.write(b)


class _CrcReader:
    def __init__(self, f):
        self.f = f
        self.crc = 0

    def read(self, n: int, what: str) -> bytes:
        b = self.f.read(n)
        if len(b) != n:
            raise DictionaryFormatError(f"truncated file while reading {what}")
        self.crc = zlib.crc32(b, self.crc)
        return b


def _le(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))


def save(d: NoiseDictionary, sink) -> None:
    """Write ``d`` to a path or binary file object."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as f:
            return save(d, f)
    w = _CrcWriter(sink)
    fp = d.fingerprint
    w.write(MAGIC + struct.pack("<I", VERSION))
    w.write(_FP.pack(fp.channels, fp.bins, fp.frame_size, fp.hop, fp.sample_rate,
                     fp.segment_samples, fp.loading, fp.pca_dims, d.size)
            + struct.pack("<Q", _STORAGE_CODES[d.storage]))
    w.write(_le(d.pca.mean))
    w.write(_le(d.pca.basis))
    w.write(_le(d.pca.explained_variance))
    for j in range(d.size):
        w.write(_le(d.reduced[j]))
        w.write(_le(d.triangles[j]))
        w.write(_le(d.noise_diag[j]))
    sink.write(struct.pack("<I", w.crc))


def load(source, expected: Fingerprint | None = None) -> NoiseDictionary:
    """Read a dictionary; optionally insist on a fingerprint."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            return load(f, expected)
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    r = _CrcReader(source)
    head = r.read(8, "header")
    if head[:4] != MAGIC:
        raise DictionaryFormatError(f"bad magic field: {head[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", head[4:])
    if version != VERSION:
        raise DictionaryFormatError(f"unsupported version field: {version}")
    m, k, n, hop, rate, seg, loading, dims, j_count = _FP.unpack(r.read(_FP.size, "fingerprint"))
    (storage_code,) = struct.unpack("<Q", r.read(8, "fingerprint"))
    storage = {v: s for s, v in _STORAGE_CODES.items()}.get(storage_code)
    if storage is None:
        raise DictionaryFormatError(f"unknown storage field: {storage_code}")
    if m < 1 or k < 1 or j_count < 1 or dims < 1:
        raise DictionaryFormatError(f"invalid fingerprint field: M={m} K={k} I={dims} J={j_count}")
    fp = Fingerprint(m, k, n, hop, rate, seg, loading, dims)
    if expected is not None and expected != fp:
        raise FingerprintError(
            f"dictionary fingerprint [{fp}] does not match expected [{expected}]")

    p = k * m * (m + 1)
    t = m * (m + 1) // 2
    payload = 8 * (p + dims * p + dims + j_count * (dims + 2 * k * t + k * m)) + 4
    if source.seekable():
        here = source.tell()
        left = source.seek(0, io.SEEK_END) - here
        source.seek(here)
        if left < payload:
            raise DictionaryFormatError(
                f"truncated file: fingerprint field promises {payload} more bytes, "
                f"found {left}")

    def arr(count, dtype, what):
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(r.read(count * dt.itemsize, what), dtype=dt).astype(dtype)

    mean = arr(p, np.float64, "pca mean")
    basis = arr(dims * p, np.float64, "pca basis").reshape(dims, p)
    variances = arr(dims, np.float64, "pca variances")
    reduced, triangles, noise_diag = [], [], []
    for j in range(j_count):
        reduced.append(arr(dims, np.float64, f"entry {j}"))
        triangles.append(arr(k * t, np.complex128, f"entry {j}").reshape(k, t))
        noise_diag.append(arr(k * m, np.float64, f"entry {j}").reshape(k, m))
    crc = r.crc
    trailer = source.read(4)
    if len(trailer) != 4:
        raise DictionaryFormatError("truncated file while reading checksum")
    if struct.unpack("<I", trailer)[0] != crc:
        raise DictionaryFormatError("checksum mismatch: file is corrupted")
    if source.read(1):
        raise DictionaryFormatError("trailing bytes after checksum")
    model = _pca.PcaModel(mean, basis, variances)
    return NoiseDictionary(fp, model, np.array(reduced), np.array(triangles),
                           np.array(noise_diag), storage)
