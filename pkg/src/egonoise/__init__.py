"""Dictionary-based ego-noise reduction with MVDR beamforming."""
from .config import EnhancerConfig, Fingerprint, FingerprintError
from .dictionary import NoiseDictionary, calibrate, load, lookup, save
from .enhancer import enhance_segment, enhance_stream
from .stft import MultichannelAudio, Spectrogram, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "EnhancerConfig",
    "Fingerprint",
    "FingerprintError",
    "NoiseDictionary",
    "calibrate",
    "load",
    "lookup",
    "save",
    "enhance_segment",
    "enhance_stream",
    "MultichannelAudio",
    "Spectrogram",
    "analyze",
    "synthesize",
]
