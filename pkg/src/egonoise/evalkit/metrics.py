import numpy as np

__all__ = ["snr", "sdr", "DB_CAP"]

# +-inf ratios are reported as +-DB_CAP so that CSV output stays finite
DB_CAP = 120.0


def _ratio_db(num: float, den: float) -> float:
    if den == 0:
        return DB_CAP if num > 0 else -DB_CAP
    if num == 0:
        return -DB_CAP
    return float(np.clip(10 * np.log10(num / den), -DB_CAP, DB_CAP))


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def snr(reference, interference) -> float:
    """``10 log10(sum s^2 / sum e^2)`` in dB."""
    s, e = _pair(reference, interference)
    ps = float(s @ s)
    if ps == 0:
        raise ValueError("reference signal has zero energy")
    return _ratio_db(ps, float(e @ e))


def sdr(estimate, reference) -> float:
    """Scale-invariant SDR of ``estimate`` against ``reference``, in dB."""
    est, s = _pair(estimate, reference)
    ps = float(s @ s)
    if ps == 0:
        raise ValueError("reference signal has zero energy")
    target = (est @ s) / ps * s
    residual = est - target
    return _ratio_db(float(target @ target), float(residual @ residual))
