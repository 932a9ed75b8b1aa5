"""Synthetic scenes and SNR/SDR scoring for desk-scale evaluation."""
from .metrics import DB_CAP, sdr, snr
from .run import MetricReport, SegmentMetrics, evaluate_run
from .scene import SceneSpec, synthesize_calibration, synthesize_scene

__all__ = ["DB_CAP", "sdr", "snr", "MetricReport", "SegmentMetrics", "evaluate_run",
           "SceneSpec", "synthesize_calibration", "synthesize_scene"]
