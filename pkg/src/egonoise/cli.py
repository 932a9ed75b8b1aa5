"""Command-line entry point: ``egonoise {calibrate,enhance,eval,synth}``.

Exit codes
----------
0   success
2   bad command line (unknown flag, missing argument)
3   input file missing or unreadable
4   too few channels, or channel count differs between inputs
5   recording too short
6   dictionary fingerprint does not match the input
7   dictionary file malformed, truncated or failing its checksum
8   stems of different lengths
9   scene spec parse error
10  invalid parameter value

Errors go to standard error as ``<code>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time

import numpy as np

from . import dictionary as _dict
from .config import EnhancerConfig, FingerprintError
from .enhancer import enhance_stream
from .evalkit.run import evaluate_run
from .evalkit.scene import SceneSpec, snap_to_common_grid, synthesize_calibration, \
    synthesize_scene
from .evalkit.metrics import snr
from .evalkit.specfile import SpecParseError, read_spec
from .stft import MultichannelAudio, TooShortError, analyze
from .wavio import WavError, read_wav, write_wav

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNREADABLE = 3
EXIT_CHANNELS = 4
EXIT_TOO_SHORT = 5
EXIT_FINGERPRINT = 6
EXIT_DICT_FORMAT = 7
EXIT_LENGTH = 8
EXIT_SPEC = 9
EXIT_VALUE = 10


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read(path) -> MultichannelAudio:
    try:
        return read_wav(path)
    except WavError as exc:
        raise CliError(EXIT_UNREADABLE, str(exc)) from None


def _load_dict(path) -> _dict.NoiseDictionary:
    try:
        return _dict.load(path)
    except OSError as exc:
        raise CliError(EXIT_UNREADABLE, f"{path}: {exc.strerror or exc}") from None
    except _dict.DictionaryFormatError as exc:
        raise CliError(EXIT_DICT_FORMAT, f"{path}: {exc}") from None


def _session_config(d: _dict.NoiseDictionary, audio: MultichannelAudio,
                    reference="auto") -> EnhancerConfig:
    got = dataclasses.replace(d.fingerprint, channels=audio.channel_count,
                              sample_rate=audio.sample_rate)
    if got != d.fingerprint:
        raise CliError(EXIT_FINGERPRINT,
                       f"dictionary fingerprint [{d.fingerprint}] does not match input [{got}]")
    return d.fingerprint.to_config(reference_policy=reference)


def _reference(value: str):
    if value == "auto":
        return "auto"
    try:
        idx = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a channel index, got {value!r}")
    if idx < 0:
        raise argparse.ArgumentTypeError("channel index must be non-negative")
    return idx


def cmd_calibrate(args) -> int:
    audio = _read(args.noise)
    if audio.channel_count < 2:
        raise CliError(EXIT_CHANNELS, f"{args.noise}: need at least 2 channels, "
                                      f"got {audio.channel_count}")
    if args.rate is not None and args.rate != audio.sample_rate:
        raise CliError(EXIT_VALUE, f"{args.noise}: sample rate {audio.sample_rate} Hz, "
                                   f"expected {args.rate} Hz")
    cfg = EnhancerConfig(sample_rate=audio.sample_rate, frame_size=args.frame, hop=args.hop,
                         segment_length=args.segment, pca_dims=args.pca_dims,
                         loading=args.loading, store=args.store)
    timings = {}
    d = _dict.calibrate(audio, cfg, timings)
    t0 = time.perf_counter()
    _dict.save(d, args.out)
    timings["save"] = time.perf_counter() - t0
    print(f"J = {d.size}")
    print(f"I = {d.pca.component_count}")
    print(f"file = {args.out} ({os.path.getsize(args.out)} bytes)")
    for stage, sec in timings.items():
        print(f"time.{stage} = {sec:.3f} s")
    return EXIT_OK


def write_pgm(path, spec_frames: np.ndarray, floor_db: float = -80.0) -> None:
    """Grayscale log-magnitude image of ``(L, K)`` frames as binary PGM.

    Pixel = round(255 * (dB - floor_db) / -floor_db), dB relative to the peak
    power and clipped to [floor_db, 0]; top row is the highest bin.
    """
    power = np.abs(spec_frames.T[::-1]) ** 2
    peak = power.max(initial=0.0)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(power / peak) if peak > 0 else np.full(power.shape, floor_db)
    db = np.clip(db, floor_db, 0.0)
    pix = np.round(255 * (db - floor_db) / -floor_db).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pix.tobytes())


def cmd_enhance(args) -> int:
    audio = _read(args.input)
    d = _load_dict(args.dict)
    cfg = _session_config(d, audio, args.reference)
    if args.reference != "auto" and args.reference >= audio.channel_count:
        raise CliError(EXIT_VALUE, f"reference channel {args.reference} out of range")
    y, reports = enhance_stream(audio, d, cfg)
    write_wav(args.out, y)
    if args.report:
        with open(args.report, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\r\n")
            w.writerow(["segment", "j_star", "reference_channel", "distance", "wall_ms"])
            for r in reports:
                w.writerow([r.segment, r.selected, r.reference, f"{r.distance:.6g}",
                            f"{r.wall_time * 1e3:.3f}"])
    if args.spectrograms:
        os.makedirs(args.spectrograms, exist_ok=True)
        write_pgm(os.path.join(args.spectrograms, "input.pgm"),
                  analyze(MultichannelAudio(audio.samples[:1], audio.sample_rate),
                          cfg.frame_size, cfg.hop).frames[0])
        write_pgm(os.path.join(args.spectrograms, "output.pgm"),
                  analyze(y, cfg.frame_size, cfg.hop).frames[0])
    wall = np.mean([r.wall_time for r in reports]) * 1e3
    print(f"segments = {len(reports)}")
    print(f"wall_ms.mean = {wall:.3f}")
    return EXIT_OK


def _input_channel(value: str):
    if value in ("reference", "best"):
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'reference', 'best' or an index, got {value!r}")


def cmd_eval(args) -> int:
    mix, clean, noise = _read(args.mix), _read(args.clean), _read(args.noise)
    shapes = {p: a.samples.shape for p, a in ((args.mix, mix), (args.clean, clean),
                                              (args.noise, noise))}
    if len({s[0] for s in shapes.values()}) > 1:
        raise CliError(EXIT_CHANNELS, f"channel counts differ: {shapes}")
    if len({s[1] for s in shapes.values()}) > 1:
        raise CliError(EXIT_LENGTH, f"stem lengths differ: {shapes}")
    d = _load_dict(args.dict)
    cfg = _session_config(d, mix, args.reference)
    report = evaluate_run(mix, clean, noise, d, cfg, input_channel=args.input_channel)
    with open(args.out, "w", newline="") as f:
        f.write(report.to_csv())
    agg = report.aggregates()
    if agg is None:
        print("warning: every segment is silent; aggregates are empty", file=sys.stderr)
        return EXIT_OK
    print(f"segments = {agg['segments']} of {len(report.segments)}")
    for key in ("input_snr", "output_snr", "input_sdr", "output_sdr",
                "snr_improvement", "sdr_improvement"):
        print(f"{key} = {agg[key]:.3f} dB")
    print(f"wall_ms.mean = {agg['wall_ms']:.3f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        try:
            spec = read_spec(args.spec)
        except OSError as exc:
            raise CliError(EXIT_UNREADABLE, f"{args.spec}: {exc.strerror or exc}") from None
        except SpecParseError as exc:
            raise CliError(EXIT_SPEC, f"{args.spec}: {exc}") from None
    else:
        spec = SceneSpec()
    mix, clean, noise = synthesize_scene(spec)
    # float32 output: snap stems to a grid where clean + noise stays exact
    c, b = snap_to_common_grid([clean.samples, noise.samples], mantissa_bits=23)
    fs = spec.sample_rate
    prefix = args.out_prefix
    write_wav(f"{prefix}_mix.wav", MultichannelAudio(c + b, fs))
    write_wav(f"{prefix}_clean.wav", MultichannelAudio(c, fs))
    write_wav(f"{prefix}_noise.wav", MultichannelAudio(b, fs))
    if spec.calibration_duration > 0:
        write_wav(f"{prefix}_calib.wav", synthesize_calibration(spec))
    print(f"input_snr.ch0 = {snr(c[0], b[0]):.3f} dB")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egonoise", description="Dictionary-based ego-noise reduction (MVDR).",
        epilog=__doc__[__doc__.index("Exit codes"):],
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="build a noise dictionary from an ego-noise WAV")
    p.add_argument("--noise", required=True, help="multichannel noise-only WAV")
    p.add_argument("--out", required=True, help="dictionary file to write")
    p.add_argument("--segment", type=float, default=0.5, help="segment length, seconds")
    p.add_argument("--pca-dims", type=int, default=32)
    p.add_argument("--loading", type=float, default=1e-3, help="relative diagonal loading")
    p.add_argument("--frame", type=int, default=2048)
    p.add_argument("--hop", type=int, default=256)
    p.add_argument("--rate", type=int, default=None, help="required sample rate, Hz")
    p.add_argument("--store", choices=("inverse", "forward"), default="inverse",
                   help="store precomputed inverses or forward SCMs")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("enhance", help="enhance a multichannel WAV")
    p.add_argument("--input", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True, help="mono 32-bit float WAV")
    p.add_argument("--report", help="per-segment CSV")
    p.add_argument("--spectrograms", help="directory for input/output PGM spectrograms")
    p.add_argument("--reference", type=_reference, default="auto",
                   help="'auto' or a fixed reference channel")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="per-segment SNR/SDR from separated stems")
    p.add_argument("--mix", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--reference", type=_reference, default="auto")
    p.add_argument("--input-channel", type=_input_channel, default="reference",
                   help="channel for input metrics: 'reference', 'best' or an index")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic mixture/clean/noise/calibration set")
    p.add_argument("--spec", help="scene spec file (defaults if omitted)")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except FingerprintError as exc:
        code, msg = EXIT_FINGERPRINT, str(exc)
    except TooShortError as exc:
        code, msg = EXIT_TOO_SHORT, str(exc)
    except _dict.DictionaryFormatError as exc:
        code, msg = EXIT_DICT_FORMAT, str(exc)
    except ValueError as exc:
        code, msg = EXIT_VALUE, str(exc)
    print(f"{code}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
