import csv
import io

import numpy as np
import pytest

from egonoise import cli
from egonoise.evalkit.specfile import HEADER
from egonoise.wavio import read_wav, write_wav

SMALL = ["--frame", "256", "--hop", "64", "--segment", "0.05", "--pca-dims", "4"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scene.spec").write_text(
        f"{HEADER}\nchannels = 4\nduration = 2\nnoise_states = 3\n"
        "calibration_duration = 3\ndwell_min = 0.3\ndwell_max = 0.6\nseed = 3\n")
    assert cli.main(["synth", "--spec", str(d / "scene.spec"), "--out-prefix", str(d / "s")]) == 0
    assert cli.main(["calibrate", "--noise", str(d / "s_calib.wav"),
                     "--out", str(d / "d.egnd"), *SMALL]) == 0
    return d


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_synth_outputs(workdir):
    stems = [read_wav(workdir / f"s_{n}.wav") for n in ("mix", "clean", "noise")]
    assert len({s.samples.shape for s in stems}) == 1
    assert stems[0].samples.shape == (4, 64000)
    mix, clean, noise = (s.samples for s in stems)
    assert not (mix - clean - noise).any()


def test_synth_bit_identical(workdir, tmp_path):
    cli.main(["synth", "--spec", str(workdir / "scene.spec"), "--out-prefix", str(tmp_path / "t")])
    for n in ("mix", "clean", "noise", "calib"):
        assert (tmp_path / f"t_{n}.wav").read_bytes() == (workdir / f"s_{n}.wav").read_bytes()


def test_calibrate_bit_identical(workdir, tmp_path, capsys):
    out = tmp_path / "again.egnd"
    assert cli.main(["calibrate", "--noise", str(workdir / "s_calib.wav"),
                     "--out", str(out), *SMALL]) == 0
    assert out.read_bytes() == (workdir / "d.egnd").read_bytes()
    text = capsys.readouterr().out
    assert "J = 60" in text and "I = 4" in text and "time.pca" in text


def test_enhance_report(workdir, tmp_path):
    assert cli.main(["enhance", "--input", str(workdir / "s_mix.wav"),
                     "--dict", str(workdir / "d.egnd"), "--out", str(tmp_path / "y.wav"),
                     "--report", str(tmp_path / "r.csv"),
                     "--spectrograms", str(tmp_path / "img")]) == 0
    rows = _rows(tmp_path / "r.csv")
    assert rows[0] == ["segment", "j_star", "reference_channel", "distance", "wall_ms"]
    assert len(rows) == 1 + 40
    y = read_wav(tmp_path / "y.wav")
    assert y.channel_count == 1 and y.n_samples == 64000 - (256 - 64)
    assert (tmp_path / "img" / "output.pgm").read_bytes().startswith(b"P5\n")


def test_enhance_four_rows_for_two_seconds(workdir, tmp_path, capsys):
    # default framing: 2.0 s at 0.5 s segments
    cli.main(["calibrate", "--noise", str(workdir / "s_calib.wav"), "--out",
              str(tmp_path / "big.egnd"), "--pca-dims", "4"])
    assert cli.main(["enhance", "--input", str(workdir / "s_mix.wav"), "--dict",
                     str(tmp_path / "big.egnd"), "--out", str(tmp_path / "y.wav"),
                     "--report", str(tmp_path / "r.csv"), "--reference", "2"]) == 0
    rows = _rows(tmp_path / "r.csv")
    assert len(rows) == 5 and {r[2] for r in rows[1:]} == {"2"}


def test_eval_and_swap(workdir, tmp_path):
    args = ["--dict", str(workdir / "d.egnd"), "--input-channel", "0"]
    mix = str(workdir / "s_mix.wav")
    clean, noise = str(workdir / "s_clean.wav"), str(workdir / "s_noise.wav")
    assert cli.main(["eval", "--mix", mix, "--clean", clean, "--noise", noise,
                     "--out", str(tmp_path / "a.csv"), *args]) == 0
    assert cli.main(["eval", "--mix", mix, "--clean", noise, "--noise", clean,
                     "--out", str(tmp_path / "b.csv"), *args]) == 0
    a, b = _rows(tmp_path / "a.csv"), _rows(tmp_path / "b.csv")
    assert a[-1][0] == "mean" and len(a) == 1 + 40 + 1
    col = a[0].index("input_snr_db")
    assert float(a[-1][col]) == pytest.approx(-float(b[-1][col]), abs=0.05)
    for ra, rb in zip(a[1:-1], b[1:-1]):
        assert float(ra[col]) == pytest.approx(-float(rb[col]), abs=0.05)


def test_eval_all_silent(workdir, tmp_path, capsys):
    noise = read_wav(workdir / "s_noise.wav")
    write_wav(tmp_path / "zero.wav", np.zeros_like(noise.samples), noise.sample_rate)
    assert cli.main(["eval", "--mix", str(workdir / "s_noise.wav"),
                     "--clean", str(tmp_path / "zero.wav"),
                     "--noise", str(workdir / "s_noise.wav"),
                     "--dict", str(workdir / "d.egnd"), "--out", str(tmp_path / "e.csv")]) == 0
    assert "silent" in capsys.readouterr().err
    assert _rows(tmp_path / "e.csv")[-1][4] == ""


def _err_code(argv, capsys):
    code = cli.main(argv)
    err = capsys.readouterr().err
    assert err.startswith(f"{code}: ")
    return code


def test_error_codes(workdir, tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_wav(tmp_path / "short.wav", rng.standard_normal((4, 12800)), 32000)
    write_wav(tmp_path / "mono.wav", rng.standard_normal(32000), 32000)
    write_wav(tmp_path / "m2.wav", rng.standard_normal((2, 32000)), 32000)
    write_wav(tmp_path / "cut.wav", rng.standard_normal((4, 32000)), 32000)
    data = (workdir / "d.egnd").read_bytes()
    (tmp_path / "bad.egnd").write_bytes(b"XXXX" + data[4:])
    (tmp_path / "bad.spec").write_text(f"{HEADER}\nfoo = 1\n")
    d = str(workdir / "d.egnd")
    out = str(tmp_path / "o")
    assert _err_code(["calibrate", "--noise", str(tmp_path / "nope.wav"), "--out", out],
                     capsys) == cli.EXIT_UNREADABLE
    assert _err_code(["calibrate", "--noise", str(tmp_path / "short.wav"), "--out", out],
                     capsys) == cli.EXIT_TOO_SHORT
    assert _err_code(["calibrate", "--noise", str(tmp_path / "mono.wav"), "--out", out],
                     capsys) == cli.EXIT_CHANNELS
    assert _err_code(["calibrate", "--noise", str(tmp_path / "m2.wav"), "--out", out,
                      "--hop", "300"], capsys) == cli.EXIT_VALUE
    assert _err_code(["enhance", "--input", str(tmp_path / "m2.wav"), "--dict", d,
                      "--out", out], capsys) == cli.EXIT_FINGERPRINT
    assert _err_code(["enhance", "--input", str(workdir / "s_mix.wav"),
                      "--dict", str(tmp_path / "bad.egnd"), "--out", out],
                     capsys) == cli.EXIT_DICT_FORMAT
    assert _err_code(["eval", "--mix", str(workdir / "s_mix.wav"),
                      "--clean", str(tmp_path / "cut.wav"),
                      "--noise", str(workdir / "s_noise.wav"), "--dict", d, "--out", out],
                     capsys) == cli.EXIT_LENGTH
    assert _err_code(["synth", "--spec", str(tmp_path / "bad.spec"), "--out-prefix", out],
                     capsys) == cli.EXIT_SPEC


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["enhance", "--bogus"])
    assert exc.value.code == cli.EXIT_USAGE
