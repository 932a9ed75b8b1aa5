import time

import numpy as np
import pytest

from egonoise import EnhancerConfig, calibrate
from egonoise.evalkit import SceneSpec, synthesize_calibration, synthesize_scene
from egonoise.stft import MultichannelAudio


@pytest.fixture(scope="session")
def default_spec():
    return SceneSpec()


@pytest.fixture(scope="session")
def stage_seconds():
    """Wall time of each session-scoped pipeline stage, filled on first use."""
    return {}


def _timed(store, name, fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    store[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def default_scene(default_spec, stage_seconds):
    return _timed(stage_seconds, "scene", synthesize_scene, default_spec)


@pytest.fixture(scope="session")
def default_calibration(default_spec, stage_seconds):
    return _timed(stage_seconds, "calibration_audio", synthesize_calibration, default_spec)


@pytest.fixture(scope="session")
def default_dictionary(default_calibration, stage_seconds):
    return _timed(stage_seconds, "calibrate", calibrate, default_calibration, EnhancerConfig())


@pytest.fixture(scope="session")
def small_cfg():
    return EnhancerConfig(frame_size=256, hop=64, segment_length=0.05, pca_dims=4)


@pytest.fixture(scope="session")
def small_spec():
    return SceneSpec(channels=4, duration=2.0, noise_states=3, calibration_duration=3.0,
                     dwell_min=0.3, dwell_max=0.6, seed=7)


@pytest.fixture(scope="session")
def small_calibration(small_spec):
    return synthesize_calibration(small_spec)


@pytest.fixture(scope="session")
def small_dictionary(small_calibration, small_cfg):
    return calibrate(small_calibration, small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def white(rng, channels, n, rate=32000):
    return MultichannelAudio(rng.standard_normal((channels, n)), rate)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, text = mark.args
    prev = _CRITERIA.get(number, (text, "PASS"))[1]
    status = "PASS" if rep.passed and prev == "PASS" else "FAIL"
    _CRITERIA[number] = (text, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}  {status}  {text}")
