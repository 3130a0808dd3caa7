import numpy as np
import pytest

from revfeat.dsp import AudioClip

SR = 24000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numpy":
        monkeypatch.setenv("REVFEAT_NO_NUMBA", "1")
    else:
        monkeypatch.delenv("REVFEAT_NO_NUMBA", raising=False)
    return request.param


def mono(x, sr=SR):
    return AudioClip(np.asarray(x, dtype=np.float64), sr)


def plane_wave(signal, azimuth, elevation, sr=SR):
    """FOA encoding of a mono signal from (azimuth, elevation) in degrees, W unscaled."""
    az, el = np.radians(azimuth), np.radians(elevation)
    gains = np.array([1.0, np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return AudioClip(gains[:, None] * np.asarray(signal)[None, :], sr)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``; ``ok=None`` marks a skip."""

    def record(number, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {number}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
