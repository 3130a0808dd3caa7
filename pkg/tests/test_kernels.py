import runpy
from pathlib import Path

import numpy as np
import pytest

from revfeat import _kernels
from revfeat._accel import HAVE_NUMBA, backend_name, numba_enabled
from revfeat.dsp import hann_window

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def both(monkeypatch, func, *args):
    monkeypatch.delenv("REVFEAT_NO_NUMBA", raising=False)
    fast = func(*args)
    monkeypatch.setenv("REVFEAT_NO_NUMBA", "1")
    slow = func(*args)
    monkeypatch.delenv("REVFEAT_NO_NUMBA")
    return fast, slow


def wpe_reference(x, taps, delay, iterations, reg, floor):
    """Per-bin WPE written straight from the normal equations."""
    n = x.size
    tilde = np.zeros((n, taps), complex)
    for k in range(taps):
        tilde[delay + k :, k] = x[: n - delay - k]
    d = x.copy()
    for _ in range(iterations):
        lam = np.maximum(np.abs(d) ** 2, floor)
        r = (tilde.T / lam) @ tilde.conj()
        p = (tilde.T / lam) @ x.conj()
        g = np.linalg.solve(r + reg * np.trace(r).real / taps * np.eye(taps), p)
        d = x - tilde @ g.conj()
    return d


def test_env_flag(monkeypatch):
    monkeypatch.setenv("REVFEAT_NO_NUMBA", "1")
    assert not numba_enabled() and backend_name() == "numpy"
    monkeypatch.setenv("REVFEAT_NO_NUMBA", "0")
    assert numba_enabled() and backend_name() == "numba"


def test_overlap_add_agree(monkeypatch, rng):
    frames = rng.standard_normal((50, 512))
    fast, slow = both(monkeypatch, _kernels.overlap_add, frames, hann_window(512), 150, 1e-8)
    assert fast.shape == (49 * 150 + 512,)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12)


class TestWpeBins:
    def spec(self, rng, n_frames=120, n_bins=5):
        return rng.standard_normal((n_frames, n_bins)) + 1j * rng.standard_normal((n_frames, n_bins))

    def test_backends_agree(self, monkeypatch, rng):
        x = self.spec(rng, n_bins=40)
        (a, sa), (b, sb) = both(monkeypatch, _kernels.wpe_bins, x, 8, 3, 3, 1e-6, 1e-10)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-10)
        assert not sa.any() and not sb.any()

    def test_matches_reference(self, monkeypatch, rng):
        x = self.spec(rng)
        fast, slow = both(monkeypatch, _kernels.wpe_bins, x, 6, 2, 4, 1e-6, 1e-10)
        for f in range(x.shape[1]):
            ref = wpe_reference(x[:, f], 6, 2, 4, 1e-6, 1e-10)
            np.testing.assert_allclose(fast[0][:, f], ref, rtol=1e-8, atol=1e-10)
            np.testing.assert_allclose(slow[0][:, f], ref, rtol=1e-8, atol=1e-10)

    def test_zero_bin_passes_through(self, monkeypatch, rng):
        x = self.spec(rng)
        x[:, 2] = 0
        for out, status in both(monkeypatch, _kernels.wpe_bins, x, 6, 2, 2, 1e-6, 1e-10):
            assert not np.any(out[:, 2]) and status[2] == 0

    def test_cholesky_solve(self, rng):
        m = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
        a = m @ m.conj().T + 0.1 * np.eye(7)
        b = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        x, ok = _kernels._cholesky_solve(a, b)
        assert ok
        np.testing.assert_allclose(a @ x, b, atol=1e-10)

    def test_cholesky_reports_indefinite(self):
        _, ok = _kernels._cholesky_solve(-np.eye(3, dtype=complex), np.ones(3, complex))
        assert not ok


class TestSmoothPool:
    def test_backends_agree(self, monkeypatch, rng):
        sq = rng.random((30, 1024))
        k = hann_window(8) / hann_window(8).sum()
        fast, slow = both(monkeypatch, _kernels.smooth_pool_lags, sq, k, 512, 4)
        assert fast.shape == (30, 128)
        np.testing.assert_allclose(fast, slow, rtol=1e-12)

    def test_against_circular_convolution(self, rng):
        sq = rng.random((3, 64))
        k = rng.random(8)
        out = _kernels.smooth_pool_lags(sq, k, 32, 4)
        # centred circular convolution via a padded full convolution
        ext = np.concatenate([sq[:, -8:], sq, sq[:, :8]], axis=1)
        full = np.stack([np.convolve(row, k) for row in ext])
        smoothed = full[:, 8 + 4 : 8 + 4 + 64]
        want = smoothed[:, 1:33].reshape(3, 8, 4).mean(axis=2)
        np.testing.assert_allclose(out, want, rtol=1e-12)

    def test_bad_pool(self):
        with pytest.raises(ValueError):
            _kernels.smooth_pool_lags(np.ones((1, 16)), np.ones(2), 10, 4)


def test_benchmark_smoke(capsys):
    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    bench["main"](["--repeat", "1", "--seconds", "0.6"])
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in lines[1:]] == ["overlap_add", "wpe_bins", "smooth_pool_lags"]
