"""Time the compiled kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--seconds 3]

Each kernel runs once per backend before timing so numba compilation (or
cache loading) is excluded. Outputs of the two backends are compared too.
"""
import argparse
import os
import time

import numpy as np

from revfeat import _kernels
from revfeat.dereverb import WpeConfig
from revfeat.dsp import FEATURE_STFT, AudioClip, hann_window, stft
from revfeat.features import normalized_acc, smoothing_kernel


def timed(func, args, repeat):
    func(*args)  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def on_backend(name, func, args, repeat):
    if name == "numpy":
        os.environ["REVFEAT_NO_NUMBA"] = "1"
    else:
        os.environ.pop("REVFEAT_NO_NUMBA", None)
    try:
        return timed(func, args, repeat)
    finally:
        os.environ.pop("REVFEAT_NO_NUMBA", None)


def cases(seconds, rng):
    x = rng.standard_normal(int(seconds * 24000))
    spec = stft(AudioClip(x, 24000)).values
    frames = np.fft.irfft(spec, n=FEATURE_STFT.fft_len, axis=-1)
    cfg = WpeConfig()
    sq = normalized_acc(AudioClip(x, 24000)) ** 2
    return {
        "overlap_add": (_kernels.overlap_add, (frames, hann_window(512), 150, 1e-8)),
        "wpe_bins": (
            lambda s: _kernels.wpe_bins(s, cfg.taps, cfg.delay, cfg.iterations,
                                        cfg.regularization, cfg.power_floor)[0],
            (spec,),
        ),
        "smooth_pool_lags": (_kernels.smooth_pool_lags, (sq, smoothing_kernel(), 512, 4)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seconds", type=float, default=3.0, help="input length in seconds")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    print(f"{'kernel':<18} {'numba_ms':>10} {'numpy_ms':>10} {'speedup':>8} {'max_abs_diff':>13}")
    for name, (func, fargs) in cases(args.seconds, np.random.default_rng(args.seed)).items():
        t_fast, a = on_backend("numba", func, fargs, args.repeat)
        t_slow, b = on_backend("numpy", func, fargs, args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:<18} {t_fast * 1e3:10.2f} {t_slow * 1e3:10.2f} {t_slow / t_fast:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
