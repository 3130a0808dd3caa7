"""Hot inner loops, each with a numba and a numpy implementation.

The public wrappers (``overlap_add``, ``wpe_bins``, ``smooth_pool_lags``)
dispatch on :func:`revfeat._accel.numba_enabled` at call time. Both paths must
agree to floating-point tolerance; ``tests/test_kernels.py`` checks this.
"""
import numpy as np

from ._accel import njit, numba_enabled

# --------------------------------------------------------------------------
# overlap-add


@njit
def _overlap_add_numba(frames, window, hop, floor):
    n_frames, win_len = frames.shape
    n_out = (n_frames - 1) * hop + win_len if n_frames > 0 else 0
    out = np.zeros(n_out)
    wsum = np.zeros(n_out)
    for t in range(n_frames):
        start = t * hop
        for i in range(win_len):
            out[start + i] += frames[t, i] * window[i]
            wsum[start + i] += window[i] * window[i]
    for n in range(n_out):
        out[n] /= max(wsum[n], floor)
    return out


def _overlap_add_numpy(frames, window, hop, floor):
    n_frames, win_len = frames.shape
    n_out = (n_frames - 1) * hop + win_len if n_frames > 0 else 0
    out = np.zeros(n_out)
    wsum = np.zeros(n_out)
    sq = window * window
    for t in range(n_frames):
        sl = slice(t * hop, t * hop + win_len)
        out[sl] += frames[t] * window
        wsum[sl] += sq
    return out / np.maximum(wsum, floor)


def overlap_add(frames, window, hop, floor):
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    window = np.ascontiguousarray(window, dtype=np.float64)
    if numba_enabled():
        return _overlap_add_numba(frames, window, int(hop), float(floor))
    return _overlap_add_numpy(frames, window, int(hop), float(floor))


# --------------------------------------------------------------------------
# single-channel WPE, one frequency bin at a time


@njit
def _cholesky_solve(a, b):
    """Solve ``a @ x = b`` for Hermitian positive-definite ``a``.

    Returns ``(x, ok)``; ``ok`` is False when the factorisation breaks down.
    """
    n = a.shape[0]
    low = np.zeros((n, n), dtype=np.complex128)
    x = np.zeros(n, dtype=np.complex128)
    for j in range(n):
        s = a[j, j].real
        for k in range(j):
            s -= low[j, k].real ** 2 + low[j, k].imag ** 2
        if not (s > 0.0) or not np.isfinite(s):
            return x, False
        d = np.sqrt(s)
        low[j, j] = d
        for i in range(j + 1, n):
            acc = a[i, j]
            for k in range(j):
                acc -= low[i, k] * np.conj(low[j, k])
            low[i, j] = acc / d
    y = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= low[i, k] * y[k]
        y[i] = acc / low[i, i]
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for k in range(i + 1, n):
            acc -= np.conj(low[k, i]) * x[k]
        x[i] = acc / low[i, i].real
    return x, True


@njit
def _wpe_bins_numba(spec, taps, delay, iterations, regularization, power_floor):
    n_frames, n_bins = spec.shape
    out = np.empty_like(spec)
    status = np.zeros(n_bins, dtype=np.int64)
    tapmat = np.zeros((taps, n_frames), dtype=np.complex128)
    weighted = np.empty((taps, n_frames), dtype=np.complex128)
    lam = np.empty(n_frames)
    for f in range(n_bins):
        x = spec[:, f].copy()
        tapmat[:, :] = 0.0
        for k in range(taps):
            shift = delay + k
            for t in range(shift, n_frames):
                tapmat[k, t] = x[t - shift]
        d = x.copy()
        for _ in range(iterations):
            for t in range(n_frames):
                lam[t] = max(d[t].real ** 2 + d[t].imag ** 2, power_floor)
            for k in range(taps):
                for t in range(n_frames):
                    weighted[k, t] = tapmat[k, t] / lam[t]
            corr = weighted @ np.conj(tapmat).T
            cross = weighted @ np.conj(x)
            trace = 0.0
            for k in range(taps):
                trace += corr[k, k].real
            if trace <= 0.0:
                d[:] = x
                continue
            loading = regularization * trace / taps
            system = corr.copy()
            for k in range(taps):
                system[k, k] += loading
            g, ok = _cholesky_solve(system, cross)
            if not ok:
                status[f] = 1
                system = corr.copy()
                for k in range(taps):
                    system[k, k] += 10.0 * loading
                g, ok = _cholesky_solve(system, cross)
                if not ok:
                    status[f] = 2
                    break
            pred = np.conj(g) @ tapmat
            for t in range(n_frames):
                d[t] = x[t] - pred[t]
        out[:, f] = d
    return out, status


def _tap_matrix(block, taps, delay):
    # block: (B, T) -> (B, taps, T), row k holds x(t - delay - k)
    n_bins, n_frames = block.shape
    y = np.zeros((n_bins, taps, n_frames), dtype=np.complex128)
    for k in range(taps):
        shift = delay + k
        if shift >= n_frames:
            break
        y[:, k, shift:] = block[:, : n_frames - shift]
    return y


def _wpe_block_numpy(block, taps, delay, iterations, regularization, power_floor, status):
    x = block  # (B, T)
    y = _tap_matrix(x, taps, delay)
    yh = np.conj(y).transpose(0, 2, 1)
    d = x.copy()
    eye = np.eye(taps)
    done = np.zeros(x.shape[0], dtype=bool)
    for _ in range(iterations):
        lam = np.maximum(d.real**2 + d.imag**2, power_floor)
        weighted = y / lam[:, None, :]
        corr = weighted @ yh
        cross = (weighted @ np.conj(x)[:, :, None])[:, :, 0]
        trace = np.einsum("bkk->b", corr).real
        active = (trace > 0.0) & ~done
        g = np.zeros((x.shape[0], taps), dtype=np.complex128)
        loading = regularization * trace / taps
        for idx in np.flatnonzero(active):
            for scale, code in ((1.0, 0), (10.0, 1)):
                system = corr[idx] + scale * loading[idx] * eye
                try:
                    low = np.linalg.cholesky(system)
                except np.linalg.LinAlgError:
                    status[idx] = max(status[idx], code + 1)
                    continue
                z = np.linalg.solve(low, cross[idx])
                g[idx] = np.linalg.solve(np.conj(low).T, z)
                break
            else:
                done[idx] = True
        pred = np.einsum("bk,bkt->bt", np.conj(g), y)
        update = ~done
        d[update] = x[update] - pred[update]
    return d


def _wpe_bins_numpy(spec, taps, delay, iterations, regularization, power_floor, block=32):
    n_frames, n_bins = spec.shape
    out = np.empty_like(spec)
    status = np.zeros(n_bins, dtype=np.int64)
    bins_first = np.ascontiguousarray(spec.T)
    for start in range(0, n_bins, block):
        sl = slice(start, min(start + block, n_bins))
        out[:, sl] = _wpe_block_numpy(
            bins_first[sl], taps, delay, iterations, regularization, power_floor, status[sl]
        ).T
    return out, status


def wpe_bins(spec, taps, delay, iterations, regularization, power_floor):
    """Run WPE on every column of ``spec`` (frames x bins).

    Returns ``(dereverberated, status)`` where ``status[f]`` is 0 for a clean
    solve, 1 when the 10x loading fallback was needed and 2 when that failed
    as well.
    """
    spec = np.ascontiguousarray(spec, dtype=np.complex128)
    args = (int(taps), int(delay), int(iterations), float(regularization), float(power_floor))
    if numba_enabled():
        return _wpe_bins_numba(spec, *args)
    return _wpe_bins_numpy(spec, *args)


# --------------------------------------------------------------------------
# stpACC lag smoothing + pooling


@njit
def _smooth_pool_numba(sq_acc, kernel, n_keep, pool):
    n_frames, n_lags = sq_acc.shape
    klen = kernel.shape[0]
    half = klen // 2
    n_out = n_keep // pool
    out = np.zeros((n_frames, n_out))
    for t in range(n_frames):
        for b in range(n_out):
            acc = 0.0
            for q in range(pool):
                lag = 1 + b * pool + q
                s = 0.0
                for j in range(klen):
                    s += kernel[j] * sq_acc[t, (lag + half - j) % n_lags]
                acc += s
            out[t, b] = acc / pool
    return out


def _smooth_pool_numpy(sq_acc, kernel, n_keep, pool):
    half = kernel.size // 2
    smoothed = np.zeros_like(sq_acc)
    for j, wj in enumerate(kernel):
        if wj != 0.0:
            # np.roll(a, s)[tau] == a[tau - s]; we want a[tau + half - j]
            smoothed += wj * np.roll(sq_acc, j - half, axis=1)
    kept = smoothed[:, 1 : n_keep + 1]
    return kept.reshape(kept.shape[0], n_keep // pool, pool).mean(axis=2)


def smooth_pool_lags(sq_acc, kernel, n_keep, pool):
    """Circularly smooth each row with ``kernel`` centred at ``len // 2``,
    keep lags ``1..n_keep`` and average groups of ``pool`` lags."""
    sq_acc = np.ascontiguousarray(sq_acc, dtype=np.float64)
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    if n_keep % pool:
        raise ValueError(f"n_keep={n_keep} is not a multiple of pool={pool}")
    if numba_enabled():
        return _smooth_pool_numba(sq_acc, kernel, int(n_keep), int(pool))
    return _smooth_pool_numpy(sq_acc, kernel, int(n_keep), int(pool))
