"""Framing, STFT/ISTFT, mel filterbank and log compression.

Conventions used throughout the package:

* periodic Hann window, ``w[i] = 0.5 * (1 - cos(2*pi*i/n))``
* frames start at ``t * hop`` (no centre padding); the tail is zero-padded by
  ``win_len`` samples so ``T = L // hop`` frames are always defined
* spectrogram values are stored ``(T, F)`` with ``F = fft_len // 2 + 1``
* HTK mel scale ``2595 * log10(1 + f / 700)``
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

POWER_FLOOR = 1e-10
WINDOW_SUM_FLOOR = 1e-8


@dataclass
class AudioClip:
    """Multichannel waveform, ``samples`` shaped ``(channels, length)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self):
        return self.samples.shape[0]

    @property
    def length(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.length / self.sample_rate

    def channel(self, index):
        """Mono clip holding one channel."""
        return AudioClip(self.samples[index], self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    win_len: int = 512
    fft_len: int = 512
    hop: int = 150
    window: str = "hann"

    def __post_init__(self):
        if not (self.fft_len >= self.win_len > self.hop > 0):
            raise ValueError(
                f"need fft_len >= win_len > hop > 0, got "
                f"fft_len={self.fft_len} win_len={self.win_len} hop={self.hop}"
            )
        if self.window != "hann":
            raise ValueError(f"only the periodic Hann window is supported, got {self.window!r}")

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1

    def n_frames(self, length):
        return length // self.hop


FEATURE_STFT = StftConfig(512, 512, 150)
STPACC_STFT = StftConfig(1014, 1024, 150)


@dataclass
class ComplexSpectrogram:
    values: np.ndarray  # (T, F) complex
    config: StftConfig
    sample_rate: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2 or self.values.shape[1] != self.config.n_bins:
            raise ValueError(
                f"spectrogram shape {self.values.shape} does not match "
                f"{self.config.n_bins} one-sided bins"
            )

    @property
    def n_frames(self):
        return self.values.shape[0]

    def power(self):
        return self.values.real**2 + self.values.imag**2


@dataclass
class MelFilterbank:
    weights: np.ndarray  # (n_mels, F)
    n_mels: int
    f_min: float
    f_max: float
    centers: np.ndarray = field(repr=False)

    @property
    def row_sums(self):
        return self.weights.sum(axis=1)


def hann_window(n):
    """Periodic Hann window of ``n`` samples."""
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    i = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * i / n))


def _as_mono(clip):
    if isinstance(clip, AudioClip):
        if clip.channels != 1:
            raise ValueError(f"expected a mono clip, got {clip.channels} channels")
        return clip.samples[0], clip.sample_rate
    raise TypeError("expected an AudioClip")


def frame_signal(x, cfg):
    """Windowed frames ``(T, win_len)`` following the tail-padding rule."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("need a non-empty 1-D signal")
    n_frames = cfg.n_frames(x.size)
    padded = np.concatenate([x, np.zeros(cfg.win_len)])
    starts = np.arange(n_frames) * cfg.hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.win_len)[starts]
    return frames * hann_window(cfg.win_len)


def stft(clip, cfg=FEATURE_STFT):
    x, sr = _as_mono(clip)
    frames = frame_signal(x, cfg)
    values = np.fft.rfft(frames, n=cfg.fft_len, axis=-1)
    return ComplexSpectrogram(values, cfg, sr)


def istft(spec):
    """Weighted overlap-add inverse of :func:`stft`.

    Output length is ``T * hop``; samples whose accumulated squared window is
    below ``1e-8`` are divided by the floor instead.
    """
    cfg = spec.config
    frames = np.fft.irfft(spec.values, n=cfg.fft_len, axis=-1)[:, : cfg.win_len]
    out = _kernels.overlap_add(frames, hann_window(cfg.win_len), cfg.hop, WINDOW_SUM_FLOOR)
    return AudioClip(out[: spec.n_frames * cfg.hop], spec.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=128, fft_len=512, sample_rate=24000, f_min=0.0, f_max=None):
    """Triangular filters on the HTK mel scale, each peak-normalised to 1.

    Filter ``k`` rises from mel point ``k`` to its centre at point ``k + 1``
    and falls to point ``k + 2`` (``n_mels + 2`` points spaced evenly in mel).
    Each side is widened to at least one FFT bin, otherwise low filters that
    are narrower than the bin spacing would contain no bin at all.
    """
    if f_max is None:
        f_max = sample_rate / 2.0
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if not (0.0 <= f_min < f_max <= sample_rate / 2.0):
        raise ValueError(
            f"need 0 <= f_min < f_max <= sample_rate/2, got f_min={f_min} f_max={f_max}"
        )
    points = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lower, centers, upper = points[:-2], points[1:-1], points[2:]
    bin_width = sample_rate / fft_len
    lower = np.minimum(lower, centers - bin_width)
    upper = np.maximum(upper, centers + bin_width)

    freqs = np.arange(fft_len // 2 + 1) * bin_width
    rising = (freqs[None, :] - lower[:, None]) / (centers - lower)[:, None]
    falling = (upper[:, None] - freqs[None, :]) / (upper - centers)[:, None]
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights /= weights.max(axis=1, keepdims=True)
    return MelFilterbank(weights, n_mels, float(f_min), float(f_max), centers)


def apply_mel(power, fb):
    power = np.asarray(power, dtype=np.float64)
    if power.shape[-1] != fb.weights.shape[1]:
        raise ValueError(
            f"power has {power.shape[-1]} frequency bins, filterbank expects {fb.weights.shape[1]}"
        )
    return power @ fb.weights.T


def log_power(x):
    return 10.0 * np.log10(np.maximum(x, POWER_FLOOR))
