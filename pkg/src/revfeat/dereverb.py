"""Single-channel WPE dereverberation and the direct/reverberant split."""
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .dsp import FEATURE_STFT, AudioClip, ComplexSpectrogram, istft, stft


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 60
    delay: int = 5
    iterations: int = 5
    regularization: float = 1e-6
    power_floor: float = 1e-10

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ValueError(
                f"taps, delay and iterations must be >= 1, got "
                f"{self.taps}/{self.delay}/{self.iterations}"
            )

    def as_dict(self):
        return asdict(self)


@dataclass
class DirectReverbPair:
    direct: AudioClip
    reverberant: AudioClip
    source_len: int


def wpe(spec, cfg=WpeConfig()):
    """Dereverberate a one-channel spectrogram, bin by bin.

    Each bin is filtered with a ``cfg.taps``-tap delayed linear predictor whose
    weights come from a variance-normalised least-squares fit, re-estimated
    ``cfg.iterations`` times. Diagonal loading is ``regularization * trace / taps``.
    """
    values = spec.values
    if values.shape[0] <= cfg.delay + cfg.taps:
        raise ValueError(
            f"WPE needs more than delay + taps = {cfg.delay + cfg.taps} frames, "
            f"got {values.shape[0]}"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("WPE input contains non-finite values")
    out, status = _kernels.wpe_bins(
        values, cfg.taps, cfg.delay, cfg.iterations, cfg.regularization, cfg.power_floor
    )
    failed = np.flatnonzero(status >= 2)
    if failed.size:
        raise np.linalg.LinAlgError(
            f"WPE normal equations not positive definite in {failed.size} bin(s), "
            f"first at bin {failed[0]}"
        )
    return ComplexSpectrogram(out, spec.config, spec.sample_rate)


def split_direct_reverb(w_channel, stft_cfg=FEATURE_STFT, wpe_cfg=WpeConfig()):
    """Split a mono clip into WPE-estimated direct sound and the remainder.

    ``direct + reverberant`` reproduces the input exactly.
    """
    if w_channel.channels != 1:
        raise ValueError(f"expected a mono clip, got {w_channel.channels} channels")
    x = w_channel.samples[0]
    if x.size < stft_cfg.win_len:
        raise ValueError(f"clip of {x.size} samples is shorter than the window ({stft_cfg.win_len})")
    d = istft(wpe(stft(w_channel, stft_cfg), wpe_cfg)).samples[0]
    direct = np.zeros_like(x)
    n = min(d.size, x.size)
    direct[:n] = d[:n]
    reverberant = x - direct
    sr = w_channel.sample_rate
    return DirectReverbPair(AudioClip(direct, sr), AudioClip(reverberant, sr), x.size)
