"""Model input features: log-mel, intensity vectors, DRR, D+R and stpACC."""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dereverb import WpeConfig, split_direct_reverb
from .dsp import (
    FEATURE_STFT,
    POWER_FLOOR,
    STPACC_STFT,
    AudioClip,
    apply_mel,
    hann_window,
    log_power,
    mel_filterbank,
    stft,
)

N_MELS = 128
SAMPLE_RATE = 24000
IV_FLOOR = 1e-10
ACC_FLOOR = 1e-10
STPACC_SMOOTH_LEN = 8
STPACC_LAGS = 512
STPACC_POOL = 4

MODES = ("none", "drr", "d_plus_r", "stpacc")
_DISTANCE_CHANNELS = {
    "none": (),
    "drr": ("drr",),
    "d_plus_r": ("logmel_direct", "logmel_reverb"),
    "stpacc": ("stpacc",),
}
BASE_CHANNELS = ("logmel_w", "logmel_x", "logmel_y", "logmel_z", "iv_x", "iv_y", "iv_z")


@dataclass
class FeatureStack:
    data: np.ndarray  # (C, T, K) float
    channel_names: list
    mode: str
    frame_rate: float
    bin_semantics: list = field(default_factory=list)  # per channel: "mel" or "lag"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.data.ndim != 3 or self.data.shape[0] != len(self.channel_names):
            raise ValueError(
                f"data shape {self.data.shape} does not match {len(self.channel_names)} channel names"
            )
        if not self.bin_semantics:
            self.bin_semantics = ["lag" if n == "stpacc" else "mel" for n in self.channel_names]

    @property
    def shape(self):
        return self.data.shape


@dataclass
class PsdPair:
    p_direct: np.ndarray
    p_reverb: np.ndarray
    epsilon: float = POWER_FLOOR


def default_filterbank(sample_rate=SAMPLE_RATE, fft_len=FEATURE_STFT.fft_len):
    return mel_filterbank(N_MELS, fft_len, sample_rate, 0.0, sample_rate / 2.0)


def _logmel(samples, sample_rate, cfg, fb):
    power = stft(AudioClip(samples, sample_rate), cfg).power()
    return log_power(apply_mel(power, fb))


def logmel_foa(foa, cfg=FEATURE_STFT, fb=None):
    if foa.channels != 4:
        raise ValueError(f"FOA audio needs 4 channels (W, X, Y, Z), got {foa.channels}")
    fb = fb or default_filterbank(foa.sample_rate, cfg.fft_len)
    return np.stack([_logmel(ch, foa.sample_rate, cfg, fb) for ch in foa.samples])


def foa_spectrograms(foa, cfg=FEATURE_STFT):
    if foa.channels != 4:
        raise ValueError(f"FOA audio needs 4 channels (W, X, Y, Z), got {foa.channels}")
    return [stft(foa.channel(i), cfg) for i in range(4)]


def intensity_vectors(foa_spec, fb=None):
    """Unit-norm active intensity, averaged inside each mel band.

    ``foa_spec`` is the list of W, X, Y, Z spectrograms. Returns ``(3, T, n_mels)``
    with values in ``[-1, 1]``.
    """
    if len(foa_spec) != 4:
        raise ValueError(f"need 4 spectrograms (W, X, Y, Z), got {len(foa_spec)}")
    w, *xyz = [s.values for s in foa_spec]
    if any(a.shape != w.shape for a in xyz):
        raise ValueError("W, X, Y, Z spectrogram shapes differ")
    fb = fb or default_filterbank(foa_spec[0].sample_rate, foa_spec[0].config.fft_len)
    iv = np.stack([np.real(np.conj(w) * a) for a in xyz])
    iv /= np.sqrt(np.sum(iv**2, axis=0)) + IV_FLOOR
    return apply_mel(iv, fb) / fb.row_sums


def psd_pair(pair, cfg=FEATURE_STFT):
    p_d = stft(pair.direct, cfg).power()
    p_r = stft(pair.reverberant, cfg).power()
    return PsdPair(np.maximum(p_d, POWER_FLOOR), np.maximum(p_r, POWER_FLOOR))


def drr_features(pair, cfg=FEATURE_STFT, fb=None):
    """Mel-domain direct-to-reverberant ratio in dB, shape ``(1, T, n_mels)``.

    The ratio is formed per STFT bin (both PSDs clamped at 1e-10) and then
    summed through the mel filters, so a constant ratio ``r`` yields
    ``10*log10(r * row_sum)``.
    """
    fb = fb or default_filterbank(pair.direct.sample_rate, cfg.fft_len)
    psd = psd_pair(pair, cfg)
    return log_power(apply_mel(psd.p_direct / psd.p_reverb, fb))[None]


def d_plus_r_features(pair, cfg=FEATURE_STFT, fb=None):
    fb = fb or default_filterbank(pair.direct.sample_rate, cfg.fft_len)
    sr = pair.direct.sample_rate
    return np.stack(
        [
            _logmel(pair.direct.samples[0], sr, cfg, fb),
            _logmel(pair.reverberant.samples[0], sr, cfg, fb),
        ]
    )


def normalized_acc(w_channel, cfg=STPACC_STFT):
    """Per-frame circular autocorrelation over ``fft_len`` lags, scaled so
    that the largest magnitude in each frame is 1 (lag 0 for non-silent frames)."""
    spec = stft(w_channel, cfg)
    acc = np.fft.irfft(spec.power(), n=cfg.fft_len, axis=-1)
    peak = np.maximum(np.max(np.abs(acc), axis=-1, keepdims=True), ACC_FLOOR)
    return acc / peak


def smoothing_kernel(n=STPACC_SMOOTH_LEN):
    w = hann_window(n)
    return w / w.sum()


def stpacc_features(w_channel, cfg=STPACC_STFT):
    """Short-term power of the autocorrelation, shape ``(1, T, 128)``.

    Normalised ACC is squared, smoothed over lag with a unit-sum 8-point Hann
    window, cut to lags 1..512 and mean-pooled in groups of 4.
    """
    if w_channel.channels != 1:
        raise ValueError(f"expected a mono clip, got {w_channel.channels} channels")
    if cfg.fft_len < 2 * STPACC_LAGS:
        raise ValueError(f"fft_len must be >= {2 * STPACC_LAGS} to hold {STPACC_LAGS} positive lags")
    sq = normalized_acc(w_channel, cfg) ** 2
    pooled = _kernels.smooth_pool_lags(sq, smoothing_kernel(), STPACC_LAGS, STPACC_POOL)
    return pooled[None]


def feature_metadata(mode, wpe_cfg=None, sample_rate=SAMPLE_RATE):
    meta = {
        "mode": mode,
        "sample_rate": sample_rate,
        "stft": {"win_len": FEATURE_STFT.win_len, "fft_len": FEATURE_STFT.fft_len,
                 "hop": FEATURE_STFT.hop, "window": "hann-periodic", "framing": "tail-padded"},
        "mel": {"scale": "htk", "n_mels": N_MELS, "f_min": 0.0, "f_max": sample_rate / 2.0,
                "norm": "peak", "min_half_width_bins": 1},
        "power_floor": POWER_FLOOR,
        "iv": {"normalization": "per-bin unit norm then mel-weighted mean", "floor": IV_FLOOR},
    }
    if mode in ("drr", "d_plus_r"):
        meta["wpe"] = (wpe_cfg or WpeConfig()).as_dict()
        meta["wpe"]["stft"] = "same as features"
    if mode == "stpacc":
        meta["stpacc"] = {"win_len": STPACC_STFT.win_len, "fft_len": STPACC_STFT.fft_len,
                          "hop": STPACC_STFT.hop, "smoothing": "unit-sum hann-8 centred, circular",
                          "order": "normalize-square-smooth", "lags": STPACC_LAGS,
                          "pool": "mean-4", "acc_floor": ACC_FLOOR}
    return meta


def stack_features(foa, mode, wpe_cfg=None, pair=None):
    """Stack ``[logmel W X Y Z, IV x y z, distance channels]`` for ``mode``.

    ``pair`` lets callers pass a direct/reverberant split computed on a longer
    recording (WPE fits better over many frames); it must cover exactly this
    clip. Values are returned as float32.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if foa.channels != 4:
        raise ValueError(f"FOA audio needs 4 channels (W, X, Y, Z), got {foa.channels}")
    if foa.sample_rate != SAMPLE_RATE:
        raise ValueError(f"features are defined for {SAMPLE_RATE} Hz audio, got {foa.sample_rate}")
    fb = default_filterbank()
    specs = foa_spectrograms(foa)
    logmel = np.stack([log_power(apply_mel(s.power(), fb)) for s in specs])
    parts = [logmel, intensity_vectors(specs, fb)]
    w = foa.channel(0)
    if mode in ("drr", "d_plus_r"):
        if pair is None:
            pair = split_direct_reverb(w, FEATURE_STFT, wpe_cfg or WpeConfig())
        elif pair.source_len != foa.length:
            raise ValueError(f"direct/reverb split covers {pair.source_len} samples, clip has {foa.length}")
        parts.append(drr_features(pair, fb=fb) if mode == "drr" else d_plus_r_features(pair, fb=fb))
    elif mode == "stpacc":
        parts.append(stpacc_features(w))
    data = np.concatenate(parts, axis=0).astype(np.float32)
    names = list(BASE_CHANNELS) + list(_DISTANCE_CHANNELS[mode])
    return FeatureStack(
        data=data,
        channel_names=names,
        mode=mode,
        frame_rate=foa.sample_rate / FEATURE_STFT.hop,
        metadata=feature_metadata(mode, wpe_cfg, foa.sample_rate),
    )
