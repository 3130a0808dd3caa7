"""Parametric room impulse responses and the oracles used to validate features.

The impulse response is a direct impulse, a floor-reflection impulse from
the image source below the floor, and an optional exponentially decaying
noise tail. Amplitudes follow the inverse-distance law.
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .dereverb import split_direct_reverb
from .dsp import AudioClip
from .features import STPACC_POOL, FeatureStack, drr_features, stpacc_features
from .geometry import SceneGeometry, direct_delay, first_reflection_delay, itdg

DEFAULT_SPLIT = 2.5e-3
LATE_ENERGY_FLOOR = 1e-12


@dataclass(frozen=True)
class TailParams:
    t60: float
    level: float
    seed: int = 0
    start: float | None = None  # seconds; None = 1 ms after the floor reflection

    def __post_init__(self):
        if self.t60 <= 0:
            raise ValueError(f"t60 must be positive, got {self.t60}")
        if self.level < 0:
            raise ValueError(f"tail level must be >= 0, got {self.level}")


@dataclass(frozen=True)
class SyntheticRIR:
    sample_rate: int
    direct: tuple  # (delay s, amplitude)
    floor_reflection: tuple  # (delay s, amplitude)
    tail: TailParams | None
    length: int
    direct_index: int
    reflection_index: int
    tail_start_index: int | None = None


def _tail(length, start, sample_rate, params):
    rng = np.random.default_rng(params.seed)
    n = length - start
    t = np.arange(n) / sample_rate
    # energy envelope 10^(-6 t / T60) -> amplitude 10^(-3 t / T60)
    return params.level * rng.standard_normal(n) * 10.0 ** (-3.0 * t / params.t60)


def make_rir(g, beta=0.7, tail=None, sample_rate=24000, length=None):
    """Build the impulse response for geometry ``g``.

    Returns ``(SyntheticRIR, samples)``. ``length`` defaults to 0.5 s without a
    tail and ``1.5 * T60`` with one.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    t_dir, t_ref = direct_delay(g), first_reflection_delay(g)
    i_dir, i_ref = int(round(t_dir * sample_rate)), int(round(t_ref * sample_rate))
    if length is None:
        length = int(np.ceil((1.5 * tail.t60 if tail else 0.5) * sample_rate))
    if length <= i_ref:
        raise ValueError(
            f"length {length} too short for a reflection at sample {i_ref}"
        )
    a_dir = 1.0 / g.direct_path
    a_ref = beta / g.reflection_path
    h = np.zeros(length)
    h[i_dir] += a_dir
    h[i_ref] += a_ref
    i_tail = None
    if tail is not None:
        start = tail.start if tail.start is not None else t_ref + 1e-3
        i_tail = int(round(start * sample_rate))
        if not 0 <= i_tail < length:
            raise ValueError(f"tail start {start} s lies outside the response")
        h[i_tail:] += _tail(length, i_tail, sample_rate, tail)
    info = SyntheticRIR(
        sample_rate=sample_rate,
        direct=(t_dir, a_dir),
        floor_reflection=(t_ref, a_ref),
        tail=tail,
        length=length,
        direct_index=i_dir,
        reflection_index=i_ref,
        tail_start_index=i_tail,
    )
    return info, h


def spatialize(dry, rir, rir_sample_rate=None):
    """Convolve a mono clip with an impulse response, keeping ``len(dry)`` samples."""
    if rir_sample_rate is not None and rir_sample_rate != dry.sample_rate:
        raise ValueError(
            f"sample rate mismatch: clip {dry.sample_rate} Hz, RIR {rir_sample_rate} Hz"
        )
    if dry.channels != 1:
        raise ValueError(f"expected a mono clip, got {dry.channels} channels")
    x = dry.samples[0]
    wet = fftconvolve(x, np.asarray(rir, dtype=np.float64))[: x.size]
    return AudioClip(wet, dry.sample_rate)


def split_rir(rir, split=DEFAULT_SPLIT, sample_rate=24000):
    """Split an impulse response into the part within ``split`` seconds of its
    largest-magnitude sample and everything else."""
    rir = np.asarray(rir, dtype=np.float64)
    if not np.any(rir):
        raise ValueError("impulse response is all zeros")
    peak = int(np.argmax(np.abs(rir)))
    half = int(round(split * sample_rate))
    early = np.zeros_like(rir)
    lo, hi = max(peak - half, 0), min(peak + half + 1, rir.size)
    early[lo:hi] = rir[lo:hi]
    return early, rir - early


def true_drr(rir, split=DEFAULT_SPLIT, sample_rate=24000):
    early, late = split_rir(rir, split, sample_rate)
    e_late = max(float(np.sum(late**2)), LATE_ENERGY_FLOOR)
    return 10.0 * np.log10(float(np.sum(early**2)) / e_late)


def measured_drr(signal, dry, rir, split=DEFAULT_SPLIT):
    """DRR of ``signal`` against the known direct component ``dry * early(rir)``.

    Everything in ``signal`` that is not that reference direct component counts
    as reverberation, so ``measured_drr(dry * rir, ...)`` equals the clip-level
    DRR of the raw mixture.
    """
    sr = dry.sample_rate
    early, _ = split_rir(rir, split, sr)
    reference = spatialize(dry, early).samples[0]
    s = signal.samples[0] if isinstance(signal, AudioClip) else np.asarray(signal)
    residual = s - reference
    return 10.0 * np.log10(np.sum(reference**2) / max(np.sum(residual**2), LATE_ENERGY_FLOOR))


def excitation(duration=3.0, sample_rate=24000, seed=0, burst=0.2, tilt=0.3, level=0.1):
    """Seeded broadband stand-in for speech: noise bursts alternating on/off
    every ``burst`` seconds with a gentle low-pass tilt (one-pole, coefficient
    ``tilt``)."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    noise = lfilter([1.0], [1.0, -tilt], rng.standard_normal(n))
    gate = (np.arange(n) // int(round(burst * sample_rate))) % 2 == 0
    x = noise * gate
    return AudioClip(level * x / np.max(np.abs(x)), sample_rate)


@dataclass(frozen=True)
class ReflectionLag:
    index: int | None  # pooled-lag bin, None when no reflection stands out
    seconds: float | None
    peak: float
    profile: np.ndarray

    @property
    def found(self):
        return self.index is not None


def _local_baseline(profile, idx, radius=8):
    lo, hi = max(1, idx - radius), min(profile.size, idx + radius + 1)
    around = [profile[j] for j in range(lo, hi) if abs(j - idx) > 1]
    return float(np.median(around)) if around else 0.0


def dominant_reflection_lag(stack, frames=None, sample_rate=24000, prominence=3.0):
    """Read the strongest reflection lag from a frame-averaged stpACC channel.

    The first pooled bin (lags 1-4) is skipped. The peak must exceed
    ``prominence`` times the median of the bins within 8 of it (its direct
    neighbours excluded); otherwise the result has ``index=None``, meaning
    no reflection. The short-lag noise floor of a windowed autocorrelation
    slopes downwards, so a local baseline is used rather than a global one.
    """
    if stack.mode != "stpacc":
        raise ValueError(f"need an stpacc feature stack, got mode {stack.mode!r}")
    channel = stack.data[stack.channel_names.index("stpacc")]
    all_frames = np.arange(channel.shape[0])
    if frames is None:
        frames = all_frames
    elif isinstance(frames, slice):
        frames = all_frames[frames]
    else:
        frames = np.asarray(list(frames), dtype=int)
    if frames.size == 0:
        raise ValueError("empty frame range")
    profile = channel[frames].mean(axis=0)
    idx = int(np.argmax(profile[1:])) + 1
    peak = float(profile[idx])
    if not peak > prominence * _local_baseline(profile, idx):
        return ReflectionLag(None, None, peak, profile)
    seconds = (STPACC_POOL * idx + 2.5) / sample_rate
    return ReflectionLag(idx, seconds, peak, profile)


# --------------------------------------------------------------------------
# room-derived tail parameters and distance sweeps


def critical_distance(volume, t60):
    """Sabine critical distance in metres (direct energy == diffuse energy)."""
    absorption = 0.161 * volume / t60
    return float(np.sqrt(absorption / (16.0 * np.pi)))


def mixing_time(volume):
    """Onset of the diffuse tail after the direct sound, ``sqrt(V)`` ms."""
    return float(np.sqrt(volume)) * 1e-3


def room_tail(volume, t60, seed=0, sample_rate=24000):
    """Tail amplitude such that its energy matches a unit direct impulse at the
    critical distance. ``start`` is left as None; :func:`sweep` places it one
    mixing time after the direct sound."""
    n = int(np.ceil(1.5 * t60 * sample_rate))
    envelope_energy = np.sum(10.0 ** (-6.0 * np.arange(n) / sample_rate / t60))
    rc = critical_distance(volume, t60)
    return TailParams(t60=t60, level=float(1.0 / (rc * np.sqrt(envelope_energy))), seed=seed)


def active_frames(dry, hop=150):
    """Boolean mask of feature frames whose hop-length span holds source signal."""
    x = dry.samples[0]
    n = x.size // hop
    return np.any(x[: n * hop].reshape(n, hop) != 0.0, axis=1)


@dataclass
class SweepRow:
    distance: float
    h_s: float
    h_m: float
    itdg_ms: float
    measured_lag_ms: float | None
    true_drr_db: float | None
    mean_drr_feature_db: float | None

    def as_dict(self):
        return {
            "distance_m": self.distance,
            "h_s_m": self.h_s,
            "h_m_m": self.h_m,
            "true_itdg_ms": self.itdg_ms,
            "measured_lag_ms": self.measured_lag_ms,
            "true_drr_db": self.true_drr_db,
            "mean_drr_feature_db": self.mean_drr_feature_db,
        }


def scene_clip(g, beta=0.7, t60=None, volume=200.0, duration=3.0, seed=0, sample_rate=24000):
    """Dry excitation, impulse response and wet clip for one geometry."""
    dry = excitation(duration, sample_rate, seed=seed)
    tail = None
    if t60 is not None:
        base = room_tail(volume, t60, seed=seed + 1, sample_rate=sample_rate)
        tail = TailParams(base.t60, base.level, base.seed, direct_delay(g) + mixing_time(volume))
    info, h = make_rir(g, beta, tail, sample_rate)
    return dry, info, h, spatialize(dry, h)


def sweep(distances, h_s=1.5, h_m=1.5, beta=0.7, t60=None, volume=200.0, duration=3.0,
          seed=0, frames=None, with_drr=True):
    """One report row per distance: ITDG vs stpACC lag, true DRR and mean DRR feature.

    The DRR feature mean is taken over frames where the dry source is active.
    """
    rows = []
    for d in distances:
        g = SceneGeometry(d, h_s, h_m)
        dry, info, h, wet = scene_clip(g, beta, t60, volume, duration, seed)
        stack = FeatureStack(stpacc_features(wet), ["stpacc"], "stpacc", wet.sample_rate / 150)
        lag = dominant_reflection_lag(stack, frames, wet.sample_rate)
        mean_drr = None
        if with_drr:
            feats = drr_features(split_direct_reverb(wet))[0]
            mask = active_frames(dry)[: feats.shape[0]]
            mean_drr = float(feats[mask].mean())
        rows.append(
            SweepRow(
                d, h_s, h_m, itdg(g) * 1e3,
                None if lag.seconds is None else lag.seconds * 1e3,
                true_drr(h, sample_rate=wet.sample_rate),
                mean_drr,
            )
        )
    return rows
