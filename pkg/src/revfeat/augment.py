"""Audio channel swap (ACS) augmentation for FOA audio and its labels.

The eight transforms are the four right-angle azimuth rotations, each with
and without an elevation flip. All of them are exact channel permutations
and sign changes, so W is never touched.
"""
from dataclasses import dataclass, replace

import numpy as np

from .dsp import AudioClip

N_TRANSFORMS = 8


@dataclass(frozen=True)
class AcsTransform:
    id: int
    azimuth_rotation: int  # degrees, one of 0, 90, 180, 270
    elevation_flip: bool

    @classmethod
    def from_id(cls, transform_id):
        if not 0 <= transform_id < N_TRANSFORMS:
            raise ValueError(f"ACS transform id must be 0..7, got {transform_id}")
        return cls(transform_id, 90 * (transform_id % 4), transform_id >= 4)

    @property
    def channel_map(self):
        """4x4 matrix ``M`` with ``[W', X', Y', Z'] = M @ [W, X, Y, Z]``."""
        quarter = self.azimuth_rotation // 90
        cos = (1, 0, -1, 0)[quarter]
        sin = (0, 1, 0, -1)[quarter]
        z = -1 if self.elevation_flip else 1
        return np.array(
            [[1, 0, 0, 0], [0, cos, -sin, 0], [0, sin, cos, 0], [0, 0, 0, z]], dtype=np.float64
        )


ALL_TRANSFORMS = tuple(AcsTransform.from_id(i) for i in range(N_TRANSFORMS))


def acs_audio(foa, t):
    if foa.channels != 4:
        raise ValueError(f"ACS needs 4-channel FOA audio, got {foa.channels} channels")
    m = t.channel_map.astype(int)
    out = np.empty_like(foa.samples)
    # signed row selection keeps the transform bit-exact (no multiply-adds)
    for row in range(4):
        col = int(np.flatnonzero(m[row])[0])
        out[row] = foa.samples[col] if m[row, col] > 0 else -foa.samples[col]
    return AudioClip(out, foa.sample_rate)


def wrap_azimuth(az):
    """Wrap degrees into (-180, 180]."""
    wrapped = np.mod(np.asarray(az, dtype=np.float64) + 180.0, 360.0) - 180.0
    wrapped = np.where(wrapped == -180.0, 180.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def acs_labels(events, t):
    out = []
    for ev in events:
        if not (-180.0 < ev.azimuth <= 180.0) or not (-90.0 <= ev.elevation <= 90.0):
            raise ValueError(
                f"angles out of range in frame {ev.frame}: az={ev.azimuth}, el={ev.elevation}"
            )
        el = -ev.elevation if t.elevation_flip else ev.elevation
        out.append(replace(ev, azimuth=wrap_azimuth(ev.azimuth + t.azimuth_rotation), elevation=el))
    return out


def acs_expand(clip, events):
    """All eight (clip, events) variants; index 0 is the untouched input."""
    pairs = [(clip, acs_labels(events, ALL_TRANSFORMS[0]))]
    for t in ALL_TRANSFORMS[1:]:
        pairs.append((acs_audio(clip, t), acs_labels(events, t)))
    return pairs


def rotate_iv(iv, t):
    """Apply ``t`` to a ``(3, ...)`` intensity-vector array."""
    return np.tensordot(t.channel_map[1:, 1:], iv, axes=1)
