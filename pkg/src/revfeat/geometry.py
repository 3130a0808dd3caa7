"""Direct path and floor reflection for a source and microphone above a flat floor."""
from dataclasses import dataclass

import numpy as np

SPEED_OF_SOUND = 343.0

TABLE_DISTANCES = (1.0, 1.5, 2.0, 2.5, 3.0)
TABLE_HEIGHTS = ((1.5, 1.5), (0.9, 1.5))


@dataclass(frozen=True)
class SceneGeometry:
    distance_d: float  # horizontal source-mic separation, m
    h_s: float
    h_m: float
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        for name in ("distance_d", "h_s", "h_m", "c"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")

    @property
    def direct_path(self):
        return float(np.hypot(self.distance_d, self.h_s - self.h_m))

    @property
    def reflection_path(self):
        # image source mirrored below the floor
        return float(np.hypot(self.distance_d, self.h_s + self.h_m))


def direct_delay(g):
    return g.direct_path / g.c


def first_reflection_delay(g):
    return g.reflection_path / g.c


def itdg(g):
    return first_reflection_delay(g) - direct_delay(g)


@dataclass(frozen=True)
class ItdgRow:
    distance: float
    h_s: float
    h_m: float
    direct_ms: float
    reflection_ms: float
    itdg_ms: float

    def as_dict(self):
        return {
            "distance_m": self.distance,
            "h_s_m": self.h_s,
            "h_m_m": self.h_m,
            "direct_ms": self.direct_ms,
            "first_reflection_ms": self.reflection_ms,
            "itdg_ms": self.itdg_ms,
        }


def _ms(seconds):
    return round(seconds * 1000.0, 1)


def itdg_table(distances=TABLE_DISTANCES, heights=TABLE_HEIGHTS, c=SPEED_OF_SOUND):
    """Rows of (direct, first reflection, ITDG) in ms rounded to 0.1 ms.

    Rounding is applied per column on the full-precision delays, so ITDG is
    not necessarily the difference of the two rounded columns.
    """
    distances, heights = list(distances), list(heights)
    if not distances or not heights:
        raise ValueError("need at least one distance and one height pair")
    rows = []
    for h_s, h_m in heights:
        for d in distances:
            g = SceneGeometry(d, h_s, h_m, c)
            rows.append(
                ItdgRow(d, h_s, h_m, _ms(direct_delay(g)), _ms(first_reflection_delay(g)), _ms(itdg(g)))
            )
    return rows


def format_itdg_table(rows):
    header = f"{'dist_m':>7} {'h_s_m':>6} {'h_m_m':>6} {'direct_ms':>10} {'1stref_ms':>10} {'itdg_ms':>8}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.distance:7.2f} {r.h_s:6.2f} {r.h_m:6.2f} {r.direct_ms:10.1f} "
            f"{r.reflection_ms:10.1f} {r.itdg_ms:8.1f}"
        )
    return "\n".join(lines)
