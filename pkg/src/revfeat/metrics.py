"""3D SELD evaluation: location-dependent F-score, DOA error, relative distance
error and the aggregate SELD score, with jackknife confidence intervals.

A prediction and a reference of the same class in the same frame are paired
by minimum-total-angular-error assignment. A pair is a true positive when its
angular error is at most 20 degrees and its relative distance error is below
1; otherwise it counts once as FP and once as FN. Unpaired predictions are FP,
unpaired references FN.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import t as student_t

DOA_THRESHOLD = 20.0
RDE_THRESHOLD = 1.0
N_CLASSES = 13
SENTINEL_DOAE = 180.0
SENTINEL_RDE = 1.0
DOAE_MODES = ("matched", "tp")


@dataclass(frozen=True)
class EventRecord:
    frame: int
    class_id: int
    track_id: int
    azimuth: float  # degrees, (-180, 180]
    elevation: float  # degrees, [-90, 90]
    distance: float  # metres

    def problems(self, n_classes=N_CLASSES):
        out = []
        if not 0 <= self.class_id < n_classes:
            out.append(f"class_id {self.class_id} outside 0..{n_classes - 1}")
        if self.frame < 0:
            out.append(f"negative frame {self.frame}")
        if not -180.0 < self.azimuth <= 180.0:
            out.append(f"azimuth {self.azimuth} outside (-180, 180]")
        if not -90.0 <= self.elevation <= 90.0:
            out.append(f"elevation {self.elevation} outside [-90, 90]")
        if not (np.isfinite(self.distance) and self.distance >= 0):
            out.append(f"distance {self.distance} not finite and >= 0")
        return out


def _unit(az, el):
    az, el = np.radians(az), np.radians(el)
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def _angle(u, v):
    # atan2 of |u x v| and u.v stays accurate near 0 and 180 degrees, unlike arccos
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.degrees(np.arctan2(cross, np.sum(u * v, axis=-1)))


def angular_error(a, b):
    """Great-circle angle in degrees between two ``(azimuth, elevation)`` pairs."""
    return float(_angle(_unit(*a), _unit(*b)))


def relative_distance_error(pred, ref):
    if not ref > 0:
        raise ValueError(f"reference distance must be positive, got {ref}")
    return abs(pred - ref) / ref


def angular_cost_matrix(preds, refs):
    if not preds or not refs:
        return np.zeros((len(preds), len(refs)))
    p = _unit(np.array([e.azimuth for e in preds]), np.array([e.elevation for e in preds]))
    r = _unit(np.array([e.azimuth for e in refs]), np.array([e.elevation for e in refs]))
    return _angle(p[:, None, :], r[None, :, :])


@dataclass
class Matching:
    pairs: list  # (pred index, ref index, angular error)
    unmatched_preds: list
    unmatched_refs: list

    @property
    def total_cost(self):
        return sum(c for _, _, c in self.pairs)


def _matching_from(cost, rows, cols):
    pairs = sorted((int(i), int(j), float(cost[i, j])) for i, j in zip(rows, cols))
    used_p = {i for i, _, _ in pairs}
    used_r = {j for _, j, _ in pairs}
    return Matching(
        pairs,
        [i for i in range(cost.shape[0]) if i not in used_p],
        [j for j in range(cost.shape[1]) if j not in used_r],
    )


def match_frame_class(preds, refs):
    """Optimal one-to-one pairing of predictions and references by angle."""
    cost = angular_cost_matrix(preds, refs)
    if cost.size == 0:
        return _matching_from(cost, [], [])
    rows, cols = linear_sum_assignment(cost)
    return _matching_from(cost, rows, cols)


def match_exhaustive(preds, refs):
    """Brute-force counterpart of :func:`match_frame_class` (small inputs only)."""
    cost = angular_cost_matrix(preds, refs)
    n_p, n_r = cost.shape
    if n_p == 0 or n_r == 0:
        return _matching_from(cost, [], [])
    best, best_rows, best_cols = np.inf, None, None
    if n_p <= n_r:
        for cols in permutations(range(n_r), n_p):
            total = sum(cost[i, j] for i, j in enumerate(cols))
            if total < best:
                best, best_rows, best_cols = total, list(range(n_p)), list(cols)
    else:
        for rows in permutations(range(n_p), n_r):
            total = sum(cost[i, j] for j, i in enumerate(rows))
            if total < best:
                best, best_rows, best_cols = total, list(rows), list(range(n_r))
    return _matching_from(cost, best_rows, best_cols)


@dataclass
class ClassStats:
    """Additive per-class counters; summing them pools sequences."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_matched: int = 0
    sum_doae: float = 0.0
    sum_rde: float = 0.0
    n_tp_pairs: int = 0
    sum_doae_tp: float = 0.0
    sum_rde_tp: float = 0.0
    n_refs: int = 0
    n_preds: int = 0

    def __add__(self, other):
        return ClassStats(*(a + b for a, b in zip(self.astuple(), other.astuple())))

    def __sub__(self, other):
        return ClassStats(*(a - b for a, b in zip(self.astuple(), other.astuple())))

    def astuple(self):
        return (self.tp, self.fp, self.fn, self.n_matched, self.sum_doae, self.sum_rde,
                self.n_tp_pairs, self.sum_doae_tp, self.sum_rde_tp, self.n_refs, self.n_preds)

    @property
    def present(self):
        return self.n_refs > 0 or self.n_preds > 0


@dataclass
class SeldScores:
    f_score: float
    doae: float
    rde: float
    seld: float
    per_class: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    doae_mode: str = "matched"
    sentinel_classes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "f_score": self.f_score,
            "doae": self.doae,
            "rde": self.rde,
            "seld": self.seld,
            "doae_mode": self.doae_mode,
            "sentinel_classes": self.sentinel_classes,
            "per_class": {str(k): v for k, v in self.per_class.items()},
            "counts": {str(k): v for k, v in self.counts.items()},
        }


def seld_score(f_score, doae, rde):
    return float(np.mean([1.0 - f_score, doae / 180.0, rde]))


def _canonical(r):
    return (r.azimuth, r.elevation, r.distance, r.track_id)


def _group(records):
    # sorted groups make tie-breaks between equal angular costs independent
    # of the order records arrive in
    out = defaultdict(list)
    for r in records:
        out[(r.frame, r.class_id)].append(r)
    return {k: sorted(v, key=_canonical) for k, v in out.items()}


def _check(records, what, n_classes):
    errors = []
    for i, r in enumerate(records):
        errors += [f"{what}[{i}] (frame {r.frame}): {msg}" for msg in r.problems(n_classes)]
    if errors:
        raise ValueError("malformed records:\n  " + "\n  ".join(errors))


def class_stats(preds, refs, n_classes=N_CLASSES, matcher=match_frame_class,
                doa_threshold=DOA_THRESHOLD, rde_threshold=RDE_THRESHOLD):
    """Per-class counters for one sequence."""
    _check(preds, "pred", n_classes)
    _check(refs, "ref", n_classes)
    for r in refs:
        if not r.distance > 0:
            raise ValueError(f"reference at frame {r.frame} has non-positive distance {r.distance}")
    stats = defaultdict(ClassStats)
    pred_groups, ref_groups = _group(preds), _group(refs)
    for key in set(pred_groups) | set(ref_groups):
        ps, rs = pred_groups.get(key, []), ref_groups.get(key, [])
        st = stats[key[1]]
        st.n_preds += len(ps)
        st.n_refs += len(rs)
        m = matcher(ps, rs)
        st.fp += len(m.unmatched_preds)
        st.fn += len(m.unmatched_refs)
        for i, j, ang in m.pairs:
            rde = relative_distance_error(ps[i].distance, rs[j].distance)
            st.n_matched += 1
            st.sum_doae += ang
            st.sum_rde += rde
            if ang <= doa_threshold and rde < rde_threshold:
                st.tp += 1
                st.n_tp_pairs += 1
                st.sum_doae_tp += ang
                st.sum_rde_tp += rde
            else:
                st.fp += 1
                st.fn += 1
    return dict(stats)


def pool(stats_list):
    total = defaultdict(ClassStats)
    for stats in stats_list:
        for c, st in stats.items():
            total[c] = total[c] + st
    return dict(total)


def scores_from_stats(stats, doae_mode="matched"):
    if doae_mode not in DOAE_MODES:
        raise ValueError(f"doae_mode must be one of {DOAE_MODES}, got {doae_mode!r}")
    per_class, counts, sentinels = {}, {}, []
    for c in sorted(stats):
        st = stats[c]
        if not st.present:
            continue
        denom = 2 * st.tp + st.fp + st.fn
        f = 2 * st.tp / denom if denom else 0.0
        n, s_doae, s_rde = (
            (st.n_matched, st.sum_doae, st.sum_rde)
            if doae_mode == "matched"
            else (st.n_tp_pairs, st.sum_doae_tp, st.sum_rde_tp)
        )
        if n:
            doae, rde = s_doae / n, s_rde / n
        else:
            doae, rde = SENTINEL_DOAE, SENTINEL_RDE
            sentinels.append(c)
        per_class[c] = {"f_score": f, "doae": doae, "rde": rde, "seld": seld_score(f, doae, rde)}
        counts[c] = {"tp": st.tp, "fp": st.fp, "fn": st.fn, "pairs": n}
    if not per_class:
        raise ValueError("no references or predictions to score")
    f = float(np.mean([v["f_score"] for v in per_class.values()]))
    doae = float(np.mean([v["doae"] for v in per_class.values()]))
    rde = float(np.mean([v["rde"] for v in per_class.values()]))
    return SeldScores(f, doae, rde, seld_score(f, doae, rde), per_class, counts, doae_mode, sentinels)


def score(preds, refs, doae_mode="matched", n_classes=N_CLASSES, matcher=match_frame_class):
    return scores_from_stats(class_stats(preds, refs, n_classes, matcher), doae_mode)


def score_sequences(sequences, doae_mode="matched", n_classes=N_CLASSES):
    """Score ``[(preds, refs), ...]`` pooled over all sequences."""
    return scores_from_stats(pool(class_stats(p, r, n_classes) for p, r in sequences), doae_mode)


METRICS = ("f_score", "doae", "rde", "seld")


@dataclass
class JackknifeResult:
    estimate: float  # metric on all pooled data
    low: float
    high: float
    pseudo_mean: float
    std_err: float
    n: int


def jackknife_from_values(theta_all, theta_loo, confidence=0.95):
    theta_loo = np.asarray(theta_loo, dtype=np.float64)
    n = theta_loo.size
    if n < 2:
        raise ValueError(f"jackknife needs at least 2 sequences, got {n}")
    pseudo = n * theta_all - (n - 1) * theta_loo
    mean = float(np.mean(pseudo))
    se = float(np.std(pseudo, ddof=1) / np.sqrt(n))
    half = float(student_t.ppf(0.5 + confidence / 2.0, n - 1)) * se
    return JackknifeResult(float(theta_all), mean - half, mean + half, mean, se, n)


def jackknife_ci(sequences, metric="seld", doae_mode="matched", n_classes=N_CLASSES, confidence=0.95):
    """Leave-one-sequence-out jackknife interval for one metric.

    Pseudo-values ``n*theta_all - (n-1)*theta_without_i`` give a Student-t
    interval around their mean; ``estimate`` is the pooled metric itself.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    per_seq = [class_stats(p, r, n_classes) for p, r in sequences]
    if len(per_seq) < 2:
        raise ValueError(f"jackknife needs at least 2 sequences, got {len(per_seq)}")
    total = pool(per_seq)
    theta_all = getattr(scores_from_stats(total, doae_mode), metric)
    loo = []
    for stats in per_seq:
        rest = {c: total[c] - stats.get(c, ClassStats()) for c in total}
        loo.append(getattr(scores_from_stats(rest, doae_mode), metric))
    return jackknife_from_values(theta_all, loo, confidence)
