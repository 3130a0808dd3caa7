"""Command-line entry point: ``revfeat {extract,augment,eval,simulate,itdg}``."""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import augment as acs
from . import geometry, metrics, simulate
from .dereverb import DirectReverbPair, WpeConfig, split_direct_reverb
from .dsp import AudioClip
from .features import SAMPLE_RATE, stack_features
from .fileio import read_metadata_csv, read_tensor, read_wav, write_metadata_csv, write_tensor, write_wav

log = logging.getLogger("revfeat")

CLI_MODES = {"none": "none", "drr": "drr", "dplusr": "d_plus_r", "stpacc": "stpacc"}


class CliError(Exception):
    pass


def worker_count():
    raw = os.environ.get("REVFEAT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def _parallel(func, items):
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(func, items))


def _emit(args, rows, text):
    if args.json:
        for row in rows:
            print(json.dumps(row, sort_keys=True))
    else:
        print(text)


# --------------------------------------------------------------------------
# extract


def chunk_starts(n_samples, chunk_len, step, split):
    """Chunk start offsets.

    train: every ``step`` samples, full chunks only (at least one chunk).
    test: back-to-back chunks; a trailing partial chunk is kept, zero-padded,
    when it holds at least half a chunk of audio.
    """
    if split == "train":
        if n_samples <= chunk_len:
            return [0]
        return list(range(0, n_samples - chunk_len + 1, step))
    if split == "test":
        count = max(1, int(np.floor(n_samples / chunk_len + 0.5)))
        return [k * chunk_len for k in range(count)]
    raise CliError(f"unknown split {split!r}")


def _cut(x, start, length):
    out = np.zeros(x.shape[:-1] + (length,))
    piece = x[..., start : start + length]
    out[..., : piece.shape[-1]] = piece
    return out


def extract_file(path, mode, chunk_seconds, split, out_dir, wpe_cfg=WpeConfig()):
    clip = read_wav(path)
    if clip.channels != 4:
        raise CliError(f"{path}: expected 4-channel FOA audio, got {clip.channels} channel(s)")
    if clip.sample_rate != SAMPLE_RATE:
        raise CliError(f"{path}: expected {SAMPLE_RATE} Hz, got {clip.sample_rate} Hz")
    sr = clip.sample_rate
    chunk_len = int(round(chunk_seconds * sr))
    pair = None
    if mode in ("drr", "d_plus_r"):
        # one WPE fit over the whole recording, then cut alongside the audio
        pair = split_direct_reverb(clip.channel(0), wpe_cfg=wpe_cfg)
    written = []
    for idx, start in enumerate(chunk_starts(clip.length, chunk_len, sr, split)):
        piece = AudioClip(_cut(clip.samples, start, chunk_len), sr)
        chunk_pair = None
        if pair is not None:
            chunk_pair = DirectReverbPair(
                AudioClip(_cut(pair.direct.samples[0], start, chunk_len), sr),
                AudioClip(_cut(pair.reverberant.samples[0], start, chunk_len), sr),
                chunk_len,
            )
        stack = stack_features(piece, mode, wpe_cfg, pair=chunk_pair)
        stack.metadata.update(source=str(path), split=split, chunk_index=idx,
                              chunk_start_s=start / sr, chunk_s=chunk_seconds)
        target = Path(out_dir) / f"{Path(path).stem}_{split}_{idx:04d}.rvft"
        write_tensor(target, stack)
        written.append({"file": str(target), "shape": list(stack.shape), "mode": mode,
                        "start_s": start / sr})
    return written


def cmd_extract(args):
    mode = CLI_MODES[args.mode]
    rows = _parallel(
        lambda p: extract_file(p, mode, args.chunk, args.split, args.out), args.inputs
    )
    rows = [r for per_file in rows for r in per_file]
    text = "\n".join(f"{r['file']}  {'x'.join(map(str, r['shape']))}" for r in rows)
    _emit(args, rows, text)
    return 0


# --------------------------------------------------------------------------
# augment


def augment_file(wav_path, csv_path, out_dir):
    clip = read_wav(wav_path)
    if clip.channels != 4:
        raise CliError(f"{wav_path}: expected 4-channel FOA audio, got {clip.channels} channel(s)")
    events = read_metadata_csv(csv_path)
    stem = Path(wav_path).stem
    rows = []
    for t, (audio, labels) in zip(acs.ALL_TRANSFORMS, acs.acs_expand(clip, events)):
        wav_out = Path(out_dir) / f"{stem}_acs{t.id}.wav"
        csv_out = Path(out_dir) / f"{Path(csv_path).stem}_acs{t.id}.csv"
        write_wav(wav_out, audio)
        write_metadata_csv(csv_out, labels)
        rows.append({"id": t.id, "azimuth_rotation": t.azimuth_rotation,
                     "elevation_flip": t.elevation_flip, "wav": str(wav_out), "csv": str(csv_out)})
    return rows


def cmd_augment(args):
    if len(args.wav) != len(args.csv):
        raise CliError(f"got {len(args.wav)} WAV files but {len(args.csv)} CSV files")
    rows = _parallel(lambda pair: augment_file(pair[0], pair[1], args.out), list(zip(args.wav, args.csv)))
    rows = [r for per_file in rows for r in per_file]
    _emit(args, rows, "\n".join(f"acs{r['id']}: {r['wav']} {r['csv']}" for r in rows))
    return 0


# --------------------------------------------------------------------------
# eval


def load_sequences(pred_dir, ref_dir):
    ref_files = sorted(Path(ref_dir).glob("*.csv"))
    if not ref_files:
        raise CliError(f"no reference CSV files in {ref_dir}")
    sequences, names = [], []
    for ref in ref_files:
        pred = Path(pred_dir) / ref.name
        preds = read_metadata_csv(pred) if pred.exists() else []
        if not pred.exists():
            log.warning("no prediction file for %s, scoring as empty", ref.name)
        sequences.append((preds, read_metadata_csv(ref)))
        names.append(ref.stem)
    return names, sequences


def cmd_eval(args):
    names, sequences = load_sequences(args.pred, args.ref)
    scores = metrics.score_sequences(sequences, args.doae_mode, args.classes)
    rows = []
    for m in metrics.METRICS:
        value = getattr(scores, m)
        low = high = None
        if len(sequences) >= 2:
            ci = metrics.jackknife_ci(sequences, m, args.doae_mode, args.classes)
            low, high = ci.low, ci.high
        rows.append({"metric": m, "value": value, "ci_low": low, "ci_high": high})
    lines = [f"sequences: {len(sequences)}  doae_mode: {scores.doae_mode}  "
             f"(classes with no matched pair use DOAE=180, RDE=1)"]
    labels = {"f_score": "F<=20deg/1", "doae": "DOAE", "rde": "RDE", "seld": "SELD"}
    for r in rows:
        ci = "" if r["ci_low"] is None else f"  ({r['ci_low']:.3f} - {r['ci_high']:.3f})"
        lines.append(f"{labels[r['metric']]:>11}: {r['value']:.3f}{ci}")
    lines.append("")
    lines.append(f"{'class':>5} {'F':>6} {'DOAE':>7} {'RDE':>6} {'SELD':>6} {'TP':>5} {'FP':>5} {'FN':>5}")
    for c, v in scores.per_class.items():
        k = scores.counts[c]
        mark = " *" if c in scores.sentinel_classes else ""
        lines.append(f"{c:>5} {v['f_score']:6.3f} {v['doae']:7.2f} {v['rde']:6.3f} {v['seld']:6.3f} "
                     f"{k['tp']:5d} {k['fp']:5d} {k['fn']:5d}{mark}")
    if args.json:
        rows.append({"per_class": scores.as_dict()["per_class"], "counts": scores.as_dict()["counts"],
                     "doae_mode": scores.doae_mode, "sentinel_classes": scores.sentinel_classes,
                     "sequences": names})
    _emit(args, rows, "\n".join(lines))
    return 0


# --------------------------------------------------------------------------
# simulate / itdg


def _frame_range(text):
    if text is None:
        return None
    try:
        lo, hi = text.split(":")
        return slice(int(lo) if lo else None, int(hi) if hi else None)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"frame range must look like START:END, got {text!r}") from exc


def cmd_simulate(args):
    t60 = None if args.no_tail else args.t60
    rows = simulate.sweep(args.distances, args.h_s, args.h_m, args.beta, t60, args.volume,
                          args.duration, args.seed, args.frames, with_drr=not args.no_drr)
    out = [r.as_dict() for r in rows]

    def fmt(v, spec):
        return "-" if v is None else format(v, spec)

    lines = [f"{'dist_m':>7} {'itdg_ms':>8} {'lag_ms':>7} {'true_drr_db':>12} {'drr_feat_db':>12}"]
    for r in rows:
        lines.append(f"{r.distance:7.2f} {r.itdg_ms:8.2f} {fmt(r.measured_lag_ms, '7.2f')} "
                     f"{fmt(r.true_drr_db, '12.2f')} {fmt(r.mean_drr_feature_db, '12.2f')}")
    _emit(args, out, "\n".join(lines))
    return 0


def _height_pair(text):
    try:
        hs, hm = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"height pair must look like H_S,H_M, got {text!r}") from exc
    return hs, hm


def cmd_itdg(args):
    rows = geometry.itdg_table(args.distances, args.heights, args.c)
    _emit(args, [r.as_dict() for r in rows], geometry.format_itdg_table(rows))
    return 0


def cmd_inspect(args):
    stack = read_tensor(args.tensor)
    row = {"mode": stack.mode, "shape": list(stack.shape), "channels": stack.channel_names,
           "frame_rate": stack.frame_rate, "metadata": stack.metadata}
    _emit(args, [row], json.dumps(row, indent=2, sort_keys=True))
    return 0


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="revfeat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--json", action="store_true", help="emit one JSON object per row")
        p.set_defaults(func=func)
        return p

    p = add("extract", cmd_extract, "compute feature tensors from 4-channel 24 kHz FOA WAV files")
    p.add_argument("--mode", choices=sorted(CLI_MODES), required=True)
    p.add_argument("--chunk", type=float, default=3.0, help="chunk length in seconds")
    p.add_argument("--split", choices=("train", "test"), default="test",
                   help="train: chunks every 1 s; test: non-overlapping chunks")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="WAV")
    p.add_argument("--out", required=True, metavar="DIR")

    p = add("augment", cmd_augment, "write the 8 ACS variants of FOA WAV + metadata CSV pairs")
    p.add_argument("--wav", nargs="+", required=True)
    p.add_argument("--csv", nargs="+", required=True)
    p.add_argument("--out", required=True, metavar="DIR")

    p = add("eval", cmd_eval, "score per-sequence prediction CSVs against references")
    p.add_argument("--pred", required=True, metavar="DIR")
    p.add_argument("--ref", required=True, metavar="DIR")
    p.add_argument("--doae-mode", choices=metrics.DOAE_MODES, default="matched",
                   help="average DOAE/RDE over all matched pairs or only true positives")
    p.add_argument("--classes", type=int, default=metrics.N_CLASSES)

    p = add("simulate", cmd_simulate, "distance sweep on synthetic floor-reflection RIRs")
    p.add_argument("--distances", type=float, nargs="+", default=list(geometry.TABLE_DISTANCES))
    p.add_argument("--h-s", type=float, default=1.5)
    p.add_argument("--h-m", type=float, default=1.5)
    p.add_argument("--beta", type=float, default=0.7)
    p.add_argument("--t60", type=float, default=0.5)
    p.add_argument("--no-tail", action="store_true")
    p.add_argument("--no-drr", action="store_true", help="skip the WPE-based DRR column")
    p.add_argument("--volume", type=float, default=200.0, help="room volume in m^3 (sets tail level)")
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=_frame_range, default=None, metavar="START:END",
                   help="frames averaged for the stpACC lag read-out")

    p = add("itdg", cmd_itdg, "print direct / floor reflection / ITDG delays")
    p.add_argument("--distances", type=float, nargs="+", default=list(geometry.TABLE_DISTANCES))
    p.add_argument("--heights", type=_height_pair, nargs="+", default=list(geometry.TABLE_HEIGHTS),
                   metavar="H_S,H_M")
    p.add_argument("--c", type=float, default=geometry.SPEED_OF_SOUND)

    p = add("inspect", cmd_inspect, "print the header and metadata of a tensor file")
    p.add_argument("tensor")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"revfeat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
