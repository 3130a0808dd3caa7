"""WAV and metadata CSV readers/writers and the binary feature-tensor format.

Tensor file layout (all integers 32-bit little-endian unsigned)::

    b"RVFT0001"
    len(mode), mode (UTF-8)
    C, T, K
    C x [len(name), name (UTF-8)]
    C*T*K float32 little-endian, (channel, time, bin) order
    len(meta), meta (UTF-8 JSON)
"""
import csv
import json
import os
import struct
import tempfile
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .augment import wrap_azimuth
from .dsp import AudioClip
from .features import FeatureStack
from .metrics import EventRecord

MAGIC = b"RVFT0001"
_U32 = struct.Struct("<I")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


@contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# WAV

_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0}


def _check_chunks(path):
    """Raise OSError when a chunk claims more bytes than the file holds."""
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX") or head[8:12] != b"WAVE":
            return  # let the WAV parser name the problem
        pos = 12
        while pos + 8 <= size:
            fh.seek(pos)
            cid, n = fh.read(4), _U32.unpack(fh.read(4))[0]
            if pos + 8 + n > size:
                raise OSError(
                    f"{path}: truncated WAV, {cid.decode('latin-1')!r} chunk declares {n} bytes "
                    f"but only {size - pos - 8} remain"
                )
            pos += 8 + n + (n & 1)


def read_wav(path):
    """Read PCM 16/24/32-bit or float32 WAV into an :class:`AudioClip` scaled to [-1, 1]."""
    path = Path(path)
    _check_chunks(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            sr, data = wavfile.read(path)
    except wavfile.WavFileWarning as exc:
        raise OSError(f"{path}: truncated or damaged WAV ({exc})") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: unsupported WAV encoding in 'fmt ' chunk ({exc})") from exc
    if data.dtype in _SCALE:
        samples = data.astype(np.float64) / _SCALE[data.dtype]
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported sample format {data.dtype} in 'fmt ' chunk "
            "(need PCM 16/24/32-bit or float32)"
        )
    samples = samples[:, None] if samples.ndim == 1 else samples
    return AudioClip(samples.T, sr)


def write_wav(path, clip):
    """Write float32 WAV, channels interleaved."""
    with atomic_write(path) as fh:
        wavfile.write(fh, clip.sample_rate, clip.samples.T.astype(np.float32))


# --------------------------------------------------------------------------
# metadata CSV: frame, class, source, azimuth, elevation, distance_cm


def _number(text):
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def read_metadata_csv(path):
    events = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                frame, cls, src, az, el, dist = (_number(c) for c in row)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if frame != int(frame) or cls != int(cls) or src != int(src):
                raise FormatError(f"{path}:{lineno}: frame, class and source must be integers")
            if not -90.0 <= el <= 90.0:
                raise FormatError(f"{path}:{lineno}: elevation {el} outside [-90, 90]")
            if dist < 0:
                raise FormatError(f"{path}:{lineno}: negative distance {dist}")
            events.append(
                EventRecord(int(frame), int(cls), int(src), wrap_azimuth(az), el, dist / 100.0)
            )
    return events


def _fmt(value):
    value = float(value)
    return str(int(value)) if value == int(value) else f"{value:.4f}".rstrip("0")


def write_metadata_csv(path, events):
    with atomic_write(path, "w") as fh:
        for e in sorted(events, key=lambda e: (e.frame, e.class_id, e.track_id)):
            fh.write(
                ",".join([str(e.frame), str(e.class_id), str(e.track_id), _fmt(e.azimuth),
                          _fmt(e.elevation), _fmt(round(e.distance * 100.0, 6))]) + "\n"
            )


# --------------------------------------------------------------------------
# tensors


def _pack_str(text):
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def encode_tensor(stack):
    c, t, k = stack.data.shape
    meta = dict(stack.metadata)
    meta.update(
        mode=stack.mode,
        frame_rate=stack.frame_rate,
        bin_semantics=list(stack.bin_semantics),
        channel_names=list(stack.channel_names),
    )
    parts = [MAGIC, _pack_str(stack.mode), struct.pack("<III", c, t, k)]
    parts += [_pack_str(name) for name in stack.channel_names]
    parts.append(np.ascontiguousarray(stack.data, dtype="<f4").tobytes())
    parts.append(_pack_str(json.dumps(meta, sort_keys=True)))
    return b"".join(parts)


def write_tensor(path, stack):
    with atomic_write(path) as fh:
        fh.write(encode_tensor(stack))


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: size mismatch reading {what}: need {n} bytes at offset "
                f"{self.pos}, file has {len(self.buf)}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]

    def text(self, what):
        return self.take(self.u32(what), what).decode("utf-8")


def decode_tensor(buf, path="<bytes>"):
    r = _Reader(buf, path)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    mode = r.text("mode")
    c, t, k = (r.u32(d) for d in ("channels", "time", "bins"))
    names = [r.text(f"channel name {i}") for i in range(c)]
    payload = r.take(4 * c * t * k, "payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(c, t, k).copy()
    meta = json.loads(r.text("metadata"))
    if r.pos != len(buf):
        raise FormatError(f"{path}: size mismatch, {len(buf) - r.pos} trailing bytes")
    return FeatureStack(
        data=data,
        channel_names=names,
        mode=mode,
        frame_rate=float(meta.get("frame_rate", 0.0)),
        bin_semantics=list(meta.get("bin_semantics", [])),
        metadata=meta,
    )


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes(), path)
