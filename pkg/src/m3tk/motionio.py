"""Motion sequence files: binary (magic M3TK) with a text alternative,
plus a multi-sequence dataset container (magic M3TS).

Binary layout, little endian: magic, u32 version, u8 modality length +
utf-8 bytes, f64 fps, u32 frames, u32 dim, then frames*dim f64 row-major.
The text form is for hand-authored fixtures and diffing.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .motionvae import MotionSequence

MOTION_MAGIC = b"M3TK"
DATASET_MAGIC = b"M3TS"
TEXT_HEADER = "m3tk-motion v1"
VERSION = 1


def _pack_motion(seq: MotionSequence) -> bytes:
    modality = seq.modality.encode("utf-8")
    head = MOTION_MAGIC + struct.pack("<IB", VERSION, len(modality)) + modality
    head += struct.pack("<dII", float(seq.fps), seq.frames.shape[0], seq.frames.shape[1])
    body = np.ascontiguousarray(seq.frames, dtype="<f8").tobytes()
    return head + body


class _ByteReader:
    def __init__(self, blob: bytes, context: str):
        self.blob = blob
        self.pos = 0
        self.context = context

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise FormatError(f"truncated {self.context}")
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _unpack_motion(reader: _ByteReader) -> MotionSequence:
    if reader.take(4) != MOTION_MAGIC:
        raise FormatError("bad motion record magic")
    version, name_len = reader.unpack("<IB")
    if version != VERSION:
        raise FormatError(f"unsupported motion file version {version}")
    modality = reader.take(name_len).decode("utf-8")
    fps, frames, dim = reader.unpack("<dII")
    data = np.frombuffer(reader.take(frames * dim * 8), dtype="<f8")
    return MotionSequence(modality=modality, fps=fps,
                          frames=data.reshape(frames, dim).copy())


def write_motion(path, seq: MotionSequence, text: bool = False) -> None:
    if text:
        lines = [f"{TEXT_HEADER} modality={seq.modality} fps={seq.fps!r} "
                 f"frames={seq.frames.shape[0]} dim={seq.frames.shape[1]}"]
        for row in seq.frames:
            lines.append(" ".join(repr(float(v)) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    with open(path, "wb") as fh:
        fh.write(_pack_motion(seq))


def read_motion(path) -> MotionSequence:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob.startswith(MOTION_MAGIC):
        reader = _ByteReader(blob, "motion file")
        seq = _unpack_motion(reader)
        if reader.pos != len(blob):
            raise FormatError("trailing bytes after motion record")
        return seq
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("not a motion file (bad magic, not text)") from exc
    return _read_motion_text(text)


def _read_motion_text(text: str) -> MotionSequence:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty motion file")
    head = lines[0].split()
    if head[:2] != TEXT_HEADER.split():
        raise FormatError("not a m3tk-motion v1 file")
    meta = dict(part.split("=", 1) for part in head[2:] if "=" in part)
    try:
        modality = meta["modality"]
        fps = float(meta["fps"])
        frames = int(meta["frames"])
        dim = int(meta["dim"])
    except (KeyError, ValueError) as exc:
        raise FormatError("motion header needs modality/fps/frames/dim") from exc
    if len(lines) - 1 != frames:
        raise FormatError(f"expected {frames} frame lines, found {len(lines) - 1}")
    data = np.zeros((frames, dim))
    for t, line in enumerate(lines[1:]):
        values = line.split()
        if len(values) != dim:
            raise FormatError(f"frame {t}: expected {dim} values, got {len(values)}")
        try:
            data[t] = [float(v) for v in values]
        except ValueError as exc:
            raise FormatError(f"frame {t}: non-numeric value") from exc
    return MotionSequence(modality=modality, fps=fps, frames=data)


def write_dataset(path, sequences) -> None:
    sequences = list(sequences)
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<II", VERSION, len(sequences)))
        for seq in sequences:
            fh.write(_pack_motion(seq))


def read_dataset(path) -> list[MotionSequence]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(DATASET_MAGIC):
        raise FormatError("not a m3tk dataset file (bad magic)")
    reader = _ByteReader(blob, "dataset file")
    reader.take(4)
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    sequences = [_unpack_motion(reader) for _ in range(count)]
    if reader.pos != len(blob):
        raise FormatError("trailing bytes after dataset records")
    return sequences
