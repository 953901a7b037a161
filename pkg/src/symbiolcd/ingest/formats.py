"""Readers and writers for the on-disk formats.

Text formats are canonical: ``serialize(parse(b)) == b`` whenever ``b`` was
itself produced by the matching serializer.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ..errors import FormatError

DESCRIPTOR_MAGIC = b"SBD1"
DESCRIPTOR_BYTES = 32


@dataclass(frozen=True)
class ObjectInstance:
    label: str
    confidence: float
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]

    @property
    def centroid(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)


@dataclass(frozen=True)
class FrameObservation:
    frame_id: int
    width: int
    height: int
    objects: tuple[ObjectInstance, ...] = ()
    timestamp: float | None = None


@dataclass(frozen=True)
class LoopLabelSet:
    """Ground-truth labels keyed by ``(query, reference)`` with ``query > reference``."""

    labels: dict[tuple[int, int], bool] = field(default_factory=dict)

    def __post_init__(self):
        for (q, r), v in self.labels.items():
            if q <= r:
                raise FormatError(f"query {q} must be greater than reference {r}")

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(sorted(self.labels))

    def get(self, query: int, reference: int, default=None):
        return self.labels.get((query, reference), default)

    def positives(self) -> list[tuple[int, int]]:
        return sorted(p for p, v in self.labels.items() if v)


class PairScoreTable:
    """vBoW scores with order-insensitive lookup."""

    def __init__(self, scores: dict[tuple[int, int], float] | None = None):
        self._scores: dict[tuple[int, int], float] = {}
        for (a, b), s in (scores or {}).items():
            self._set(a, b, s)

    @staticmethod
    def _key(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a >= b else (b, a)

    def _set(self, a, b, score, line=None):
        if not (0.0 <= score <= 1.0) or math.isnan(score):
            raise FormatError(f"score {score!r} outside [0,1]", line=line, field="score")
        key = self._key(a, b)
        old = self._scores.get(key)
        if old is not None and old != score:
            raise FormatError(f"conflicting duplicate entry for pair {key}", line=line)
        self._scores[key] = float(score)

    def get(self, a: int, b: int) -> float | None:
        return self._scores.get(self._key(a, b))

    def items(self):
        return sorted(self._scores.items())

    def __len__(self):
        return len(self._scores)


# -- frames ------------------------------------------------------------------

def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(v))


def _parse_object(obj, width, height, line) -> ObjectInstance:
    if not isinstance(obj, dict):
        raise FormatError("object entry must be a mapping", line=line, field="objects")
    label = obj.get("label")
    if not isinstance(label, str) or not label:
        raise FormatError("label must be a non-empty string", line=line, field="label")
    conf = obj.get("confidence")
    if not _is_num(conf) or not 0.0 <= conf <= 1.0:
        raise FormatError(f"confidence {conf!r} outside [0,1]", line=line, field="confidence")
    bbox = obj.get("bbox")
    if (not isinstance(bbox, list) or len(bbox) != 4
            or not all(_is_num(v) for v in bbox)):
        raise FormatError("bbox must be [x, y, w, h]", line=line, field="bbox")
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise FormatError("bbox width and height must be positive", line=line, field="bbox")
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise FormatError(f"bbox {bbox} outside image {width}x{height}",
                          line=line, field="bbox")
    return ObjectInstance(label=label, confidence=float(conf), bbox=(x, y, w, h))


def parse_frame_record(record: dict, line: int | None = None) -> FrameObservation:
    if not isinstance(record, dict):
        raise FormatError("record must be a JSON object", line=line)
    fid = record.get("frame_id")
    if not _is_int(fid) or fid < 0:
        raise FormatError(f"frame_id {fid!r} must be a non-negative integer",
                          line=line, field="frame_id")
    ts = record.get("timestamp")
    if ts is not None and not _is_num(ts):
        raise FormatError("timestamp must be a number or null", line=line, field="timestamp")
    width, height = record.get("width"), record.get("height")
    for name, v in (("width", width), ("height", height)):
        if not _is_int(v) or v <= 0:
            raise FormatError(f"{name} must be a positive integer", line=line, field=name)
    objs = record.get("objects")
    if not isinstance(objs, list):
        raise FormatError("objects must be a list", line=line, field="objects")
    objects = tuple(_parse_object(o, width, height, line) for o in objs)
    return FrameObservation(frame_id=fid, width=width, height=height, objects=objects,
                            timestamp=None if ts is None else float(ts))


def parse_frames(stream) -> list[FrameObservation]:
    """Parse a line-delimited frames stream (bytes, str or file object).

    Blank lines are skipped. Frames are returned sorted by ``frame_id``.
    """
    frames: dict[int, FrameObservation] = {}
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"malformed JSON ({exc.msg})", line=lineno) from None
        frame = parse_frame_record(record, line=lineno)
        if frame.frame_id in frames:
            raise FormatError(f"duplicate frame_id {frame.frame_id}", line=lineno,
                              field="frame_id")
        frames[frame.frame_id] = frame
    return [frames[k] for k in sorted(frames)]


def frame_to_record(frame: FrameObservation) -> dict:
    return {
        "frame_id": frame.frame_id,
        "timestamp": frame.timestamp,
        "width": frame.width,
        "height": frame.height,
        "objects": [
            {"label": o.label, "confidence": o.confidence, "bbox": list(o.bbox)}
            for o in frame.objects
        ],
    }


def serialize_frames(frames: Iterable[FrameObservation]) -> bytes:
    lines = [json.dumps(frame_to_record(f), separators=(",", ":"))
             for f in sorted(frames, key=lambda f: f.frame_id)]
    return "".join(line + "\n" for line in lines).encode("utf-8")


# -- CSV tables ----------------------------------------------------------------

def _lines(stream) -> Iterator[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        yield from stream.splitlines()
        return
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _csv_rows(stream, header: list[str]) -> Iterator[tuple[int, list[str]]]:
    lines = list(_lines(stream))
    if not lines or not "".join(lines).strip():
        return
    reader = csv.reader(lines)
    got = next(reader)
    if [h.strip() for h in got] != header:
        raise FormatError(f"expected header {','.join(header)}", line=1)
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} columns, got {len(row)}", line=lineno)
        yield lineno, [c.strip() for c in row]


def _parse_id(text: str, line: int, name: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise FormatError(f"{text!r} is not an integer", line=line, field=name) from None
    if v < 0:
        raise FormatError("frame ids must be non-negative", line=line, field=name)
    return v


_BOOLS = {"1": True, "0": False, "true": True, "false": False}


def parse_ground_truth(stream) -> LoopLabelSet:
    labels: dict[tuple[int, int], bool] = {}
    for lineno, (q, r, flag) in _csv_rows(stream, ["query", "reference", "is_loop"]):
        qi, ri = _parse_id(q, lineno, "query"), _parse_id(r, lineno, "reference")
        if qi <= ri:
            raise FormatError(f"query {qi} must be greater than reference {ri}", line=lineno)
        value = _BOOLS.get(flag.lower())
        if value is None:
            raise FormatError(f"{flag!r} is not boolean", line=lineno, field="is_loop")
        if (qi, ri) in labels:
            raise FormatError(f"duplicate pair ({qi},{ri})", line=lineno)
        labels[(qi, ri)] = value
    return LoopLabelSet(labels)


def serialize_ground_truth(truth: LoopLabelSet) -> bytes:
    out = ["query,reference,is_loop"]
    out += [f"{q},{r},{int(truth.labels[(q, r)])}" for q, r in sorted(truth.labels)]
    return ("\n".join(out) + "\n").encode("utf-8")


def parse_pair_scores(stream) -> PairScoreTable:
    table = PairScoreTable()
    for lineno, (q, r, s) in _csv_rows(stream, ["query", "reference", "score"]):
        qi, ri = _parse_id(q, lineno, "query"), _parse_id(r, lineno, "reference")
        try:
            score = float(s)
        except ValueError:
            raise FormatError(f"{s!r} is not a number", line=lineno, field="score") from None
        table._set(qi, ri, score, line=lineno)
    return table


def serialize_pair_scores(table: PairScoreTable) -> bytes:
    out = ["query,reference,score"]
    out += [f"{q},{r},{s!r}" for (q, r), s in table.items()]
    return ("\n".join(out) + "\n").encode("utf-8")


# -- binary descriptors ------------------------------------------------------------

def serialize_descriptors(desc: np.ndarray) -> bytes:
    desc = np.asarray(desc, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
    return DESCRIPTOR_MAGIC + struct.pack("<I", len(desc)) + desc.tobytes()


def parse_descriptors(data: bytes) -> np.ndarray:
    """Return a ``(count, 32)`` uint8 array of 256-bit descriptors."""
    if data[:4] != DESCRIPTOR_MAGIC:
        raise FormatError("bad descriptor magic (expected SBD1)")
    if len(data) < 8:
        raise FormatError("truncated descriptor header")
    (count,) = struct.unpack_from("<I", data, 4)
    expected = 8 + count * DESCRIPTOR_BYTES
    if len(data) != expected:
        raise FormatError(f"descriptor payload is {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).reshape(count, DESCRIPTOR_BYTES).copy()


def read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def write_bytes(path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def descriptor_filename(frame_id: int) -> str:
    return f"{frame_id:06d}.sbd"


def load_descriptor_dir(path) -> dict[int, np.ndarray]:
    """Load every ``NNNNNN.sbd`` file in ``path`` keyed by frame id."""
    out = {}
    for name in sorted(os.listdir(path)):
        stem, ext = os.path.splitext(name)
        if ext != ".sbd" or not stem.isdigit():
            continue
        try:
            out[int(stem)] = parse_descriptors(read_bytes(os.path.join(path, name)))
        except FormatError as exc:
            raise FormatError(f"{name}: {exc}") from None
    return out


def save_descriptor_dir(path, descriptors: dict[int, np.ndarray]) -> None:
    os.makedirs(path, exist_ok=True)
    for fid, desc in sorted(descriptors.items()):
        write_bytes(os.path.join(path, descriptor_filename(fid)), serialize_descriptors(desc))


__all__ = [
    "ObjectInstance", "FrameObservation", "LoopLabelSet", "PairScoreTable",
    "parse_frames", "serialize_frames", "parse_frame_record", "frame_to_record",
    "parse_ground_truth", "serialize_ground_truth",
    "parse_pair_scores", "serialize_pair_scores",
    "parse_descriptors", "serialize_descriptors",
    "load_descriptor_dir", "save_descriptor_dir", "read_bytes", "write_bytes",
]
