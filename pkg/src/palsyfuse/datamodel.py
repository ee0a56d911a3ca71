"""Core domain types and every on-disk format shared by the pipeline.

Types are immutable value objects; file formats are line-delimited JSON for
landmark frames, CSV for feature vectors, binary PGM/PPM for images, and a
JSON manifest summarizing a dataset. All numeric text is written with 9
significant digits so serialization round-trips are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParseError, SchemaError, FormatError

N_LANDMARKS = 478
N_BLENDSHAPES = 52

FORMAT_VERSION = "1"


def fmt9(x: float) -> str:
    """Canonical numeric text: 9 significant digits.

    parse(fmt9(x)) re-serializes to the same text, which makes every
    write-read-write cycle bit-identical.
    """
    return format(float(x), ".9g")


class Source(str, Enum):
    PALSY_VIDEO = "palsy_video"
    HEALTHY_CORPUS = "healthy_corpus"
    SYNTHETIC = "synthetic"


class Intensity(str, Enum):
    NORMAL = "Normal"
    SLIGHT = "Slight"
    STRONG = "Strong"

    @property
    def rank(self) -> int:
        return _INTENSITY_RANK[self]


_INTENSITY_RANK = {Intensity.NORMAL: 0, Intensity.SLIGHT: 1, Intensity.STRONG: 2}


@dataclass(frozen=True)
class RegionLabel:
    """Per-region palsy intensity for the eyes and mouth."""

    eyes: Intensity
    mouth: Intensity

    def binary_label(self) -> bool:
        """True (palsy) iff either region deviates from Normal."""
        return self.eyes is not Intensity.NORMAL or self.mouth is not Intensity.NORMAL

    def class_key(self) -> tuple[Intensity, Intensity]:
        """Stratum used by round-robin sampling."""
        return (self.eyes, self.mouth)

    def class_key_str(self) -> str:
        return f"{self.eyes.value}-{self.mouth.value}"


def class_key_sort_index(key: tuple[Intensity, Intensity]) -> tuple[int, int]:
    """Canonical class order: (eyes, mouth) lexicographic, Normal<Slight<Strong."""
    return (key[0].rank, key[1].rank)


class FeatureKind(str, Enum):
    HANDCRAFTED29 = "handcrafted29"
    EXPRESSION52 = "expression52"
    COORDINATES956 = "coordinates956"

    @property
    def length(self) -> int:
        return {"handcrafted29": 29, "expression52": 52, "coordinates956": 956}[self.value]

    @property
    def bounded(self) -> bool:
        """Whether values are constrained to [0, 1]."""
        return self is not FeatureKind.COORDINATES956


def feature_names(kind: FeatureKind) -> list[str]:
    """Canonical per-kind column names (F1..F29 / E1..E52 / C1..C956)."""
    prefix = {FeatureKind.HANDCRAFTED29: "F", FeatureKind.EXPRESSION52: "E",
              FeatureKind.COORDINATES956: "C"}[kind]
    return [f"{prefix}{i}" for i in range(1, kind.length + 1)]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LandmarkFrame:
    """One face observation: 478 normalized 2-D points plus optional extras."""

    subject_id: str
    frame_id: str
    source: Source
    landmarks: np.ndarray                 # (478, 2) float64, read-only
    blendshapes: Optional[np.ndarray] = None   # (52,) in [0,1], read-only
    label: Optional[RegionLabel] = None

    def __post_init__(self):
        lm = np.asarray(self.landmarks, dtype=np.float64)
        if lm.shape != (N_LANDMARKS, 2):
            raise SchemaError(
                f"frame {self.subject_id}/{self.frame_id}: landmarks: "
                f"expected {N_LANDMARKS}, got {lm.shape[0] if lm.ndim == 2 else lm.shape}")
        if not np.all(np.isfinite(lm)):
            raise SchemaError(
                f"frame {self.subject_id}/{self.frame_id}: non-finite landmark coordinate")
        object.__setattr__(self, "landmarks", _readonly(lm))
        if self.blendshapes is not None:
            bs = np.asarray(self.blendshapes, dtype=np.float64)
            if bs.shape != (N_BLENDSHAPES,):
                raise SchemaError(
                    f"frame {self.subject_id}/{self.frame_id}: blendshapes: "
                    f"expected {N_BLENDSHAPES}, got {bs.size}")
            if not np.all(np.isfinite(bs)) or bs.min() < 0.0 or bs.max() > 1.0:
                raise SchemaError(
                    f"frame {self.subject_id}/{self.frame_id}: blendshape value outside [0,1]")
            object.__setattr__(self, "blendshapes", _readonly(bs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LandmarkFrame):
            return NotImplemented
        if (self.subject_id, self.frame_id, self.source, self.label) != (
                other.subject_id, other.frame_id, other.source, other.label):
            return False
        if not np.array_equal(self.landmarks, other.landmarks):
            return False
        if (self.blendshapes is None) != (other.blendshapes is None):
            return False
        return self.blendshapes is None or np.array_equal(self.blendshapes, other.blendshapes)

    def binary_label(self) -> Optional[bool]:
        return None if self.label is None else self.label.binary_label()


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A structured modality: handcrafted (29), expression (52), or coords (956)."""

    kind: FeatureKind
    values: np.ndarray
    subject_id: str
    frame_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.kind.length,):
            raise SchemaError(
                f"{self.kind.value} vector for {self.subject_id}/{self.frame_id}: "
                f"expected {self.kind.length} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise SchemaError(
                f"{self.kind.value} vector for {self.subject_id}/{self.frame_id}: non-finite value")
        if self.kind.bounded and (v.min() < 0.0 or v.max() > 1.0):
            raise SchemaError(
                f"{self.kind.value} vector for {self.subject_id}/{self.frame_id}: "
                f"value outside [0,1]")
        object.__setattr__(self, "values", _readonly(v))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.kind is other.kind
                and self.subject_id == other.subject_id
                and self.frame_id == other.frame_id
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit raster, row-major; 1 channel (grayscale) or 3 (RGB)."""

    width: int
    height: int
    channels: int
    pixels: bytes

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise SchemaError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise SchemaError(f"channels must be 1 or 3, got {self.channels}")
        expect = self.width * self.height * self.channels
        if len(self.pixels) != expect:
            raise SchemaError(
                f"pixel payload length {len(self.pixels)} != {expect} "
                f"({self.width}x{self.height}x{self.channels})")

    def to_array(self) -> np.ndarray:
        """(H, W) for grayscale, (H, W, 3) for RGB; uint8."""
        a = np.frombuffer(self.pixels, dtype=np.uint8)
        if self.channels == 1:
            return a.reshape(self.height, self.width)
        return a.reshape(self.height, self.width, self.channels)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ImageBuffer":
        a = np.asarray(a, dtype=np.uint8)
        if a.ndim == 2:
            h, w = a.shape
            return cls(w, h, 1, a.tobytes())
        if a.ndim == 3 and a.shape[2] == 3:
            h, w, _ = a.shape
            return cls(w, h, 3, a.tobytes())
        raise SchemaError(f"cannot build image from array of shape {a.shape}")


@dataclass(frozen=True)
class SubjectEntry:
    subject_id: str
    source: Source
    frame_count: int
    census: dict  # class_key_str (or "unlabeled") -> count


@dataclass(frozen=True)
class DatasetManifest:
    """Per-subject frame counts and label census for planning splits."""

    subjects: tuple
    version: str = FORMAT_VERSION

    def __post_init__(self):
        for s in self.subjects:
            if s.frame_count <= 0:
                raise SchemaError(f"subject {s.subject_id}: frame count must be positive")
            if sum(s.census.values()) != s.frame_count:
                raise SchemaError(
                    f"subject {s.subject_id}: census sums to {sum(s.census.values())}, "
                    f"frame count is {s.frame_count}")

    @classmethod
    def from_frames(cls, frames: Sequence[LandmarkFrame]) -> "DatasetManifest":
        order: list[str] = []
        per: dict[str, dict] = {}
        for f in frames:
            if f.subject_id not in per:
                order.append(f.subject_id)
                per[f.subject_id] = {"source": f.source, "count": 0, "census": {}}
            entry = per[f.subject_id]
            entry["count"] += 1
            key = f.label.class_key_str() if f.label is not None else "unlabeled"
            entry["census"][key] = entry["census"].get(key, 0) + 1
        subjects = tuple(
            SubjectEntry(sid, per[sid]["source"], per[sid]["count"],
                         dict(sorted(per[sid]["census"].items())))
            for sid in order)
        return cls(subjects=subjects)

    def to_json_obj(self) -> dict:
        return {
            "version": self.version,
            "subjects": [
                {"subject_id": s.subject_id, "source": s.source.value,
                 "frame_count": s.frame_count, "census": s.census}
                for s in self.subjects
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DatasetManifest":
        try:
            subjects = tuple(
                SubjectEntry(s["subject_id"], Source(s["source"]),
                             int(s["frame_count"]), dict(s["census"]))
                for s in obj["subjects"])
            return cls(subjects=subjects, version=str(obj["version"]))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"bad manifest: {e}") from e


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest.to_json_obj(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ParseError(f"{path}: {e}") from e
    return DatasetManifest.from_json_obj(obj)


# ---------------------------------------------------------------------------
# frames.jsonl

def _frame_to_json_line(f: LandmarkFrame) -> str:
    lm = ",".join(f"[{fmt9(x)},{fmt9(y)}]" for x, y in f.landmarks)
    if f.blendshapes is None:
        bs = "null"
    else:
        bs = "[" + ",".join(fmt9(v) for v in f.blendshapes) + "]"
    if f.label is None:
        lab = "null"
    else:
        lab = ('{"eyes":' + json.dumps(f.label.eyes.value)
               + ',"mouth":' + json.dumps(f.label.mouth.value) + "}")
    return ("{"
            + '"subject_id":' + json.dumps(f.subject_id)
            + ',"frame_id":' + json.dumps(f.frame_id)
            + ',"source":' + json.dumps(f.source.value)
            + ',"landmarks":[' + lm + "]"
            + ',"blendshapes":' + bs
            + ',"label":' + lab
            + "}")


def write_frames(frames: Iterable[LandmarkFrame], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in frames:
            fh.write(_frame_to_json_line(f))
            fh.write("\n")


def _frame_from_obj(obj: dict, where: str) -> LandmarkFrame:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: frame record must be an object")
    try:
        subject_id = obj["subject_id"]
        frame_id = obj["frame_id"]
        source = Source(obj["source"])
        landmarks = obj["landmarks"]
        blendshapes = obj.get("blendshapes")
        label_obj = obj.get("label")
    except (KeyError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from e
    if not isinstance(landmarks, list) or len(landmarks) != N_LANDMARKS:
        got = len(landmarks) if isinstance(landmarks, list) else type(landmarks).__name__
        raise SchemaError(f"{where}: landmarks: expected {N_LANDMARKS}, got {got}")
    label = None
    if label_obj is not None:
        try:
            label = RegionLabel(Intensity(label_obj["eyes"]), Intensity(label_obj["mouth"]))
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"{where}: bad label: {e}") from e
    try:
        return LandmarkFrame(subject_id=subject_id, frame_id=frame_id, source=source,
                             landmarks=np.array(landmarks, dtype=np.float64),
                             blendshapes=None if blendshapes is None
                             else np.array(blendshapes, dtype=np.float64),
                             label=label)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from e


def _iter_text_lines(fh, path):
    """Line iterator that converts undecodable bytes into a typed ParseError."""
    lineno = 0
    while True:
        lineno += 1
        try:
            line = fh.readline()
        except UnicodeDecodeError as e:
            raise ParseError(f"{path}:{lineno}: not valid UTF-8: {e}") from e
        if not line:
            return
        yield lineno, line


def read_frames(path) -> list[LandmarkFrame]:
    frames: list[LandmarkFrame] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in _iter_text_lines(fh, path):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: malformed JSON: {e.msg}") from e
            frame = _frame_from_obj(obj, f"{path}:{lineno}")
            ident = (frame.subject_id, frame.frame_id)
            if ident in seen:
                raise SchemaError(
                    f"{path}:{lineno}: duplicate frame identity {ident[0]}/{ident[1]}")
            seen.add(ident)
            frames.append(frame)
    return frames


# ---------------------------------------------------------------------------
# features.csv

def write_features_csv(vectors: Sequence[FeatureVector], path) -> None:
    if not vectors:
        raise SchemaError("cannot write an empty feature CSV (kind is undetermined)")
    kind = vectors[0].kind
    for v in vectors:
        if v.kind is not kind:
            raise SchemaError(f"mixed feature kinds in one CSV: {kind.value} vs {v.kind.value}")
    names = feature_names(kind)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["subject_id", "frame_id"] + names) + "\n")
        for v in vectors:
            fh.write(",".join([v.subject_id, v.frame_id] + [fmt9(x) for x in v.values]) + "\n")


_KIND_BY_FIRST_COLUMN = {"F1": FeatureKind.HANDCRAFTED29,
                         "E1": FeatureKind.EXPRESSION52,
                         "C1": FeatureKind.COORDINATES956}


def read_features_csv(path) -> list[FeatureVector]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header_line = fh.readline()
        except UnicodeDecodeError as e:
            raise ParseError(f"{path}:1: not valid UTF-8: {e}") from e
        if not header_line:
            raise ParseError(f"{path}: empty file")
        header = header_line.rstrip("\n").split(",")
        if header[:2] != ["subject_id", "frame_id"]:
            raise SchemaError(f"{path}: header must start with subject_id,frame_id")
        if len(header) < 3 or header[2] not in _KIND_BY_FIRST_COLUMN:
            raise SchemaError(f"{path}: unrecognized feature columns")
        kind = _KIND_BY_FIRST_COLUMN[header[2]]
        expected = ["subject_id", "frame_id"] + feature_names(kind)
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            raise SchemaError(
                f"{path}: bad {kind.value} header "
                f"(missing {missing or 'none'}, unexpected {extra or 'none'})")
        vectors: list[FeatureVector] = []
        for offset, line in _iter_text_lines(fh, path):
            lineno = offset + 1
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split(",")
            if len(cols) != len(expected):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(expected)} columns, got {len(cols)}")
            try:
                values = np.array([float(c) for c in cols[2:]], dtype=np.float64)
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            vectors.append(FeatureVector(kind=kind, values=values,
                                         subject_id=cols[0], frame_id=cols[1]))
        return vectors


# ---------------------------------------------------------------------------
# PGM (P5) / PPM (P6), binary, 8-bit

def write_image(image: ImageBuffer, path) -> None:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n" + f"{image.width} {image.height}".encode() + b"\n255\n"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(image.pixels)


def read_image(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        channels = 1
    elif data[:2] == b"P6":
        channels = 3
    else:
        raise FormatError(f"{path}: unsupported magic {data[:2]!r} (want P5 or P6)")
    # header: magic \n "<w> <h>" \n "255" \n  — tokens separated by whitespace
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        tok = data[start:pos]
        if not tok.isdigit():
            raise FormatError(f"{path}: bad header token {tok!r}")
        tokens.append(int(tok))
    if pos >= len(data) or data[pos] not in b" \t\r\n":
        raise FormatError(f"{path}: missing whitespace after maxval")
    pos += 1  # single whitespace byte, then raw samples
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (want 255)")
    expect = width * height * channels
    payload = data[pos:pos + expect]
    if len(payload) != expect:
        raise FormatError(
            f"{path}: truncated pixel payload ({len(payload)} of {expect} bytes)")
    try:
        return ImageBuffer(width=width, height=height, channels=channels, pixels=payload)
    except SchemaError as e:
        raise FormatError(f"{path}: {e}") from e
