"""Adapter run configuration.

Input layout: one directory per subject under `input_dir`, image files sorted
by name forming the frame sequence. Intensity labels are operator-supplied
per subject and may only be attached to palsy-source subjects; healthy-corpus
subjects are always (Normal, Normal).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

VALID_SOURCES = ("palsy_video", "healthy_corpus")
VALID_INTENSITIES = ("Normal", "Slight", "Strong")


class AdapterConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SubjectRule:
    source: str
    label: dict | None   # {"eyes": ..., "mouth": ...} or None

    def __post_init__(self):
        if self.source not in VALID_SOURCES:
            raise AdapterConfigError(f"source must be one of {VALID_SOURCES}, "
                                     f"got {self.source!r}")
        if self.label is not None:
            if self.source != "palsy_video":
                raise AdapterConfigError(
                    "labels may only be assigned to palsy-source subjects")
            for region in ("eyes", "mouth"):
                value = self.label.get(region)
                if value not in VALID_INTENSITIES:
                    raise AdapterConfigError(
                        f"label.{region} must be one of {VALID_INTENSITIES}, "
                        f"got {value!r}")


@dataclass(frozen=True)
class AdapterConfig:
    input_dir: str
    output_path: str
    subjects: dict            # subject_id -> SubjectRule
    frame_stride: int = 1     # keep every Nth frame of the sequence
    summary_path: str | None = None

    def __post_init__(self):
        if self.frame_stride < 1:
            raise AdapterConfigError(f"frame_stride must be >= 1, got {self.frame_stride}")
        if not self.subjects:
            raise AdapterConfigError("config lists no subjects")

    @classmethod
    def from_json(cls, path) -> "AdapterConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise AdapterConfigError(f"{path}: not valid JSON: {e}") from e
        try:
            subjects = {
                sid: SubjectRule(source=rule["source"], label=rule.get("label"))
                for sid, rule in obj["subjects"].items()
            }
            return cls(input_dir=obj["input_dir"], output_path=obj["output"],
                       subjects=subjects,
                       frame_stride=int(obj.get("frame_stride", 1)),
                       summary_path=obj.get("summary"))
        except (KeyError, TypeError) as e:
            raise AdapterConfigError(f"{path}: {e}") from e
