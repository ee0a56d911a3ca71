"""Convert subject image directories into the pipeline's frames.jsonl.

Output follows the primary wire format exactly: one JSON object per line with
keys subject_id, frame_id, source, landmarks (478 [x,y] pairs), blendshapes
(52 or null), label ({eyes, mouth} or null); numeric text at 9 significant
digits, LF line endings. Frames where the model detects no face are skipped
and counted in the sidecar summary.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .config import AdapterConfig

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".ppm", ".pgm", ".bmp")


def _fmt9(x: float) -> str:
    return format(float(x), ".9g")


def _frame_line(subject_id: str, frame_id: str, source: str,
                landmarks: np.ndarray, blendshapes, label) -> str:
    lm = ",".join(f"[{_fmt9(x)},{_fmt9(y)}]" for x, y in landmarks)
    bs = ("null" if blendshapes is None
          else "[" + ",".join(_fmt9(v) for v in blendshapes) + "]")
    if label is None:
        lab = "null"
    else:
        lab = ('{"eyes":' + json.dumps(label["eyes"])
               + ',"mouth":' + json.dumps(label["mouth"]) + "}")
    return ("{"
            + '"subject_id":' + json.dumps(subject_id)
            + ',"frame_id":' + json.dumps(frame_id)
            + ',"source":' + json.dumps(source)
            + ',"landmarks":[' + lm + "]"
            + ',"blendshapes":' + bs
            + ',"label":' + lab
            + "}")


def _subject_images(input_dir: Path, subject_id: str) -> list[Path]:
    subject_dir = input_dir / subject_id
    if not subject_dir.is_dir():
        raise FileNotFoundError(f"subject directory not found: {subject_dir}")
    return sorted(p for p in subject_dir.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def ingest(config: AdapterConfig, backend) -> dict:
    """Run the backend over every configured subject; returns the summary."""
    input_dir = Path(config.input_dir)
    lines: list[str] = []
    summary: dict = {"model_version": getattr(backend, "model_version", "unknown"),
                     "subjects": {}, "total_frames": 0, "total_skipped": 0}

    healthy_label = {"eyes": "Normal", "mouth": "Normal"}
    for subject_id in sorted(config.subjects):
        rule = config.subjects[subject_id]
        images = _subject_images(input_dir, subject_id)
        kept = images[::config.frame_stride]
        emitted = 0
        skipped = 0
        for index, image_path in enumerate(kept):
            result = backend.detect_file(image_path)
            if result is None:
                skipped += 1
                continue
            landmarks = np.clip(result.landmarks, 0.0, 1.0)
            blendshapes = result.blendshapes
            if blendshapes is not None:
                blendshapes = np.clip(blendshapes, 0.0, 1.0)
            label = rule.label if rule.source == "palsy_video" else healthy_label
            lines.append(_frame_line(subject_id, f"f{index:04d}", rule.source,
                                     landmarks, blendshapes, label))
            emitted += 1
        summary["subjects"][subject_id] = {
            "frames_in": len(kept), "frames_out": emitted,
            "skipped_no_face": skipped,
        }
        summary["total_frames"] += emitted
        summary["total_skipped"] += skipped

    out_path = Path(config.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_name(out_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
    os.replace(tmp, out_path)

    summary_path = (Path(config.summary_path) if config.summary_path
                    else out_path.with_name("ingest_summary.json"))
    tmp = summary_path.with_name(summary_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, summary_path)
    return summary
