"""Landmark model backends.

The adapter never computes landmarks itself: MediaPipeBackend wraps the
external face-landmark model when it is installed; RecordedBackend replays
pinned model outputs keyed by image content hash, which is what the golden
tests (and any offline environment) use.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

N_LANDMARKS = 478
N_BLENDSHAPES = 52


@dataclass(frozen=True)
class DetectionResult:
    landmarks: np.ndarray          # (478, 2) normalized
    blendshapes: np.ndarray | None  # (52,) in [0,1] or None
    model_version: str


class BackendError(RuntimeError):
    pass


class RecordedBackend:
    """Replays recorded detections from a fixture file.

    Fixture schema: {"model_version": str,
                     "by_sha256": {hex: {"landmarks": [[x,y]*478],
                                          "blendshapes": [..52] | null}}}
    Images whose hash is absent count as face-not-detected.
    """

    def __init__(self, fixture_path):
        with open(fixture_path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        self.model_version = str(obj["model_version"])
        self._by_hash = obj["by_sha256"]

    def detect_file(self, image_path) -> DetectionResult | None:
        with open(image_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        entry = self._by_hash.get(digest)
        if entry is None:
            return None
        landmarks = np.asarray(entry["landmarks"], dtype=np.float64)
        if landmarks.shape != (N_LANDMARKS, 2):
            raise BackendError(
                f"fixture entry for {image_path}: landmarks shape {landmarks.shape}")
        blendshapes = entry.get("blendshapes")
        if blendshapes is not None:
            blendshapes = np.asarray(blendshapes, dtype=np.float64)
            if blendshapes.shape != (N_BLENDSHAPES,):
                raise BackendError(
                    f"fixture entry for {image_path}: blendshapes shape "
                    f"{blendshapes.shape}")
        return DetectionResult(landmarks=landmarks, blendshapes=blendshapes,
                               model_version=self.model_version)


class MediaPipeBackend:
    """Wraps the mediapipe FaceLandmarker task (must be installed separately).

    Emits all 478 landmark coordinates normalized by image size, and the 52
    blendshape coefficients when the model asset provides them.
    """

    def __init__(self, model_asset_path: str):
        try:
            import mediapipe as mp
            from mediapipe.tasks import python as mp_python
            from mediapipe.tasks.python import vision as mp_vision
        except ImportError as e:
            raise BackendError(
                "mediapipe is not installed; install the adapter with the "
                "[mediapipe] extra or use RecordedBackend") from e
        self._mp = mp
        options = mp_vision.FaceLandmarkerOptions(
            base_options=mp_python.BaseOptions(model_asset_path=model_asset_path),
            output_face_blendshapes=True,
            num_faces=1,
        )
        self._landmarker = mp_vision.FaceLandmarker.create_from_options(options)
        self.model_version = f"mediapipe-{mp.__version__}:{model_asset_path}"

    def detect_file(self, image_path) -> DetectionResult | None:
        from PIL import Image

        with Image.open(image_path) as im:
            rgb = np.asarray(im.convert("RGB"))
        mp_image = self._mp.Image(image_format=self._mp.ImageFormat.SRGB, data=rgb)
        result = self._landmarker.detect(mp_image)
        if not result.face_landmarks:
            return None
        pts = result.face_landmarks[0]
        landmarks = np.array([[p.x, p.y] for p in pts], dtype=np.float64)
        if landmarks.shape[0] != N_LANDMARKS:
            raise BackendError(
                f"{image_path}: model returned {landmarks.shape[0]} landmarks, "
                f"expected {N_LANDMARKS}")
        blendshapes = None
        if result.face_blendshapes:
            coeffs = result.face_blendshapes[0]
            if len(coeffs) == N_BLENDSHAPES + 1:
                coeffs = coeffs[1:]  # drop the leading neutral category
            blendshapes = np.array([c.score for c in coeffs], dtype=np.float64)
            if blendshapes.shape[0] != N_BLENDSHAPES:
                blendshapes = None
        return DetectionResult(landmarks=landmarks, blendshapes=blendshapes,
                               model_version=self.model_version)
