"""Ingest adapter: convert real images into the pipeline's frames.jsonl.

Wraps an external 478-point face-landmark model (never reimplements it),
normalizes its output into the line-delimited JSON wire format the primary
pipeline consumes, and emits role-map/contour fixtures for the external
model's topology.
"""

__version__ = "0.1.0"

from .backends import DetectionResult, MediaPipeBackend, RecordedBackend
from .config import AdapterConfig
from .ingest import ingest
from .topology import emit_rolemap

__all__ = ["AdapterConfig", "DetectionResult", "MediaPipeBackend",
           "RecordedBackend", "ingest", "emit_rolemap", "__version__"]
