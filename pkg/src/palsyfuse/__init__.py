"""palsyfuse: multimodal facial-asymmetry detection pipeline.

Data model and formats (`datamodel`), landmark geometry features
(`geometry`), deterministic rasterization (`rasterizer`), synthetic subject
generation (`synthgen`), a from-scratch neural engine (`nn`), the model zoo
(`models`), two-model fusion (`fusion`), and leave-one-patient-out
evaluation (`evaluation`), tied together by the `palsyfuse` CLI.
"""

__version__ = "0.1.0"

from .datamodel import (DatasetManifest, FeatureKind, FeatureVector, ImageBuffer,
                        Intensity, LandmarkFrame, RegionLabel, Source,
                        read_frames, write_frames, read_features_csv,
                        write_features_csv, read_image, write_image,
                        read_manifest, write_manifest)
from .errors import PalsyFuseError

__all__ = [
    "DatasetManifest", "FeatureKind", "FeatureVector", "ImageBuffer",
    "Intensity", "LandmarkFrame", "RegionLabel", "Source",
    "read_frames", "write_frames", "read_features_csv", "write_features_csv",
    "read_image", "write_image", "read_manifest", "write_manifest",
    "PalsyFuseError", "__version__",
]
