"""Role-map and contour fixtures for the external model's 478-point topology.

Index assignments follow the de-facto face-mesh landmark chart used by the
wrapped model family; the primary pipeline treats them as adapter-supplied
configuration, not as normative values.
"""

from __future__ import annotations

import json
import os
from pathlib import Path


class TopologyError(ValueError):
    pass


# sides follow the subject's anatomy ("l" = subject-left)
FACEMESH_ROLES = {
    "forehead_mid": 10,
    "chin": 152,
    "nose_tip": 1,
    "upper_lip_mid": 13,
    "lower_lip_mid": 14,
    "eyebrow_inner_l": 336, "eyebrow_mid_l": 334, "eyebrow_outer_l": 300,
    "eyebrow_inner_r": 107, "eyebrow_mid_r": 105, "eyebrow_outer_r": 70,
    "eye_inner_l": 362, "eye_outer_l": 263, "eye_top_l": 386, "eye_bottom_l": 374,
    "eye_inner_r": 133, "eye_outer_r": 33, "eye_top_r": 159, "eye_bottom_r": 145,
    "mouth_corner_l": 291, "mouth_corner_r": 61,
}

FACEMESH_CONTOURS = {
    "face_silhouette": {
        "indices": [10, 338, 297, 332, 284, 251, 389, 356, 454, 323, 361, 288,
                    397, 365, 379, 378, 400, 377, 152, 148, 176, 149, 150, 136,
                    172, 58, 132, 93, 234, 127, 162, 21, 54, 103, 67, 109],
        "closed": True,
    },
    "eyebrow_l": {"indices": [336, 296, 334, 293, 300], "closed": False},
    "eyebrow_r": {"indices": [70, 63, 105, 66, 107], "closed": False},
    "eye_l": {
        "indices": [263, 249, 390, 373, 374, 380, 381, 382, 362, 398, 384, 385,
                    386, 387, 388, 466],
        "closed": True,
    },
    "eye_r": {
        "indices": [33, 7, 163, 144, 145, 153, 154, 155, 133, 173, 157, 158,
                    159, 160, 161, 246],
        "closed": True,
    },
    "lip_outer": {
        "indices": [61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 409,
                    270, 269, 267, 0, 37, 39, 40, 185],
        "closed": True,
    },
    "lip_inner": {
        "indices": [78, 95, 88, 178, 87, 14, 317, 402, 318, 324, 308, 415,
                    310, 311, 312, 13, 82, 81, 80, 191],
        "closed": True,
    },
}

TOPOLOGIES = {"facemesh478": (FACEMESH_ROLES, FACEMESH_CONTOURS)}


def emit_rolemap(topology: str, out_dir) -> tuple[Path, Path]:
    """Write roles.json + contours.json for a known topology version."""
    if topology not in TOPOLOGIES:
        raise TopologyError(
            f"unknown topology {topology!r} (known: {', '.join(sorted(TOPOLOGIES))})")
    roles, contours = TOPOLOGIES[topology]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roles_path = out / "roles.json"
    contours_path = out / "contours.json"
    for path, obj in ((roles_path, roles), (contours_path, contours)):
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    return roles_path, contours_path
