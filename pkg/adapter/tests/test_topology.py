"""S2: emitted roles.json / contours.json load in the primary modules."""

import json
from pathlib import Path

import pytest

from palsy_ingest import emit_rolemap
from palsy_ingest.topology import FACEMESH_ROLES, TopologyError


def test_roles_schema(tmp_path):
    roles_path, contours_path = emit_rolemap("facemesh478", tmp_path)
    roles = json.loads(roles_path.read_text())
    assert len(roles) == 21
    assert all(0 <= v < 478 for v in roles.values())
    assert len(set(roles.values())) == 21
    contours = json.loads(contours_path.read_text())
    for name, spec in contours.items():
        assert len(spec["indices"]) >= 2, name
        assert all(0 <= i < 478 for i in spec["indices"]), name


def test_unknown_topology(tmp_path):
    with pytest.raises(TopologyError, match="unknown topology"):
        emit_rolemap("facemesh9000", tmp_path)


def test_s2_loads_in_primary_geometry_and_rasterizer(tmp_path):
    geometry = pytest.importorskip("palsyfuse.geometry")
    rasterizer = pytest.importorskip("palsyfuse.rasterizer")
    roles_path, contours_path = emit_rolemap("facemesh478", tmp_path)
    roles = geometry.RoleMap.from_json(roles_path)
    contours = rasterizer.ContourSet.from_json(contours_path)
    assert roles["forehead_mid"] == FACEMESH_ROLES["forehead_mid"]
    assert contours["face_silhouette"].closed


def test_primary_pipeline_runs_on_adapter_topology(tmp_path):
    """End to end: adapter fixtures drive the primary feature extractor."""
    pytest.importorskip("palsyfuse")
    import numpy as np
    from palsyfuse import geometry, rasterizer
    from palsyfuse.datamodel import LandmarkFrame, Source

    roles_path, contours_path = emit_rolemap("facemesh478", tmp_path)
    roles = geometry.RoleMap.from_json(roles_path)
    contours = rasterizer.ContourSet.from_json(contours_path)
    # an upright synthetic point cloud shaped loosely like the real topology:
    # roles placed consistently, everything else on an oval
    rng = np.random.default_rng(0)
    pts = 0.5 + 0.25 * (rng.random((478, 2)) - 0.5)
    pts[roles["forehead_mid"]] = (0.5, 0.2)
    pts[roles["chin"]] = (0.5, 0.8)
    for side, x in (("l", 0.62), ("r", 0.38)):
        pts[roles[f"eye_inner_{side}"]] = (0.5 + (x - 0.5) * 0.4, 0.42)
        pts[roles[f"eye_outer_{side}"]] = (x + (x - 0.5) * 0.2, 0.42)
        pts[roles[f"eye_top_{side}"]] = (x, 0.40)
        pts[roles[f"eye_bottom_{side}"]] = (x, 0.44)
    frame = LandmarkFrame("s", "f0000", Source.PALSY_VIDEO, pts)
    features = geometry.handcrafted29(frame, roles)
    assert features.values.shape == (29,)
    img = rasterizer.render_line_segments(frame, contours, (32, 32))
    assert img.to_array().max() == 255
