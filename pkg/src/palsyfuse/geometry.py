"""Structured modalities from a landmark frame.

Builds a face-midline reference frame (forehead-to-chin axis, interocular
scale), then computes 29 handcrafted asymmetry features, the rigid-normalized
flattened coordinate vector, and the expression-coefficient passthrough.
All handcrafted values are clamped into [0,1] and all distances are
normalized by the interocular distance, so the features are invariant under
translation, rotation, and uniform scaling of the landmark set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .datamodel import FeatureKind, FeatureVector, LandmarkFrame, N_LANDMARKS
from .errors import GeometryError, ModalityUnavailableError, SchemaError

SIDED_ROLES = ("eyebrow_inner", "eyebrow_mid", "eyebrow_outer",
               "eye_inner", "eye_outer", "eye_top", "eye_bottom",
               "mouth_corner")

CENTER_ROLES = ("forehead_mid", "chin", "nose_tip", "upper_lip_mid", "lower_lip_mid")

ROLE_NAMES = tuple(CENTER_ROLES) + tuple(
    f"{r}_{side}" for r in SIDED_ROLES for side in ("l", "r"))

FEATURE_NAMES = tuple(f"F{i}" for i in range(1, 30))

_EPS = 1e-12


@dataclass(frozen=True)
class RoleMap:
    """Semantic landmark role -> index in [0, 478)."""

    indices: dict

    def __post_init__(self):
        missing = [r for r in ROLE_NAMES if r not in self.indices]
        if missing:
            raise SchemaError(f"role map missing roles: {missing}")
        extra = [r for r in self.indices if r not in ROLE_NAMES]
        if extra:
            raise SchemaError(f"role map has unknown roles: {extra}")
        vals = [self.indices[r] for r in ROLE_NAMES]
        for r, v in zip(ROLE_NAMES, vals):
            if not isinstance(v, int) or isinstance(v, bool) or not (0 <= v < N_LANDMARKS):
                raise SchemaError(f"role {r}: index {v!r} out of range [0, {N_LANDMARKS})")
        if len(set(vals)) != len(vals):
            raise SchemaError("role map indices must be distinct")

    def __getitem__(self, role: str) -> int:
        return self.indices[role]

    def swapped_sides(self) -> "RoleMap":
        """Exchange every left/right role pair (for reflection tests)."""
        out = dict(self.indices)
        for r in SIDED_ROLES:
            out[f"{r}_l"], out[f"{r}_r"] = out[f"{r}_r"], out[f"{r}_l"]
        return RoleMap(out)

    @classmethod
    def from_json(cls, path) -> "RoleMap":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: not valid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise SchemaError(f"{path}: role map must be a JSON object")
        return cls({str(k): v for k, v in obj.items()})

    def to_json_obj(self) -> dict:
        return dict(self.indices)


def default_role_map() -> RoleMap:
    """Role map for the bundled synthetic 478-point topology."""
    text = resources.files("palsyfuse").joinpath("fixtures/roles.json").read_text("utf-8")
    return RoleMap({str(k): v for k, v in json.loads(text).items()})


@dataclass(frozen=True)
class MidlineModel:
    """Face reference frame: origin at forehead, unit axis u toward the chin,
    unit horizontal h perpendicular to u, interocular scale D."""

    origin: np.ndarray
    u: np.ndarray
    h: np.ndarray
    D: float


def _eye_center(pts: np.ndarray, roles: RoleMap, side: str) -> np.ndarray:
    idx = [roles[f"eye_{part}_{side}"] for part in ("inner", "outer", "top", "bottom")]
    return pts[idx].mean(axis=0)


def build_midline(frame: LandmarkFrame, roles: RoleMap) -> MidlineModel:
    pts = frame.landmarks
    origin = pts[roles["forehead_mid"]]
    axis = pts[roles["chin"]] - origin
    norm = float(np.linalg.norm(axis))
    if norm < 1e-9:
        raise GeometryError("degenerate midline: forehead and chin coincide")
    u = axis / norm
    h = np.array([u[1], -u[0]])
    cl = _eye_center(pts, roles, "l")
    cr = _eye_center(pts, roles, "r")
    D = float(np.linalg.norm(cl - cr))
    if D < 1e-9:
        raise GeometryError("degenerate interocular distance: eye centers coincide")
    return MidlineModel(origin=origin.copy(), u=u, h=h, D=D)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _segment_angle(a: np.ndarray, b: np.ndarray, ref: np.ndarray, perp: np.ndarray) -> float:
    """Signed angle in degrees between segment a->b and the reference
    direction, folded to (-90, 90] so direction along the segment is moot."""
    v = b - a
    ang = math.degrees(math.atan2(float(v @ perp), float(v @ ref)))
    if ang > 90.0:
        ang -= 180.0
    elif ang <= -90.0:
        ang += 180.0
    return ang


def _inclination(a, b, mid: MidlineModel) -> float:
    """Angle of segment vs the horizontal h, folded."""
    return _segment_angle(a, b, mid.h, mid.u)


def _a_of(theta: float) -> float:
    return min(abs(theta), 45.0) / 45.0


def _ratio(x: float, y: float) -> float:
    m = max(x, y)
    return 1.0 if m < _EPS else min(x, y) / m


def _safe_div01(num: float, den: float) -> float:
    """num/den clamped to [0,1]; total even when den collapses."""
    if den < _EPS:
        return 0.0 if num < _EPS else 1.0
    return _clamp01(num / den)


def _mirror(p: np.ndarray, mid: MidlineModel) -> np.ndarray:
    return p - 2.0 * float((p - mid.origin) @ mid.h) * mid.h


def handcrafted29(frame: LandmarkFrame, roles: RoleMap) -> FeatureVector:
    """The 29 asymmetry features, canonical order F1..F29.

    Categories: segment inclinations and their left/right disagreement
    (F1-F8), fissure and aspect measurements with min/max ratios (F9-F17),
    mouth-corner geometry (F18-F25), midline deviations (F26-F28), and the
    mean mirror-reflection residual (F29).
    """
    pts = frame.landmarks
    mid = build_midline(frame, roles)
    D = mid.D

    def p(role: str) -> np.ndarray:
        return pts[roles[role]]

    def dml(q: np.ndarray) -> float:
        return abs(float((q - mid.origin) @ mid.h))

    f = np.zeros(29)

    # eyebrow / eye / mouth segment inclinations
    th_brow_l = _inclination(p("eyebrow_inner_l"), p("eyebrow_outer_l"), mid)
    th_brow_r = _inclination(p("eyebrow_inner_r"), p("eyebrow_outer_r"), mid)
    f[0] = _a_of(th_brow_l)                                   # F1
    f[1] = _a_of(th_brow_r)                                   # F2
    f[2] = min(abs(th_brow_l - th_brow_r), 45.0) / 45.0       # F3

    th_eye_l = _inclination(p("eye_inner_l"), p("eye_outer_l"), mid)
    th_eye_r = _inclination(p("eye_inner_r"), p("eye_outer_r"), mid)
    f[3] = _a_of(th_eye_l)                                    # F4
    f[4] = _a_of(th_eye_r)                                    # F5
    f[5] = min(abs(th_eye_l - th_eye_r), 45.0) / 45.0         # F6

    f[6] = _a_of(_inclination(p("mouth_corner_r"), p("mouth_corner_l"), mid))  # F7
    # lip axis vs the vertical u, folded the same way
    f[7] = _a_of(_segment_angle(p("upper_lip_mid"), p("lower_lip_mid"), mid.u, mid.h))  # F8

    # palpebral fissures
    gap_l = float(np.linalg.norm(p("eye_top_l") - p("eye_bottom_l")))
    gap_r = float(np.linalg.norm(p("eye_top_r") - p("eye_bottom_r")))
    f[8] = _clamp01(gap_l / D)                                # F9
    f[9] = _clamp01(gap_r / D)                                # F10
    f[10] = _ratio(f[8], f[9])                                # F11

    width_l = float(np.linalg.norm(p("eye_inner_l") - p("eye_outer_l")))
    width_r = float(np.linalg.norm(p("eye_inner_r") - p("eye_outer_r")))
    f[11] = _safe_div01(gap_l, width_l)                       # F12
    f[12] = _safe_div01(gap_r, width_r)                       # F13
    f[13] = _ratio(f[11], f[12])                              # F14

    lift_l = float(np.linalg.norm(p("eyebrow_mid_l") - p("eye_top_l")))
    lift_r = float(np.linalg.norm(p("eyebrow_mid_r") - p("eye_top_r")))
    f[14] = _clamp01(lift_l / D)                              # F15
    f[15] = _clamp01(lift_r / D)                              # F16
    f[16] = _ratio(f[14], f[15])                              # F17

    # mouth corners
    mc_l, mc_r = p("mouth_corner_l"), p("mouth_corner_r")
    f[17] = _clamp01(dml(mc_l) / D)                           # F18
    f[18] = _clamp01(dml(mc_r) / D)                           # F19
    f[19] = _ratio(f[17], f[18])                              # F20

    mouth_center = 0.5 * (p("upper_lip_mid") + p("lower_lip_mid"))
    f[20] = _clamp01(abs(float((mc_l - mouth_center) @ mid.u)) / (0.5 * D))   # F21
    f[21] = _clamp01(abs(float((mc_r - mouth_center) @ mid.u)) / (0.5 * D))   # F22
    f[22] = _clamp01(abs(float((mc_l - mc_r) @ mid.u)) / (0.5 * D))           # F23

    f[23] = _clamp01(float(np.linalg.norm(mc_l - mc_r)) / (2.0 * D))          # F24
    f[24] = _clamp01(float(np.linalg.norm(p("upper_lip_mid") - p("lower_lip_mid"))) / D)  # F25

    # midline deviations of the central landmarks
    f[25] = _clamp01(dml(p("nose_tip")) / (0.5 * D))          # F26
    f[26] = _clamp01(dml(p("upper_lip_mid")) / (0.5 * D))     # F27
    f[27] = _clamp01(dml(p("lower_lip_mid")) / (0.5 * D))     # F28

    # mean mirror residual over the bilateral role pairs
    total = 0.0
    for role in SIDED_ROLES:
        total += float(np.linalg.norm(_mirror(p(f"{role}_r"), mid) - p(f"{role}_l"))) / D
    f[28] = _clamp01(total / len(SIDED_ROLES))                # F29

    return FeatureVector(kind=FeatureKind.HANDCRAFTED29, values=f,
                         subject_id=frame.subject_id, frame_id=frame.frame_id)


def flatten_coordinates(frame: LandmarkFrame, roles: RoleMap) -> FeatureVector:
    """Rigid-normalized coordinates flattened row-major to 956 values.

    Origin: midpoint of the two eye centers. Axes: the midline directions,
    so u maps to (0,1) and h to (1,0). Scale: 1/D.
    """
    mid = build_midline(frame, roles)
    pts = frame.landmarks
    center = 0.5 * (_eye_center(pts, roles, "l") + _eye_center(pts, roles, "r"))
    rel = pts - center
    xs = rel @ mid.h / mid.D
    ys = rel @ mid.u / mid.D
    values = np.stack([xs, ys], axis=1).reshape(-1)
    return FeatureVector(kind=FeatureKind.COORDINATES956, values=values,
                         subject_id=frame.subject_id, frame_id=frame.frame_id)


def expression_features(frame: LandmarkFrame) -> FeatureVector:
    """Verbatim copy of the 52 expression coefficients."""
    if frame.blendshapes is None:
        raise ModalityUnavailableError(
            f"frame {frame.subject_id}/{frame.frame_id} has no expression coefficients")
    return FeatureVector(kind=FeatureKind.EXPRESSION52, values=frame.blendshapes.copy(),
                         subject_id=frame.subject_id, frame_id=frame.frame_id)
