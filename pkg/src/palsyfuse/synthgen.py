"""Deterministic parametric generator of synthetic subjects.

A neutral 478-point face template is built procedurally (ellipse silhouette,
placed role points, spiral filler). Per-frame deformations animate talking
(jaw, smile, blinks) and, for affected subjects, displace one side of the
face: mouth-corner droop, incomplete eye closure with a widened fissure, and
brow drop. Every stochastic draw flows through a seeded xoshiro256** stream,
so output is a pure function of the subject spec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .datamodel import (Intensity, LandmarkFrame, N_LANDMARKS, RegionLabel, Source)
from .errors import SchemaError
from .rng import Xoshiro256StarStar, derive_seed

# ---------------------------------------------------------------------------
# topology: index layout of the synthetic 478-point face

SILHOUETTE = tuple(range(0, 36))
EYEBROW_L = tuple(range(36, 41))
EYEBROW_R = tuple(range(41, 46))
EYE_L = tuple(range(46, 54))
EYE_R = tuple(range(54, 62))
LIP_OUTER = tuple(range(62, 74))
LIP_INNER = tuple(range(74, 82))
NOSE = tuple(range(82, 87))
FILLER_START = 87

FACE_CX = 0.5
FACE_CY = 0.5
FACE_RX = 0.20
FACE_RY = 0.26

EYE_CY = 0.44
EYE_CX_L = 0.40
EYE_CX_R = 0.60
EYE_RX = 0.045
EYE_RY = 0.016

MOUTH_CX = 0.5
MOUTH_CY = 0.62
MOUTH_RX = 0.075
MOUTH_RY = 0.028

# interocular distance of the neutral template
TEMPLATE_D = EYE_CX_R - EYE_CX_L

ROLE_INDICES = {
    "forehead_mid": 0,
    "chin": 18,
    "nose_tip": 84,
    "upper_lip_mid": 71,
    "lower_lip_mid": 65,
    "eyebrow_inner_l": 36, "eyebrow_mid_l": 38, "eyebrow_outer_l": 40,
    "eyebrow_inner_r": 41, "eyebrow_mid_r": 43, "eyebrow_outer_r": 45,
    "eye_inner_l": 46, "eye_bottom_l": 48, "eye_outer_l": 50, "eye_top_l": 52,
    "eye_inner_r": 54, "eye_bottom_r": 56, "eye_outer_r": 58, "eye_top_r": 60,
    "mouth_corner_l": 68, "mouth_corner_r": 62,
}

CONTOUR_INDICES = {
    "face_silhouette": {"indices": list(SILHOUETTE), "closed": True},
    "eyebrow_l": {"indices": list(EYEBROW_L), "closed": False},
    "eyebrow_r": {"indices": list(EYEBROW_R), "closed": False},
    "eye_l": {"indices": list(EYE_L), "closed": True},
    "eye_r": {"indices": list(EYE_R), "closed": True},
    "lip_outer": {"indices": list(LIP_OUTER), "closed": True},
    "lip_inner": {"indices": list(LIP_INNER), "closed": True},
}

BLENDSHAPE_NAMES = (
    "browDownLeft", "browDownRight", "browInnerUp", "browOuterUpLeft", "browOuterUpRight",
    "cheekPuff", "cheekSquintLeft", "cheekSquintRight",
    "eyeBlinkLeft", "eyeBlinkRight", "eyeLookDownLeft", "eyeLookDownRight",
    "eyeLookInLeft", "eyeLookInRight", "eyeLookOutLeft", "eyeLookOutRight",
    "eyeLookUpLeft", "eyeLookUpRight", "eyeSquintLeft", "eyeSquintRight",
    "eyeWideLeft", "eyeWideRight",
    "jawForward", "jawLeft", "jawOpen", "jawRight",
    "mouthClose", "mouthDimpleLeft", "mouthDimpleRight", "mouthFrownLeft", "mouthFrownRight",
    "mouthFunnel", "mouthLeft", "mouthLowerDownLeft", "mouthLowerDownRight",
    "mouthPressLeft", "mouthPressRight", "mouthPucker", "mouthRight",
    "mouthRollLower", "mouthRollUpper", "mouthShrugLower", "mouthShrugUpper",
    "mouthSmileLeft", "mouthSmileRight", "mouthStretchLeft", "mouthStretchRight",
    "mouthUpperUpLeft", "mouthUpperUpRight",
    "noseSneerLeft", "noseSneerRight", "tongueOut",
)

_BS = {name: i for i, name in enumerate(BLENDSHAPE_NAMES)}

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _mirror_x(x: float) -> float:
    return 2.0 * FACE_CX - x


def neutral_template() -> np.ndarray:
    """The canonical neutral 478-point template, exactly mirror-symmetric."""
    pts = np.zeros((N_LANDMARKS, 2))

    # silhouette: build the x >= 0.5 half, mirror the rest
    for i in range(0, 19):
        th = 2.0 * math.pi * i / 36.0
        pts[i] = (FACE_CX + FACE_RX * math.sin(th), FACE_CY - FACE_RY * math.cos(th))
    pts[0] = (FACE_CX, FACE_CY - FACE_RY)
    pts[18] = (FACE_CX, FACE_CY + FACE_RY)
    for i in range(1, 18):
        pts[36 - i] = (_mirror_x(pts[i, 0]), pts[i, 1])

    # left eyebrow (inner -> outer), right is the elementwise mirror
    brow_xs = (0.445, 0.420, 0.395, 0.370, 0.345)
    brow_ys = (0.385, 0.378, 0.375, 0.378, 0.385)
    for k in range(5):
        pts[36 + k] = (brow_xs[k], brow_ys[k])
        pts[41 + k] = (_mirror_x(brow_xs[k]), brow_ys[k])

    # left eye (8 points at 45-degree steps, k=0 toward the nose)
    for k in range(8):
        phi = math.pi * k / 4.0
        pts[46 + k] = (EYE_CX_L + EYE_RX * math.cos(phi), EYE_CY + EYE_RY * math.sin(phi))
    pts[48] = (EYE_CX_L, EYE_CY + EYE_RY)
    pts[52] = (EYE_CX_L, EYE_CY - EYE_RY)
    for k in range(8):
        pts[54 + k] = (_mirror_x(pts[46 + k, 0]), pts[46 + k, 1])

    # outer lip: x >= 0.5 half (k = 0,1,2,11,10) mirrored onto k = 6,5,4,7,8
    for k in (0, 1, 2, 10, 11):
        phi = math.pi * k / 6.0
        pts[62 + k] = (MOUTH_CX + MOUTH_RX * math.cos(phi), MOUTH_CY + MOUTH_RY * math.sin(phi))
    pts[65] = (MOUTH_CX, MOUTH_CY + MOUTH_RY)
    pts[71] = (MOUTH_CX, MOUTH_CY - MOUTH_RY)
    for k, src in ((6, 0), (5, 1), (4, 2), (7, 11), (8, 10)):
        pts[62 + k] = (_mirror_x(pts[62 + src, 0]), pts[62 + src, 1])

    # inner lip (thin ellipse), same mirroring scheme
    irx, iry = 0.050, 0.010
    for k in (0, 1, 7):
        phi = math.pi * k / 4.0
        pts[74 + k] = (MOUTH_CX + irx * math.cos(phi), MOUTH_CY + iry * math.sin(phi))
    pts[76] = (MOUTH_CX, MOUTH_CY + iry)
    pts[80] = (MOUTH_CX, MOUTH_CY - iry)
    for k, src in ((4, 0), (3, 1), (5, 7)):
        pts[74 + k] = (_mirror_x(pts[74 + src, 0]), pts[74 + src, 1])

    # nose bridge, tip, nostrils
    pts[82] = (FACE_CX, 0.47)
    pts[83] = (FACE_CX, 0.50)
    pts[84] = (FACE_CX, 0.53)
    pts[85] = (0.47, 0.545)
    pts[86] = (_mirror_x(0.47), 0.545)

    # filler: deterministic spiral inside the face ellipse
    n_fill = N_LANDMARKS - FILLER_START
    for k in range(n_fill):
        r = math.sqrt((k + 0.5) / n_fill)
        th = k * _GOLDEN_ANGLE
        pts[FILLER_START + k] = (FACE_CX + 0.88 * FACE_RX * r * math.cos(th),
                                 FACE_CY + 0.88 * FACE_RY * r * math.sin(th))
    # snap to 9 decimals: keeps the template identical across libm variants,
    # so downstream rasterization is platform-stable
    return np.round(pts, 9)


class DroopSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class SynthFaceParams:
    """Everything that determines one rendered face."""

    seed: int
    droop_side: DroopSide = DroopSide.LEFT
    mouth_droop: float = 0.0
    eye_closure_asym: float = 0.0
    brow_drop: float = 0.0
    expression_phase: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self):
        for name in ("mouth_droop", "eye_closure_asym", "brow_drop"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise SchemaError(f"{name} must be in [0,1], got {v}")
        if not (0.0 <= self.expression_phase < 1.0):
            raise SchemaError(f"expression_phase must be in [0,1), got {self.expression_phase}")
        if self.jitter_sigma < 0.0:
            raise SchemaError(f"jitter_sigma must be >= 0, got {self.jitter_sigma}")


@dataclass(frozen=True)
class SynthSubjectSpec:
    """One synthetic subject: identity, condition, and sampling seed."""

    subject_id: str
    is_palsy: bool
    severity: float
    frame_count: int
    seed: int
    jitter_sigma: float = 0.01

    def __post_init__(self):
        if not self.is_palsy and self.severity != 0.0:
            raise SchemaError("healthy subject must have severity 0")
        if not (0.0 <= self.severity <= 1.0):
            raise SchemaError(f"severity must be in [0,1], got {self.severity}")
        if self.frame_count <= 0:
            raise SchemaError("frame_count must be positive")
        if self.jitter_sigma < 0.0:
            raise SchemaError("jitter_sigma must be >= 0")


def _side_weight(x: float, affected_left: bool, amount: float) -> float:
    """Motion attenuation on the affected half of the face."""
    if abs(x - FACE_CX) < 1e-9:
        return 1.0 - 0.5 * 0.7 * amount
    on_left = x < FACE_CX
    return 1.0 - 0.7 * amount if on_left == affected_left else 1.0


def deform_template(params: SynthFaceParams) -> np.ndarray:
    """Apply talk animation, palsy displacements, and jitter to the template."""
    pts = neutral_template()
    rng = Xoshiro256StarStar(params.seed)

    phase = params.expression_phase
    jaw = 0.5 - 0.5 * math.cos(2.0 * math.pi * phase)
    smile = 0.25 + 0.25 * math.sin(2.0 * math.pi * phase + 1.3)
    blink = max(0.0, math.sin(4.0 * math.pi * phase + 4.0)) ** 8
    openness = 1.0 - 0.8 * blink

    left_affected = params.droop_side is DroopSide.LEFT
    dm = params.mouth_droop
    de = params.eye_closure_asym
    db = params.brow_drop

    # --- mouth: jaw open / smile, attenuated on the weak side
    for k in range(12):
        i = 62 + k
        w = _side_weight(pts[i, 0], left_affected, dm)
        if 1 <= k <= 5:
            pts[i, 1] += 0.055 * jaw * w
        elif 7 <= k <= 11:
            pts[i, 1] -= 0.012 * jaw * w
    for k in range(8):
        i = 74 + k
        w = _side_weight(pts[i, 0], left_affected, dm)
        if 1 <= k <= 3:
            pts[i, 1] += 0.040 * jaw * w
        elif 5 <= k <= 7:
            pts[i, 1] -= 0.008 * jaw * w

    for corner, sign in ((62, 1.0), (68, -1.0)):
        w = _side_weight(pts[corner, 0], left_affected, dm)
        pts[corner, 0] += sign * 0.015 * smile * w
        pts[corner, 1] -= 0.010 * smile * w

    # droop: affected corner and its outer-lip neighbours sag
    corner = 68 if left_affected else 62
    droop_dy = 0.07 * dm
    pts[corner, 1] += droop_dy
    for nb in ((67, 69) if left_affected else (63, 73)):
        pts[nb, 1] += 0.5 * droop_dy
    inner_corner = 78 if left_affected else 74
    pts[inner_corner, 1] += 0.6 * droop_dy

    # chin follows the jaw slightly
    for i in (17, 18, 19):
        pts[i, 1] += 0.010 * jaw

    # --- eyes: vertical scaling about each eye centre
    open_healthy = openness
    open_affected = 1.0 - (1.0 - openness) * (1.0 - 0.85 * de)
    widen = 1.0 + 0.60 * de
    m_l = open_affected * widen if left_affected else open_healthy
    m_r = open_healthy if left_affected else open_affected * widen
    for base, m in ((46, m_l), (54, m_r)):
        for k in range(8):
            pts[base + k, 1] = EYE_CY + (pts[base + k, 1] - EYE_CY) * m

    # --- brows: symmetric animation plus affected-side drop
    anim = -0.006 * math.sin(2.0 * math.pi * phase + 0.7)
    for i in list(EYEBROW_L) + list(EYEBROW_R):
        pts[i, 1] += anim
    brow = EYEBROW_L if left_affected else EYEBROW_R
    for i in brow:
        pts[i, 1] += 0.024 * db

    # --- landmark jitter in units of the interocular distance
    if params.jitter_sigma > 0.0:
        sigma = params.jitter_sigma * TEMPLATE_D
        for i in range(N_LANDMARKS):
            pts[i, 0] += rng.normal(0.0, sigma)
            pts[i, 1] += rng.normal(0.0, sigma)

    return pts


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def synth_blendshapes(params: SynthFaceParams) -> np.ndarray:
    """52 expression coefficients consistent with the geometric deformation."""
    phase = params.expression_phase
    jaw = 0.5 - 0.5 * math.cos(2.0 * math.pi * phase)
    smile = 0.25 + 0.25 * math.sin(2.0 * math.pi * phase + 1.3)
    blink = max(0.0, math.sin(4.0 * math.pi * phase + 4.0)) ** 8
    openness = 1.0 - 0.8 * blink

    left_affected = params.droop_side is DroopSide.LEFT
    dm, de, db = params.mouth_droop, params.eye_closure_asym, params.brow_drop

    open_affected = 1.0 - (1.0 - openness) * (1.0 - 0.85 * de)
    widen = 1.0 + 0.60 * de
    m_aff = open_affected * widen
    m_l, m_r = (m_aff, openness) if left_affected else (openness, m_aff)
    weak = 1.0 - 0.7 * dm

    b = np.zeros(len(BLENDSHAPE_NAMES))

    def put(name: str, value: float) -> None:
        b[_BS[name]] = _clamp01(value)

    put("eyeBlinkLeft", 1.0 - m_l)
    put("eyeBlinkRight", 1.0 - m_r)
    put("eyeWideLeft", m_l - 1.0)
    put("eyeWideRight", m_r - 1.0)
    put("jawOpen", jaw)
    put("mouthSmileLeft", smile * (weak if left_affected else 1.0))
    put("mouthSmileRight", smile * (1.0 if left_affected else weak))
    put("mouthFrownLeft", 0.9 * dm if left_affected else 0.05 * jaw)
    put("mouthFrownRight", 0.05 * jaw if left_affected else 0.9 * dm)
    put("browDownLeft", db if left_affected else 0.05 * smile)
    put("browDownRight", 0.05 * smile if left_affected else db)
    put("browInnerUp", 0.1 + 0.1 * math.sin(2.0 * math.pi * phase + 0.7))
    put("mouthPucker", 0.15 + 0.15 * math.sin(2.0 * math.pi * phase + 2.1))
    put("mouthFunnel", 0.2 * jaw)
    put("mouthClose", 0.3 * (1.0 - jaw))
    put("cheekPuff", 0.08 + 0.08 * math.sin(math.pi * phase))
    gaze = 0.1 + 0.1 * math.sin(2.0 * math.pi * 0.7 * phase + 0.3)
    for name in ("eyeLookInLeft", "eyeLookInRight", "eyeLookOutLeft", "eyeLookOutRight"):
        put(name, gaze)
    put("eyeSquintLeft", 0.3 * (1.0 - m_l))
    put("eyeSquintRight", 0.3 * (1.0 - m_r))
    put("mouthStretchLeft", 0.2 * jaw * (weak if left_affected else 1.0))
    put("mouthStretchRight", 0.2 * jaw * (1.0 if left_affected else weak))
    put("mouthLowerDownLeft", 0.4 * jaw * (weak if left_affected else 1.0))
    put("mouthLowerDownRight", 0.4 * jaw * (1.0 if left_affected else weak))
    return b


def frame_from_params(params: SynthFaceParams, subject_id: str = "synth",
                      frame_id: str = "f0000", source: Source = Source.SYNTHETIC,
                      label=None) -> LandmarkFrame:
    return LandmarkFrame(subject_id=subject_id, frame_id=frame_id, source=source,
                         landmarks=deform_template(params),
                         blendshapes=synth_blendshapes(params), label=label)


def intensity_from_severity(x: float) -> Intensity:
    """Severity in [0,1] -> label level (thresholds 1/3 and 2/3)."""
    if x < 1.0 / 3.0:
        return Intensity.NORMAL
    if x < 2.0 / 3.0:
        return Intensity.SLIGHT
    return Intensity.STRONG


# displacement magnitude per labelled level, plus an in-class wobble
_LEVEL_EFFECT = {
    Intensity.NORMAL: (0.0, 0.04),
    Intensity.SLIGHT: (0.42, 0.12),
    Intensity.STRONG: (0.78, 0.18),
}


def _level_effect(level: Intensity, wobble: float) -> float:
    base, spread = _LEVEL_EFFECT[level]
    return base + spread * wobble


def generate_subject(spec: SynthSubjectSpec) -> list[LandmarkFrame]:
    """All frames for one subject; deterministic in the spec."""
    subject_rng = Xoshiro256StarStar(derive_seed(spec.seed, "subject", spec.subject_id))
    droop_side = DroopSide.LEFT if subject_rng.next_u64() & 1 else DroopSide.RIGHT
    phase_offset = subject_rng.uniform()

    frames: list[LandmarkFrame] = []
    for i in range(spec.frame_count):
        frame_rng = Xoshiro256StarStar(derive_seed(spec.seed, "frame", spec.subject_id, i))
        phase = (phase_offset + 0.137 * i + 0.02 * frame_rng.uniform()) % 1.0

        if spec.is_palsy:
            sev_eyes = _clamp01(spec.severity + 0.12 * frame_rng.normal())
            sev_mouth = _clamp01(spec.severity + 0.12 * frame_rng.normal())
            label = RegionLabel(eyes=intensity_from_severity(sev_eyes),
                                mouth=intensity_from_severity(sev_mouth))
            eff_eyes = _level_effect(label.eyes, frame_rng.uniform())
            eff_mouth = _level_effect(label.mouth, frame_rng.uniform())
        else:
            label = RegionLabel(eyes=Intensity.NORMAL, mouth=Intensity.NORMAL)
            eff_eyes = 0.0
            eff_mouth = 0.0

        params = SynthFaceParams(
            seed=derive_seed(spec.seed, "jitter", spec.subject_id, i),
            droop_side=droop_side,
            mouth_droop=eff_mouth,
            eye_closure_asym=eff_eyes,
            brow_drop=_clamp01(0.6 * eff_eyes),
            expression_phase=phase,
            jitter_sigma=spec.jitter_sigma,
        )
        frames.append(frame_from_params(
            params, subject_id=spec.subject_id, frame_id=f"f{i:04d}",
            source=Source.SYNTHETIC, label=label))
    return frames


def generate_dataset(n_palsy: int, n_healthy: int, frames_per_subject: int,
                     seed: int, jitter_sigma: float = 0.01,
                     severity_range: tuple[float, float] = (0.5, 1.0)) -> list[LandmarkFrame]:
    """A full synthetic cohort: palsy subjects drawn in the severity range."""
    rng = Xoshiro256StarStar(derive_seed(seed, "cohort"))
    frames: list[LandmarkFrame] = []
    for k in range(n_palsy):
        severity = rng.uniform_in(*severity_range)
        spec = SynthSubjectSpec(subject_id=f"palsy{k:03d}", is_palsy=True,
                                severity=severity, frame_count=frames_per_subject,
                                seed=derive_seed(seed, "palsy", k),
                                jitter_sigma=jitter_sigma)
        frames.extend(generate_subject(spec))
    for k in range(n_healthy):
        spec = SynthSubjectSpec(subject_id=f"healthy{k:03d}", is_palsy=False,
                                severity=0.0, frame_count=frames_per_subject,
                                seed=derive_seed(seed, "healthy", k),
                                jitter_sigma=jitter_sigma)
        frames.extend(generate_subject(spec))
    return frames
