"""Image modalities: white-on-black contour renderings and shaded RGB sketches.

All rendering uses integer Bresenham strokes and scanline fills driven purely
by the input landmarks, so identical inputs produce byte-identical images on
every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .datamodel import ImageBuffer, LandmarkFrame, N_LANDMARKS
from .errors import SchemaError

CONTOUR_NAMES = ("face_silhouette", "eyebrow_l", "eyebrow_r",
                 "eye_l", "eye_r", "lip_outer", "lip_inner")

MIN_RENDER_SIZE = 16


@dataclass(frozen=True)
class Contour:
    indices: tuple
    closed: bool


@dataclass(frozen=True)
class ContourSet:
    """Ordered landmark-index polylines for the face outline and local regions."""

    contours: dict  # name -> Contour

    def __post_init__(self):
        missing = [n for n in CONTOUR_NAMES if n not in self.contours]
        if missing:
            raise SchemaError(f"contour set missing: {missing}")
        for name, c in self.contours.items():
            if name not in CONTOUR_NAMES:
                raise SchemaError(f"unknown contour {name!r}")
            if len(c.indices) < 2:
                raise SchemaError(f"contour {name}: needs at least 2 points")
            for i in c.indices:
                if not isinstance(i, int) or isinstance(i, bool) or not (0 <= i < N_LANDMARKS):
                    raise SchemaError(f"contour {name}: index {i!r} out of range")

    def __getitem__(self, name: str) -> Contour:
        return self.contours[name]

    @classmethod
    def from_json(cls, path) -> "ContourSet":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: not valid JSON: {e}") from e
        return cls.from_json_obj(obj, where=str(path))

    @classmethod
    def from_json_obj(cls, obj, where: str = "contours") -> "ContourSet":
        if not isinstance(obj, dict):
            raise SchemaError(f"{where}: contour set must be a JSON object")
        contours = {}
        for name, spec in obj.items():
            try:
                contours[str(name)] = Contour(indices=tuple(int(i) for i in spec["indices"]),
                                              closed=bool(spec["closed"]))
            except (KeyError, TypeError, ValueError) as e:
                raise SchemaError(f"{where}: contour {name}: {e}") from e
        return cls(contours)

    def to_json_obj(self) -> dict:
        return {name: {"indices": list(c.indices), "closed": c.closed}
                for name, c in self.contours.items()}


def default_contours() -> ContourSet:
    """Contour set for the bundled synthetic 478-point topology."""
    text = resources.files("palsyfuse").joinpath("fixtures/contours.json").read_text("utf-8")
    return ContourSet.from_json_obj(json.loads(text), where="bundled contours")


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer line pixels from (x0,y0) to (x1,y1), endpoints inclusive."""
    pixels = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        pixels.append((x, y))
        if x == x1 and y == y1:
            return pixels
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def to_pixel(coord: float, extent: int) -> int:
    """Normalized coordinate -> index of the containing pixel, clamped."""
    i = int(np.floor(coord * extent))
    return min(max(i, 0), extent - 1)


def _check_size(size: tuple[int, int]) -> tuple[int, int]:
    w, h = size
    if w < MIN_RENDER_SIZE or h < MIN_RENDER_SIZE:
        raise SchemaError(f"render size must be at least {MIN_RENDER_SIZE}x{MIN_RENDER_SIZE}, "
                          f"got {w}x{h}")
    return w, h


def _polyline_pixels(points_px: list[tuple[int, int]], closed: bool):
    segs = list(zip(points_px, points_px[1:]))
    if closed and len(points_px) > 2:
        segs.append((points_px[-1], points_px[0]))
    for (x0, y0), (x1, y1) in segs:
        yield from bresenham(x0, y0, x1, y1)


def _contour_points_px(frame: LandmarkFrame, contour: Contour, w: int, h: int):
    return [(to_pixel(frame.landmarks[i, 0], w), to_pixel(frame.landmarks[i, 1], h))
            for i in contour.indices]


def render_line_segments(frame: LandmarkFrame, contours: ContourSet,
                         size: tuple[int, int] = (64, 64)) -> ImageBuffer:
    """White 1-pixel polylines on black, one per contour."""
    w, h = _check_size(size)
    img = np.zeros((h, w), dtype=np.uint8)
    for name in CONTOUR_NAMES:
        pts = _contour_points_px(frame, contours[name], w, h)
        for x, y in _polyline_pixels(pts, contours[name].closed):
            img[y, x] = 255
    return ImageBuffer.from_array(img)


def _fill_polygon(img: np.ndarray, pts: list[tuple[float, float]], color) -> None:
    """Even-odd scanline fill over pixel centers."""
    if len(pts) < 3:
        return
    h, w = img.shape[:2]
    ys = [p[1] for p in pts]
    y_lo = max(int(np.floor(min(ys))), 0)
    y_hi = min(int(np.ceil(max(ys))), h - 1)
    n = len(pts)
    for row in range(y_lo, y_hi + 1):
        yc = row + 0.5
        xs = []
        for i in range(n):
            x0, y0 = pts[i]
            x1, y1 = pts[(i + 1) % n]
            if (y0 <= yc < y1) or (y1 <= yc < y0):
                xs.append(x0 + (yc - y0) * (x1 - x0) / (y1 - y0))
        xs.sort()
        for a, b in zip(xs[0::2], xs[1::2]):
            lo = max(int(np.ceil(a - 0.5)), 0)
            hi = min(int(np.floor(b - 0.5)), w - 1)
            if hi >= lo:
                img[row, lo:hi + 1] = color
    return


_SKIN = (224, 172, 138)
_STROKE = (92, 58, 42)
_EYE_WHITE = (246, 246, 246)
_MOUTH = (168, 62, 58)
_BACKGROUND = (28, 30, 36)


def render_face_sketch(frame: LandmarkFrame, contours: ContourSet,
                       size: tuple[int, int] = (64, 64)) -> ImageBuffer:
    """Deterministic shaded RGB sketch of a landmark frame.

    Skin fill from the silhouette polygon, eye and mouth region fills (their
    extent follows the landmark geometry, so openness and droop are visible),
    and dark contour strokes on top.
    """
    w, h = _check_size(size)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:, :] = _BACKGROUND

    def norm_pts(contour: Contour) -> list[tuple[float, float]]:
        return [(frame.landmarks[i, 0] * w, frame.landmarks[i, 1] * h)
                for i in contour.indices]

    _fill_polygon(img, norm_pts(contours["face_silhouette"]), _SKIN)
    _fill_polygon(img, norm_pts(contours["eye_l"]), _EYE_WHITE)
    _fill_polygon(img, norm_pts(contours["eye_r"]), _EYE_WHITE)
    _fill_polygon(img, norm_pts(contours["lip_outer"]), _MOUTH)

    for name in CONTOUR_NAMES:
        pts = _contour_points_px(frame, contours[name], w, h)
        for x, y in _polyline_pixels(pts, contours[name].closed):
            img[y, x] = _STROKE
    return ImageBuffer.from_array(img)


def render_synthetic_rgb(face_params, size: tuple[int, int] = (64, 64)) -> ImageBuffer:
    """RGB sketch of a synthetic face described by generator parameters."""
    from . import synthgen  # local import to avoid a cycle

    frame = synthgen.frame_from_params(face_params)
    return render_face_sketch(frame, default_contours(), size)
