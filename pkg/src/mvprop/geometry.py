"""Box representations and pixel/normalized coordinate conversions.

Boxes travel through the pipeline in YOLO-normalized form (center x, center y,
width, height, all in [0,1]) and are converted to pixel corners whenever motion
vectors or frame bounds are involved. All pixel coordinates are real-valued;
rounding per frame would accumulate drift under fractional motion-vector
displacements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional


class InvalidGeometryError(ValueError):
    """Raised when a box carries non-finite or otherwise unusable coordinates."""


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in pixel corner coordinates, tied to a frame size."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    frame_w: int
    frame_h: int

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0


@dataclass(frozen=True)
class YoloBox:
    """Normalized (center-x, center-y, width, height) box in [0,1]^4."""

    x_c: float
    y_c: float
    w: float
    h: float

    def as_list(self) -> list[float]:
        return [self.x_c, self.y_c, self.w, self.h]


@dataclass(frozen=True)
class Detection:
    box: YoloBox
    score: float
    label: str
    id: int = -1

    def with_box(self, box: YoloBox) -> "Detection":
        return replace(self, box=box)


def _require_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidGeometryError(f"non-finite coordinate: {v!r}")


def to_yolo(box: PixelBox) -> YoloBox:
    """Convert pixel corners to the normalized center/size representation."""
    _require_finite(box.x_min, box.y_min, box.x_max, box.y_max)
    if box.frame_w <= 0 or box.frame_h <= 0:
        raise InvalidGeometryError(f"frame size must be positive, got {box.frame_w}x{box.frame_h}")
    w_px, h_px = float(box.frame_w), float(box.frame_h)
    return YoloBox(
        x_c=(box.x_min + box.x_max) / (2.0 * w_px),
        y_c=(box.y_min + box.y_max) / (2.0 * h_px),
        w=(box.x_max - box.x_min) / w_px,
        h=(box.y_max - box.y_min) / h_px,
    )


def to_pixel(box: YoloBox, frame_w: int, frame_h: int) -> PixelBox:
    """Convert a normalized box back to pixel corners for the given frame size."""
    _require_finite(box.x_c, box.y_c, box.w, box.h)
    if frame_w <= 0 or frame_h <= 0:
        raise InvalidGeometryError(f"frame size must be positive, got {frame_w}x{frame_h}")
    return PixelBox(
        x_min=frame_w * (box.x_c - box.w / 2.0),
        x_max=frame_w * (box.x_c + box.w / 2.0),
        y_min=frame_h * (box.y_c - box.h / 2.0),
        y_max=frame_h * (box.y_c + box.h / 2.0),
        frame_w=frame_w,
        frame_h=frame_h,
    )


def area_px(box: YoloBox, frame_w: int, frame_h: int) -> float:
    """Box area in pixels squared: W * H * w * h."""
    return frame_w * frame_h * box.w * box.h


def clip_and_validate(
    box: YoloBox, frame_w: int, frame_h: int, min_area: float = 1.0
) -> Optional[YoloBox]:
    """Clip a box to the frame and drop it when the clipped extent is unusable.

    Returns the re-normalized clipped box, or None when the clipped pixel area
    falls below ``min_area`` or the extent collapses. Corners are clamped
    independently; a box fully outside the frame clips to zero extent and is
    dropped. Idempotent for boxes it accepts.
    """
    px = to_pixel(box, frame_w, frame_h)
    x_min = min(max(px.x_min, 0.0), float(frame_w))
    x_max = min(max(px.x_max, 0.0), float(frame_w))
    y_min = min(max(px.y_min, 0.0), float(frame_h))
    y_max = min(max(px.y_max, 0.0), float(frame_h))
    if x_max <= x_min or y_max <= y_min:
        return None
    if (x_max - x_min) * (y_max - y_min) < min_area:
        return None
    return to_yolo(PixelBox(x_min, y_min, x_max, y_max, frame_w, frame_h))


def iou(a: YoloBox, b: YoloBox) -> float:
    """Intersection over union of two boxes in the same normalized frame."""
    ax0, ax1 = a.x_c - a.w / 2.0, a.x_c + a.w / 2.0
    ay0, ay1 = a.y_c - a.h / 2.0, a.y_c + a.h / 2.0
    bx0, bx1 = b.x_c - b.w / 2.0, b.x_c + b.w / 2.0
    by0, by1 = b.y_c - b.h / 2.0, b.y_c + b.h / 2.0
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0.0 else 0.0
