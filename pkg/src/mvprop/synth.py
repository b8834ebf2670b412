"""Synthetic scene generator: the desk-scale oracle for propagation.

Scenes are image-free. Each object is a rectangle following an analytic motion
model; for every frame t >= 1 the generator emits one motion vector per
macroblock overlapping the object at t-1, with the source at the block center
and the destination displaced per the model. Ground-truth boxes are exact, and
the companion detection file carries the exact ground truth at score 1.0 on
every frame so any keyframe schedule can sample it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Detection, PixelBox, YoloBox, to_yolo
from .mvstream import MvFrame, MotionVector, PAST, serialize_mv_dump


class SceneSpecError(ValueError):
    """The requested scene is unrealizable (object leaves the frame, etc.)."""


@dataclass(frozen=True)
class Translate:
    u: float
    v: float
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class Zoom:
    s: float  # per-frame scale factor about the box center
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class Parallax:
    """Two-layer motion: left half of the object moves with ``near``,
    right half with ``far``; the ground-truth box follows their mean."""

    near: tuple[float, float]
    far: tuple[float, float]
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class Jitter:
    """No coherent motion: every vector gets an i.i.d. uniform displacement
    in [-amplitude, amplitude] per component; the box itself is static."""

    amplitude: float


MotionModel = Translate | Zoom | Parallax | Jitter


@dataclass(frozen=True)
class ObjectSpec:
    box: tuple[float, float, float, float]  # pixel corners at frame 0
    motion: MotionModel
    label: str = "object"


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    frames: int
    objects: tuple[ObjectSpec, ...]
    block: int = 16
    seed: int = 0
    video: str = "synth"


@dataclass
class SynthScene:
    spec: SceneSpec
    mv_frames: list[MvFrame]
    # gt_boxes[t][k] is the pixel box of object k at frame t
    gt_boxes: list[list[PixelBox]]

    def gt_yolo(self, t: int, k: int) -> YoloBox:
        return to_yolo(self.gt_boxes[t][k])

    def write_mv_dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            serialize_mv_dump(self.mv_frames, fh)

    def write_ground_truth(self, path) -> None:
        spec = self.spec
        with open(path, "w", encoding="utf-8") as fh:
            for t in range(spec.frames):
                boxes = [
                    {"box": to_yolo(b).as_list(), "label": obj.label}
                    for b, obj in zip(self.gt_boxes[t], spec.objects)
                ]
                fh.write(
                    json.dumps({"video": spec.video, "frame": t, "boxes": boxes}) + "\n"
                )

    def write_detections(self, path) -> None:
        spec = self.spec
        with open(path, "w", encoding="utf-8") as fh:
            for t in range(spec.frames):
                dets = [
                    {"box": to_yolo(b).as_list(), "score": 1.0, "label": obj.label}
                    for b, obj in zip(self.gt_boxes[t], spec.objects)
                ]
                fh.write(
                    json.dumps({"video": spec.video, "frame": t, "detections": dets})
                    + "\n"
                )

    def write_all(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "mv_dump": out / f"{self.spec.video}.mvs",
            "ground_truth": out / f"{self.spec.video}.gt.jsonl",
            "detections": out / f"{self.spec.video}.det.jsonl",
        }
        self.write_mv_dump(paths["mv_dump"])
        self.write_ground_truth(paths["ground_truth"])
        self.write_detections(paths["detections"])
        return paths


def _advance(box: PixelBox, motion: MotionModel) -> PixelBox:
    """Exact ground-truth box at the next frame."""
    if isinstance(motion, Translate):
        dx, dy = motion.u, motion.v
        return PixelBox(
            box.x_min + dx, box.y_min + dy, box.x_max + dx, box.y_max + dy,
            box.frame_w, box.frame_h,
        )
    if isinstance(motion, Zoom):
        cx, cy = box.center
        hw = box.width * motion.s / 2.0
        hh = box.height * motion.s / 2.0
        return PixelBox(cx - hw, cy - hh, cx + hw, cy + hh, box.frame_w, box.frame_h)
    if isinstance(motion, Parallax):
        dx = (motion.near[0] + motion.far[0]) / 2.0
        dy = (motion.near[1] + motion.far[1]) / 2.0
        return PixelBox(
            box.x_min + dx, box.y_min + dy, box.x_max + dx, box.y_max + dy,
            box.frame_w, box.frame_h,
        )
    if isinstance(motion, Jitter):
        return box
    raise TypeError(f"unknown motion model: {motion!r}")


def _displacement(
    motion: MotionModel, px: float, py: float, box: PixelBox, rng: np.random.Generator
) -> tuple[float, float]:
    """Model displacement at source position (px, py) for the given frame."""
    if isinstance(motion, Translate):
        u, v = motion.u, motion.v
        sigma = motion.noise_sigma
    elif isinstance(motion, Zoom):
        cx, cy = box.center
        u = (motion.s - 1.0) * (px - cx)
        v = (motion.s - 1.0) * (py - cy)
        sigma = motion.noise_sigma
    elif isinstance(motion, Parallax):
        cx, _ = box.center
        u, v = motion.near if px < cx else motion.far
        sigma = motion.noise_sigma
    elif isinstance(motion, Jitter):
        du, dv = rng.uniform(-motion.amplitude, motion.amplitude, size=2)
        return float(du), float(dv)
    else:
        raise TypeError(f"unknown motion model: {motion!r}")
    if sigma > 0:
        noise = rng.normal(0.0, sigma, size=2)
        u, v = u + noise[0], v + noise[1]
    return float(u), float(v)


def _blocks_overlapping(box: PixelBox, block: int, w: int, h: int):
    """Centers of grid blocks (stride = block, anchored at the origin) whose
    extent intersects the box."""
    c0 = max(0, int(np.floor(box.x_min / block)))
    c1 = min((w - 1) // block, int(np.floor((box.x_max - 1e-9) / block)))
    r0 = max(0, int(np.floor(box.y_min / block)))
    r1 = min((h - 1) // block, int(np.floor((box.y_max - 1e-9) / block)))
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            yield c * block + block / 2.0, r * block + block / 2.0


def generate(spec: SceneSpec) -> SynthScene:
    """Generate motion vectors, ground truth and detections for a scene.

    Deterministic for a fixed seed. Raises SceneSpecError if any object's
    ground-truth box leaves the frame at any time.
    """
    if spec.frames < 1:
        raise SceneSpecError("scene needs at least one frame")
    if not spec.objects:
        raise SceneSpecError("scene needs at least one object")

    rng = np.random.default_rng(spec.seed)
    boxes: list[list[PixelBox]] = []
    current = [
        PixelBox(*obj.box, frame_w=spec.width, frame_h=spec.height)
        for obj in spec.objects
    ]
    for t in range(spec.frames):
        if t > 0:
            current = [
                _advance(b, obj.motion) for b, obj in zip(current, spec.objects)
            ]
        for b, obj in zip(current, spec.objects):
            if b.x_min < 0 or b.y_min < 0 or b.x_max > spec.width or b.y_max > spec.height:
                raise SceneSpecError(
                    f"object {obj.label!r} leaves the frame at t={t}: "
                    f"({b.x_min:.1f},{b.y_min:.1f},{b.x_max:.1f},{b.y_max:.1f})"
                )
            if b.width <= 0 or b.height <= 0:
                raise SceneSpecError(f"object {obj.label!r} collapses at t={t}")
        boxes.append(list(current))

    mv_frames: list[MvFrame] = [MvFrame(0)]
    for t in range(1, spec.frames):
        vectors: list[MotionVector] = []
        for k, obj in enumerate(spec.objects):
            prev = boxes[t - 1][k]
            for sx, sy in _blocks_overlapping(prev, spec.block, spec.width, spec.height):
                u, v = _displacement(obj.motion, sx, sy, prev, rng)
                vectors.append(
                    MotionVector(
                        frame=t,
                        source=PAST,
                        block_w=spec.block,
                        block_h=spec.block,
                        src_x=sx,
                        src_y=sy,
                        dst_x=sx + u,
                        dst_y=sy + v,
                    )
                )
        mv_frames.append(MvFrame(t, tuple(vectors)))

    return SynthScene(spec, mv_frames, boxes)


def ground_truth_detections(scene: SynthScene) -> list[list[Detection]]:
    """Per-frame exact detections (score 1.0), as the precomputed source sees them."""
    return [
        [
            Detection(to_yolo(b), 1.0, obj.label)
            for b, obj in zip(scene.gt_boxes[t], scene.spec.objects)
        ]
        for t in range(scene.spec.frames)
    ]
