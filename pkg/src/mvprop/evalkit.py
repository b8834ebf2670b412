"""Detection evaluation: greedy IoU matching, per-class AP, multi-threshold mAP.

AP uses the COCO 101-point interpolated precision envelope at every threshold,
including the loose ones (0.2 / 0.3), so all reported numbers share one
convention. Matching is greedy per image: predictions in descending score
order each claim the highest-IoU unmatched ground truth at or above the
threshold, ties broken toward the lowest ground-truth index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import YoloBox, iou

LOOSE_THRESHOLDS = (0.2, 0.3, 0.5)
COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

# (image_key, score, box)
ScoredPred = tuple[object, float, YoloBox]


class EvalInputError(ValueError):
    """Malformed or inconsistent prediction / ground-truth files."""


@dataclass
class MetricsReport:
    map_loose: dict[float, float]            # 0.2, 0.3, 0.5
    map_coco: float                          # mean over [0.5:0.95]
    per_class: dict[str, dict[float, float]]  # label -> threshold -> AP
    fps: Optional[float] = None
    detector_calls: Optional[int] = None
    frames: int = 0

    def to_obj(self) -> dict:
        return {
            "mAP@0.2": self.map_loose[0.2],
            "mAP@0.3": self.map_loose[0.3],
            "mAP@0.5": self.map_loose[0.5],
            "mAP@[0.5:0.95]": self.map_coco,
            "per_class": {
                label: {f"{thr:g}": ap for thr, ap in table.items()}
                for label, table in self.per_class.items()
            },
            "fps": self.fps,
            "detector_calls": self.detector_calls,
            "frames": self.frames,
        }

    def format_table(self) -> str:
        lines = [
            f"{'metric':<16} {'value':>8}",
            f"{'mAP@0.2':<16} {self.map_loose[0.2]:>8.4f}",
            f"{'mAP@0.3':<16} {self.map_loose[0.3]:>8.4f}",
            f"{'mAP@0.5':<16} {self.map_loose[0.5]:>8.4f}",
            f"{'mAP@[0.5:0.95]':<16} {self.map_coco:>8.4f}",
        ]
        if self.fps is not None:
            lines.append(f"{'FPS':<16} {self.fps:>8.2f}")
        if self.detector_calls is not None:
            lines.append(f"{'detector calls':<16} {self.detector_calls:>8d}")
        return "\n".join(lines)


def greedy_match(
    preds: Sequence[tuple[float, YoloBox]],
    gts: Sequence[YoloBox],
    thr: float,
) -> list[Optional[int]]:
    """Match one image's predictions to its ground truths.

    Returns, per prediction (in input order), the matched ground-truth index
    or None. Predictions are processed in descending score order (stable for
    ties); each takes the unmatched ground truth with the highest IoU >= thr,
    lowest index on equal IoU.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i][0])
    taken = [False] * len(gts)
    matches: list[Optional[int]] = [None] * len(preds)
    for i in order:
        best_j, best_iou = None, thr
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou(preds[i][1], gt)
            if v > best_iou or (v == best_iou and v >= thr and best_j is None):
                best_j, best_iou = j, v
        if best_j is not None:
            taken[best_j] = True
            matches[i] = best_j
    return matches


def average_precision(
    preds: Sequence[ScoredPred],
    gts: dict[object, list[YoloBox]],
    thr: float,
) -> float:
    """Single-class AP at one IoU threshold via 101-point interpolation."""
    n_gt = sum(len(v) for v in gts.values())
    if n_gt == 0:
        # no ground truth: every prediction is a false positive
        return 0.0
    if not preds:
        return 0.0

    by_image: dict[object, list[int]] = {}
    for idx, (key, _, _) in enumerate(preds):
        by_image.setdefault(key, []).append(idx)

    tp = np.zeros(len(preds), dtype=bool)
    for key, idxs in by_image.items():
        image_preds = [(preds[i][1], preds[i][2]) for i in idxs]
        matches = greedy_match(image_preds, gts.get(key, []), thr)
        for local, m in enumerate(matches):
            if m is not None:
                tp[idxs[local]] = True

    order = np.argsort([-p[1] for p in preds], kind="stable")
    tp_sorted = tp[order]
    cum_tp = np.cumsum(tp_sorted)
    cum_fp = np.cumsum(~tp_sorted)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)

    # precision envelope sampled at 101 recall points
    recall_points = np.linspace(0.0, 1.0, 101)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, recall_points, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


@dataclass
class Dataset:
    """Frame-keyed detections grouped by class."""

    # label -> list of (image_key, score, box)
    preds: dict[str, list[ScoredPred]] = field(default_factory=dict)
    # label -> image_key -> list of boxes
    gts: dict[str, dict[object, list[YoloBox]]] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return sorted(set(self.preds) | set(self.gts))


def load_detections(path) -> dict[tuple[str, int], list[tuple[YoloBox, float, str]]]:
    out: dict[tuple[str, int], list[tuple[YoloBox, float, str]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                key = (str(obj["video"]), int(obj["frame"]))
                dets = [
                    (YoloBox(*(float(x) for x in d["box"])), float(d["score"]), str(d["label"]))
                    for d in obj["detections"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EvalInputError(f"{path}:{lineno}: {exc}") from exc
            out.setdefault(key, []).extend(dets)
    return out


def load_ground_truth(path) -> dict[tuple[str, int], list[tuple[YoloBox, str]]]:
    out: dict[tuple[str, int], list[tuple[YoloBox, str]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                key = (str(obj["video"]), int(obj["frame"]))
                boxes = [
                    (YoloBox(*(float(x) for x in b["box"])), str(b["label"]))
                    for b in obj["boxes"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EvalInputError(f"{path}:{lineno}: {exc}") from exc
            out.setdefault(key, []).extend(boxes)
    return out


def build_dataset(
    predictions: dict[tuple[str, int], list[tuple[YoloBox, float, str]]],
    ground_truth: dict[tuple[str, int], list[tuple[YoloBox, str]]],
    class_agnostic: bool = False,
) -> Dataset:
    ds = Dataset()
    for key, dets in predictions.items():
        for box, score, label in dets:
            if class_agnostic:
                label = "_any"
            ds.preds.setdefault(label, []).append((key, score, box))
    for key, boxes in ground_truth.items():
        for box, label in boxes:
            if class_agnostic:
                label = "_any"
            ds.gts.setdefault(label, {}).setdefault(key, []).append(box)
    return ds


def evaluate_dataset(
    ds: Dataset,
    fps: Optional[float] = None,
    detector_calls: Optional[int] = None,
    frames: int = 0,
) -> MetricsReport:
    thresholds = sorted(set(LOOSE_THRESHOLDS) | set(COCO_THRESHOLDS))
    per_class: dict[str, dict[float, float]] = {}
    for label in ds.labels:
        preds = ds.preds.get(label, [])
        gts = ds.gts.get(label, {})
        if not preds and not gts:
            continue
        per_class[label] = {
            thr: average_precision(preds, gts, thr) for thr in thresholds
        }
    if not per_class:
        raise EvalInputError("no classes to evaluate")

    def mean_at(thr: float) -> float:
        return float(np.mean([table[thr] for table in per_class.values()]))

    return MetricsReport(
        map_loose={thr: mean_at(thr) for thr in LOOSE_THRESHOLDS},
        map_coco=float(np.mean([mean_at(t) for t in COCO_THRESHOLDS])),
        per_class=per_class,
        fps=fps,
        detector_calls=detector_calls,
        frames=frames,
    )


def evaluate(
    predictions_path,
    ground_truth_path,
    run_log_path=None,
    class_agnostic: bool = False,
) -> MetricsReport:
    """Evaluate a predictions file against a ground-truth file.

    When a run log is given, FPS is total frames over total recorded
    wall-clock (decoding, MV access and propagation included) and the
    detector-call count is reported alongside.
    """
    preds = load_detections(predictions_path)
    gts = load_ground_truth(ground_truth_path)
    if not gts:
        raise EvalInputError(f"{ground_truth_path}: no ground truth records")
    missing = set(preds) - set(gts)
    if missing:
        raise EvalInputError(
            f"predictions reference frames absent from ground truth: "
            f"{sorted(missing)[:5]}"
        )

    fps = None
    detector_calls = None
    frames = len(gts)
    if run_log_path is not None:
        total_ms = 0.0
        calls = 0
        n = 0
        with open(run_log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                total_ms += float(rec["wall_ms"])
                calls += bool(rec["detector_called"])
                n += 1
        if total_ms > 0:
            fps = n / (total_ms / 1000.0)
        detector_calls = calls
        frames = n

    ds = build_dataset(preds, gts, class_agnostic=class_agnostic)
    return evaluate_dataset(ds, fps=fps, detector_calls=detector_calls, frames=frames)


def mean_iou(
    predictions: dict[tuple[str, int], list[tuple[YoloBox, float, str]]],
    ground_truth: dict[tuple[str, int], list[tuple[YoloBox, str]]],
) -> float:
    """Mean over ground-truth boxes of the best prediction IoU (0 when unmatched).

    A localization-only diagnostic for desk-scale trend checks; not an AP.
    """
    total = 0.0
    count = 0
    for key, boxes in ground_truth.items():
        dets = predictions.get(key, [])
        for gt_box, label in boxes:
            candidates = [iou(gt_box, b) for b, _, lab in dets if lab == label]
            total += max(candidates, default=0.0)
            count += 1
    if count == 0:
        raise EvalInputError("ground truth holds no boxes")
    return total / count


def import_vid_annotations(
    annotation_dir,
    out_path,
    video: Optional[str] = None,
    label_map: Optional[dict[str, str]] = None,
) -> int:
    """Convert a directory of ILSVRC-VID frame XMLs to the ground-truth format.

    Frames are ordered by filename; returns the number of frames written.
    ``label_map`` optionally translates WordNet ids to readable names.
    """
    import xml.etree.ElementTree as ET

    ann = Path(annotation_dir)
    files = sorted(ann.glob("*.xml"))
    if not files:
        raise EvalInputError(f"no XML annotations under {annotation_dir}")
    video = video or ann.name
    with open(out_path, "w", encoding="utf-8") as fh:
        for t, xml_path in enumerate(files):
            root = ET.parse(xml_path).getroot()
            width = int(root.findtext("size/width"))
            height = int(root.findtext("size/height"))
            boxes = []
            for obj in root.iter("object"):
                name = obj.findtext("name")
                if label_map:
                    name = label_map.get(name, name)
                bb = obj.find("bndbox")
                x0 = float(bb.findtext("xmin"))
                x1 = float(bb.findtext("xmax"))
                y0 = float(bb.findtext("ymin"))
                y1 = float(bb.findtext("ymax"))
                boxes.append(
                    {
                        "box": [
                            (x0 + x1) / (2.0 * width),
                            (y0 + y1) / (2.0 * height),
                            (x1 - x0) / width,
                            (y1 - y0) / height,
                        ],
                        "label": name,
                    }
                )
            fh.write(json.dumps({"video": video, "frame": t, "boxes": boxes}) + "\n")
    return len(files)


def write_report(report: MetricsReport, json_path, table_path=None) -> None:
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_obj(), fh, indent=2)
        fh.write("\n")
    if table_path is not None:
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(report.format_table() + "\n")
