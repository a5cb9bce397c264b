"""Detection quality scoring against exact wall annotations.

Detections and annotations are compared in pixel space with greedy
one-to-one matching by overlap.  Beyond precision and recall, the report
tracks how many labels land on each brick, since overlapping multi-scale
hits on one brick are the typical failure mode of loose grouping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baking import OrthoFrame, rect_world_to_pixel
from .errors import BrickscanError, ManifestSchemaError
from .grouping import Detection, iou
from .wallforge import ORIENT_V, Annotation

IOU_MATCH_THRESHOLD = 0.5
ANNOTATIONS_FORMAT = "brickscan-annotations-v1"
DETECTIONS_FORMAT = "brickscan-detections-v1"


@dataclass(frozen=True)
class CatalogEntry:
    """Nominal face of one brick class, in mm."""
    name: str
    face_w: float
    face_h: float
    depth: float


DEFAULT_CATALOG = (
    CatalogEntry("STANDARD", 240.0, 45.0, 240.0),
    CatalogEntry("LONG", 360.0, 45.0, 360.0),
)


def classify_rect_mm(w_mm: float, h_mm: float,
                     catalog: Sequence[CatalogEntry] = DEFAULT_CATALOG
                     ) -> Tuple[str, str]:
    """Nearest catalog class for a face rect, by relative dimension error.

    Portrait rects are treated as rotated bricks, so the returned orientation
    says which way the face was lying.
    """
    if w_mm <= 0 or h_mm <= 0:
        raise BrickscanError("rect dimensions must be positive")
    if not catalog:
        raise BrickscanError("catalog cannot be empty")
    orientation = "V" if h_mm > w_mm else "H"
    if orientation == "V":
        w_mm, h_mm = h_mm, w_mm
    best = min(catalog,
               key=lambda e: ((w_mm - e.face_w) / e.face_w) ** 2
               + ((h_mm - e.face_h) / e.face_h) ** 2)
    return best.name, orientation


def match_detections(det_rects: Sequence, det_scores: Sequence[float],
                     ann_rects: Sequence,
                     iou_threshold: float = IOU_MATCH_THRESHOLD
                     ) -> List[Tuple[int, int, float]]:
    """Greedy one-to-one matching, strongest detection first.

    Each detection claims the still-free annotation it overlaps most, if
    that overlap reaches the threshold.  Ties on score break by rect order,
    ties on overlap break by annotation index, so the result is stable.
    """
    n_det = len(det_rects)
    if len(det_scores) != n_det:
        raise BrickscanError("scores and rects must align")
    order = sorted(range(n_det),
                   key=lambda i: (-float(det_scores[i]),
                                  tuple(float(v) for v in det_rects[i])))
    taken = [False] * len(ann_rects)
    matches: List[Tuple[int, int, float]] = []
    for di in order:
        best_j = -1
        best_iou = 0.0
        for j, ann in enumerate(ann_rects):
            if taken[j]:
                continue
            v = iou(det_rects[di], ann)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            taken[best_j] = True
            matches.append((di, best_j, best_iou))
    matches.sort()
    return matches


@dataclass
class EvalReport:
    n_annotations: int
    n_detections: int
    true_positives: int
    precision: float
    precision_defined: bool
    recall: float
    n_annotations_h: int
    n_annotations_v: int
    recall_h: float
    recall_v: float
    labels_per_brick: List[int]
    mean_labels_per_detected_brick: float
    detections_by_class: Dict[str, int]
    matches: List[Tuple[int, int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_annotations": self.n_annotations,
            "n_detections": self.n_detections,
            "true_positives": self.true_positives,
            "precision": self.precision,
            "precision_defined": self.precision_defined,
            "recall": self.recall,
            "n_annotations_h": self.n_annotations_h,
            "n_annotations_v": self.n_annotations_v,
            "recall_h": self.recall_h,
            "recall_v": self.recall_v,
            "labels_per_brick": list(self.labels_per_brick),
            "mean_labels_per_detected_brick":
                self.mean_labels_per_detected_brick,
            "detections_by_class": dict(self.detections_by_class),
            "matches": [[d, a, v] for d, a, v in self.matches],
        }


def evaluate(detections: Sequence[Detection],
             annotations: Sequence[Annotation], frame: OrthoFrame,
             iou_threshold: float = IOU_MATCH_THRESHOLD,
             catalog: Sequence[CatalogEntry] = DEFAULT_CATALOG) -> EvalReport:
    """Score detections against a wall's exact annotations."""
    ann_rects = [rect_world_to_pixel(frame, a.rect_mm) for a in annotations]
    det_rects = [d.rect() for d in detections]
    det_scores = [d.score for d in detections]
    matches = match_detections(det_rects, det_scores, ann_rects,
                               iou_threshold)

    n_ann = len(annotations)
    n_det = len(detections)
    tp = len(matches)
    precision_defined = n_det > 0
    precision = tp / n_det if precision_defined else 0.0
    recall = tp / n_ann if n_ann else 0.0

    is_v = [a.orientation == ORIENT_V for a in annotations]
    n_v = sum(is_v)
    n_h = n_ann - n_v
    matched_ann = {j for _, j, _ in matches}
    tp_v = sum(1 for j in matched_ann if is_v[j])
    tp_h = tp - tp_v
    recall_h = tp_h / n_h if n_h else 0.0
    recall_v = tp_v / n_v if n_v else 0.0

    labels = [0] * n_ann
    for d in detections:
        cx, cy = d.center()
        for j, (rx, ry, rw, rh) in enumerate(ann_rects):
            if rx <= cx < rx + rw and ry <= cy < ry + rh:
                labels[j] += 1
                break
    detected = [c for c in labels if c > 0]
    mean_labels = float(np.mean(detected)) if detected else 0.0

    by_class: Dict[str, int] = {}
    ps = frame.pixel_size
    for d in detections:
        name, _ = classify_rect_mm(d.w * ps, d.h * ps, catalog)
        by_class[name] = by_class.get(name, 0) + 1

    return EvalReport(
        n_annotations=n_ann, n_detections=n_det, true_positives=tp,
        precision=precision, precision_defined=precision_defined,
        recall=recall, n_annotations_h=n_h, n_annotations_v=n_v,
        recall_h=recall_h, recall_v=recall_v, labels_per_brick=labels,
        mean_labels_per_detected_brick=mean_labels,
        detections_by_class=by_class, matches=matches)


def _frame_from_payload(payload: dict) -> OrthoFrame:
    if "frame" not in payload or not isinstance(payload["frame"], dict):
        raise ManifestSchemaError("payload lacks a frame object")
    try:
        return OrthoFrame.from_dict(payload["frame"])
    except (KeyError, TypeError, ValueError, BrickscanError) as exc:
        raise ManifestSchemaError(f"bad frame: {exc}") from exc


def save_annotations(path, annotations: Sequence[Annotation],
                     frame: OrthoFrame) -> None:
    payload = {
        "format": ANNOTATIONS_FORMAT,
        "frame": frame.to_dict(),
        "annotations": [{
            "brick_id": int(a.brick_id),
            "rect_mm": [float(v) for v in a.rect_mm],
            "rect_px": [round(v, 6) for v in
                        rect_world_to_pixel(frame, a.rect_mm)],
            "orientation": a.orientation,
            "brick_type": a.brick_type,
        } for a in annotations],
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def load_annotations(path) -> Tuple[List[Annotation], OrthoFrame]:
    p = Path(path)
    if not p.is_file():
        raise ManifestSchemaError(f"missing annotations file {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable annotations: {exc}") from exc
    if not isinstance(payload, dict) \
            or payload.get("format") != ANNOTATIONS_FORMAT:
        raise ManifestSchemaError("not an annotations payload")
    frame = _frame_from_payload(payload)
    entries = payload.get("annotations")
    if not isinstance(entries, list):
        raise ManifestSchemaError("annotations must be a list")
    result: List[Annotation] = []
    for i, e in enumerate(entries):
        try:
            rect = tuple(float(v) for v in e["rect_mm"])
            if len(rect) != 4:
                raise ValueError("rect_mm needs 4 numbers")
            result.append(Annotation(brick_id=int(e["brick_id"]),
                                     rect_mm=rect,
                                     orientation=str(e["orientation"]),
                                     brick_type=str(e["brick_type"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestSchemaError(f"annotation {i} is malformed: {exc}") \
                from exc
    return result, frame


def save_detections(path, detections: Sequence[Detection],
                    frame: OrthoFrame) -> None:
    payload = {
        "format": DETECTIONS_FORMAT,
        "frame": frame.to_dict(),
        "detections": [d.to_dict() for d in detections],
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def load_detections(path) -> Tuple[List[Detection], OrthoFrame]:
    p = Path(path)
    if not p.is_file():
        raise ManifestSchemaError(f"missing detections file {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable detections: {exc}") from exc
    if not isinstance(payload, dict) \
            or payload.get("format") != DETECTIONS_FORMAT:
        raise ManifestSchemaError("not a detections payload")
    frame = _frame_from_payload(payload)
    entries = payload.get("detections")
    if not isinstance(entries, list):
        raise ManifestSchemaError("detections must be a list")
    result: List[Detection] = []
    for i, e in enumerate(entries):
        try:
            result.append(Detection.from_dict(e))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestSchemaError(f"detection {i} is malformed: {exc}") \
                from exc
    return result, frame
