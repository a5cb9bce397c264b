"""End-to-end runs wired from the library pieces.

Each run_* function is one CLI subcommand: it reads files produced by the
previous step, writes its own products into a directory, and returns a
small summary dict for logging.  run_all chains everything under one output
tree.  Render products (overlay, report figures) land next to the data
files they illustrate.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baking import BakeParams, OrthoFrame, bake_map_set, frame_from_mesh
from .cascade import (CascadeModel, CascadeTrainParams, ScanParams,
                      detect_multiscale, train_cascade)
from .config import RunConfig, pattern_path, sweep_values
from .errors import BrickscanError, ManifestSchemaError
from .evaluation import (EvalReport, evaluate, load_annotations,
                         load_detections, save_annotations, save_detections)
from .figures import save_labels_histogram, save_sweep_figure
from .grouping import group_detections
from .objio import read_obj, write_obj
from .overlay import render_overlay
from .pngio import load_map_set, save_map_set, save_rgb8
from .rng import STREAM_AO, STREAM_EVAL_WALL, STREAM_TRAIN_WALL, hash_u64
from .sampler import (SamplerParams, annotation_px_rects, generate_negatives,
                      generate_positives, load_dataset, negative_source,
                      save_dataset)
from .wallforge import BrickSpec, generate_wall, parse_pattern_file

WALL_FORMAT = "brickscan-wall-v1"
WINDOWS_FORMAT = "brickscan-windows-v1"
REPORT_FORMAT = "brickscan-report-v1"

WALL_MESH = "wall.obj"
WALL_META = "wall.json"
ANNOTATIONS_FILE = "annotations.json"
MODEL_FILE = "cascade.json"
DETECTIONS_FILE = "detections.json"
WINDOWS_FILE = "windows.json"
OVERLAY_FILE = "overlay.png"
REPORT_FILE = "report.json"
LABELS_HIST_FILE = "labels_hist.png"
SWEEP_CSV = "sweep.csv"
SWEEP_FIGURE = "sweep.png"
SUMMARY_FILE = "summary.json"

SWEEP_COLUMNS = ("min_neighbors", "detections", "precision", "recall",
                 "recall_H", "recall_V", "mean_labels_per_brick")


def train_wall_seed(seed: int) -> int:
    return int(hash_u64(seed, STREAM_TRAIN_WALL))


def eval_wall_seed(seed: int) -> int:
    return int(hash_u64(seed, STREAM_EVAL_WALL))


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2)
                          + "\n")


def _relative_paths(value, root: Path):
    """Rewrite path strings under root as tree-relative posix paths.

    The summary must not depend on where the tree was written, so two runs
    into different directories stay byte-identical."""
    if isinstance(value, dict):
        return {k: _relative_paths(v, root) for k, v in value.items()}
    if isinstance(value, list):
        return [_relative_paths(v, root) for v in value]
    if isinstance(value, str):
        try:
            return Path(value).relative_to(root).as_posix()
        except ValueError:
            return value
    return value


def _sampler_params(cfg: RunConfig) -> SamplerParams:
    return SamplerParams(pixel_size=cfg.pixel_size,
                         depth_range=cfg.depth_range, recess=cfg.recess,
                         dilation=cfg.dilation, crop_jitter=cfg.crop_jitter,
                         channel=cfg.channel,
                         rays_per_pixel=cfg.rays_per_pixel,
                         neg_scale_max=cfg.neg_scale_max)


def _scan_params(cfg: RunConfig) -> ScanParams:
    min_size = (cfg.min_size, 0) if cfg.min_size > 0 else None
    max_size = (cfg.max_size, 10 ** 9) if cfg.max_size > 0 else None
    return ScanParams(scale_factor=cfg.scale_factor, step=cfg.scan_step,
                      min_size=min_size, max_size=max_size)


def run_gen_wall(cfg: RunConfig, pattern_name: str, wall_seed: int,
                 out_dir) -> dict:
    """Build a wall, write its mesh, annotations and metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pattern = parse_pattern_file(pattern_path(pattern_name))
    spec = BrickSpec()
    wall = generate_wall(pattern, spec, wall_seed, cfg.recess)
    write_obj(wall.mesh, out / WALL_MESH)
    frame = frame_from_mesh(wall.mesh.bbox(), cfg.pixel_size)
    save_annotations(out / ANNOTATIONS_FILE, wall.annotations, frame)
    meta = {
        "format": WALL_FORMAT,
        "pattern": pattern_name,
        "seed": int(wall_seed),
        "recess": float(cfg.recess),
        "extent_mm": [float(v) for v in wall.extent_mm],
        "n_bricks": len(wall.annotations),
        "spec": asdict(spec),
    }
    _write_json(out / WALL_META, meta)
    return {"out": str(out), "n_bricks": len(wall.annotations),
            "extent_mm": meta["extent_mm"],
            "image_size": [frame.width, frame.height]}


def _load_wall_meta(wall_dir: Path) -> dict:
    path = wall_dir / WALL_META
    if not path.is_file():
        raise ManifestSchemaError(f"missing {WALL_META} in {wall_dir}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable wall meta: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("format") != WALL_FORMAT:
        raise ManifestSchemaError("not a wall metadata payload")
    return meta


def run_bake(cfg: RunConfig, wall_dir, out_dir) -> dict:
    """Bake the four relief maps of a generated wall."""
    wall_path = Path(wall_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = read_obj(wall_path / WALL_MESH)
    _, frame = load_annotations(wall_path / ANNOTATIONS_FILE)
    meta = _load_wall_meta(wall_path)
    params = BakeParams(pixel_size=frame.pixel_size,
                        depth_range=cfg.depth_range,
                        rays_per_pixel=cfg.rays_per_pixel)
    ao_seed = int(hash_u64(int(meta["seed"]), STREAM_AO))
    maps = bake_map_set(mesh, params, ao_seed, frame=frame)
    save_map_set(out, maps)
    return {"out": str(out), "width": frame.width, "height": frame.height}


def run_gen_dataset(cfg: RunConfig, maps_dir, wall_dir, out_dir) -> dict:
    """Draw training windows: rendered bricks plus wall background."""
    out = Path(out_dir)
    sp = _sampler_params(cfg)
    maps = load_map_set(maps_dir)
    annotations, frame = load_annotations(Path(wall_dir) / ANNOTATIONS_FILE)
    positives = generate_positives(BrickSpec(), cfg.n_positives, cfg.seed, sp)
    image = maps.channel(cfg.channel)
    excludes = annotation_px_rects(frame, annotations)
    negatives = generate_negatives(image, excludes, cfg.n_negatives,
                                   cfg.seed, sp, salt=0)
    save_dataset(out, list(positives) + list(negatives), cfg.channel,
                 sp.base_w, sp.base_h)
    return {"out": str(out), "positives": len(positives),
            "negatives": len(negatives)}


def _queued_source(first_batches: List[np.ndarray], live):
    """Serve queued images first, then fall through to a live source."""
    queue = list(first_batches)

    def source(n: int) -> List[np.ndarray]:
        if queue:
            take = queue[:n]
            del queue[:n]
            return take
        return live(n)

    return source


def run_train(cfg: RunConfig, dataset_dir, maps_dir, wall_dir,
              out_path) -> dict:
    """Train the cascade on a dataset, bootstrapping from the wall."""
    samples, manifest = load_dataset(dataset_dir)
    if manifest["channel"] != cfg.channel:
        raise BrickscanError(
            f"dataset channel {manifest['channel']!r} does not match "
            f"configured channel {cfg.channel!r}")
    positives = [s.image for s in samples if s.label == 1]
    stored_negatives = [s.image for s in samples if s.label == 0]

    maps = load_map_set(maps_dir)
    annotations, frame = load_annotations(Path(wall_dir) / ANNOTATIONS_FILE)
    image = maps.channel(cfg.channel)
    excludes = annotation_px_rects(frame, annotations)
    # The stored dataset keeps negatives clear of bricks; the bootstrap
    # source allows straddles closer to a brick so later stages learn to
    # reject half-framed windows, which is what keeps clusters per brick.
    boot_params = replace(_sampler_params(cfg), neg_max_iou=cfg.boot_max_iou)
    live = negative_source(image, excludes, cfg.seed, boot_params,
                           first_salt=1)
    source = _queued_source(stored_negatives, live)

    params = CascadeTrainParams(
        base_w=manifest["base_w"], base_h=manifest["base_h"],
        d_min=cfg.d_min, f_max=cfg.f_max, f_target=cfg.f_target,
        max_stages=cfg.max_stages, max_weak=cfg.max_weak,
        feature_pool=cfg.feature_pool, neg_per_stage=cfg.n_negatives,
        seed=cfg.seed)
    model = train_cascade(positives, source, params)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    return {"out": str(out), "stages": len(model.stages),
            "features": len(model.features),
            "cumulative_fp_rate": model.meta.get("cumulative_fp_rate"),
            "source_fp_rate": model.meta.get("source_fp_rate"),
            "negatives_exhausted": model.meta.get("negatives_exhausted")}


def rotate_windows_back(rects: np.ndarray, image_w: int) -> np.ndarray:
    """Map windows found in a 90-degree-rotated image onto the original.

    The rotated view R satisfies R[i, j] = img[j, W - 1 - i] for an image
    of width W, so a rect (x, y, w, h) in R covers original columns
    W - y - h onward and original rows x onward with swapped extent.
    """
    rects = np.asarray(rects, dtype=np.int64)
    if rects.size == 0:
        return rects.reshape(0, 4)
    out = np.empty_like(rects)
    out[:, 0] = image_w - rects[:, 1] - rects[:, 3]
    out[:, 1] = rects[:, 0]
    out[:, 2] = rects[:, 3]
    out[:, 3] = rects[:, 2]
    return out


def save_windows(path, rects: np.ndarray, margins: np.ndarray,
                 frame: OrthoFrame) -> None:
    rects = np.asarray(rects, dtype=np.int64).reshape(-1, 4)
    margins = np.asarray(margins, dtype=np.float64).reshape(-1)
    if len(rects) != len(margins):
        raise BrickscanError("rects and margins must align")
    payload = {
        "format": WINDOWS_FORMAT,
        "frame": frame.to_dict(),
        "windows": [[int(v) for v in r] for r in rects],
        "margins": [float(m) for m in margins],
    }
    _write_json(path, payload)


def load_windows(path) -> Tuple[np.ndarray, np.ndarray, OrthoFrame]:
    p = Path(path)
    if not p.is_file():
        raise ManifestSchemaError(f"missing windows file {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable windows: {exc}") from exc
    if not isinstance(payload, dict) \
            or payload.get("format") != WINDOWS_FORMAT:
        raise ManifestSchemaError("not a windows payload")
    try:
        frame = OrthoFrame.from_dict(payload["frame"])
        rects = np.array(payload["windows"], dtype=np.int64).reshape(-1, 4)
        margins = np.array(payload["margins"], dtype=np.float64)
    except (KeyError, TypeError, ValueError, BrickscanError) as exc:
        raise ManifestSchemaError(f"bad windows payload: {exc}") from exc
    if len(rects) != len(margins):
        raise ManifestSchemaError("windows and margins lengths differ")
    return rects, margins, frame


def run_detect(cfg: RunConfig, model_path, maps_dir, out_dir) -> dict:
    """Scan a baked wall, group the hits, draw the overlay."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = CascadeModel.load(model_path)
    maps = load_map_set(maps_dir)
    image = maps.channel(cfg.channel)
    scan = _scan_params(cfg)
    rects, margins = detect_multiscale(model, image, scan)
    if cfg.rotated_pass:
        rotated = np.rot90(image)
        r_rects, r_margins = detect_multiscale(model, rotated, scan)
        r_rects = rotate_windows_back(r_rects, image.shape[1])
        rects = np.concatenate([rects, r_rects], axis=0)
        margins = np.concatenate([margins, r_margins])
    detections = group_detections(rects, margins,
                                  min_neighbors=cfg.min_neighbors,
                                  eps=cfg.group_eps)
    save_windows(out / WINDOWS_FILE, rects, margins, maps.frame)
    save_detections(out / DETECTIONS_FILE, detections, maps.frame)
    canvas = render_overlay(image, detections)
    save_rgb8(out / OVERLAY_FILE, canvas / 255.0)
    return {"out": str(out), "windows": int(len(rects)),
            "detections": len(detections)}


def _report_payload(report: EvalReport) -> dict:
    payload = {"format": REPORT_FORMAT}
    payload.update(report.to_dict())
    return payload


def run_evaluate(cfg: RunConfig, detections_path, annotations_path,
                 out_dir) -> dict:
    """Score saved detections against saved annotations."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    detections, det_frame = load_detections(detections_path)
    annotations, ann_frame = load_annotations(annotations_path)
    if det_frame != ann_frame:
        raise BrickscanError("detections and annotations use different "
                             "frames")
    report = evaluate(detections, annotations, ann_frame,
                      cfg.iou_threshold)
    _write_json(out / REPORT_FILE, _report_payload(report))
    save_labels_histogram(out / LABELS_HIST_FILE, report.labels_per_brick)
    return _report_payload(report)


def run_sweep(cfg: RunConfig, windows_path, annotations_path,
              out_dir) -> dict:
    """Regroup raw windows across thresholds; write table and figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rects, margins, win_frame = load_windows(windows_path)
    annotations, ann_frame = load_annotations(annotations_path)
    if win_frame != ann_frame:
        raise BrickscanError("windows and annotations use different frames")
    rows: List[Dict[str, object]] = []
    for k in sweep_values(cfg):
        detections = group_detections(rects, margins, min_neighbors=k,
                                      eps=cfg.group_eps)
        report = evaluate(detections, annotations, ann_frame,
                          cfg.iou_threshold)
        rows.append({
            "min_neighbors": k,
            "detections": report.n_detections,
            "precision": report.precision,
            "recall": report.recall,
            "recall_H": report.recall_h,
            "recall_V": report.recall_v,
            "mean_labels_per_brick": report.mean_labels_per_detected_brick,
        })
    csv_path = out / SWEEP_CSV
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    save_sweep_figure(out / SWEEP_FIGURE, rows)
    return {"out": str(out), "rows": rows}


def run_all(cfg: RunConfig, out_dir) -> dict:
    """Full pipeline under one output tree.

    Paths inside the returned summary are relative to the tree root."""
    out = Path(out_dir).resolve()
    out.mkdir(parents=True, exist_ok=True)
    summary: Dict[str, object] = {}

    train_wall = out / "train_wall"
    eval_wall = out / "eval_wall"
    summary["train_wall"] = run_gen_wall(cfg, cfg.train_pattern,
                                         train_wall_seed(cfg.seed),
                                         train_wall)
    summary["eval_wall"] = run_gen_wall(cfg, cfg.eval_pattern,
                                        eval_wall_seed(cfg.seed), eval_wall)

    train_maps = out / "train_maps"
    eval_maps = out / "eval_maps"
    summary["train_maps"] = run_bake(cfg, train_wall, train_maps)
    summary["eval_maps"] = run_bake(cfg, eval_wall, eval_maps)

    dataset = out / "dataset"
    summary["dataset"] = run_gen_dataset(cfg, train_maps, train_wall,
                                         dataset)

    model_path = out / MODEL_FILE
    summary["train"] = run_train(cfg, dataset, train_maps, train_wall,
                                 model_path)

    detections = out / "detections"
    summary["detect"] = run_detect(cfg, model_path, eval_maps, detections)

    report = out / "report"
    summary["evaluate"] = run_evaluate(cfg, detections / DETECTIONS_FILE,
                                       eval_wall / ANNOTATIONS_FILE, report)

    sweep = out / "sweep"
    summary["sweep"] = run_sweep(cfg, detections / WINDOWS_FILE,
                                 eval_wall / ANNOTATIONS_FILE, sweep)

    summary = _relative_paths(summary, out)
    _write_json(out / SUMMARY_FILE, summary)
    return summary
