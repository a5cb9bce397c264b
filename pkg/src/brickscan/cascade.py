"""Attentional cascade of boosted stump stages.

Each stage is trained on the positives plus whatever negatives survived the
stages before it (bootstrapping); its accept threshold is lowered until the
stage passes nearly all positives, so rejection power comes from stacking
stages rather than from any one of them.  Training stops when the product
of per-stage false-positive rates reaches the target, the stage budget runs
out, or no negatives survive to train on.

Scanning shares its per-window arithmetic with single-window classification
(one code path), so batch and scalar decisions agree exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .boosting import Stump, train_stage
from .errors import (BrickscanError, ManifestSchemaError,
                     NegativePoolExhaustedError, StageInfeasibleError)
from .haar import (HaarFeature, eval_feature_matrix, eval_feature_windows,
                   sample_features)
from .integral import IntegralImage
from .rng import STREAM_TRAINING, spawn

CASCADE_FORMAT = "brickscan-cascade-v1"

DEFAULT_BASE_W = 48
DEFAULT_BASE_H = 12
DEFAULT_D_MIN = 0.995
DEFAULT_F_MAX = 0.5
DEFAULT_F_TARGET = 0.01
DEFAULT_MAX_STAGES = 10
DEFAULT_MAX_WEAK = 40
DEFAULT_FEATURE_POOL = 2000
DEFAULT_NEG_PER_STAGE = 1200
BOOTSTRAP_ROUNDS_LIMIT = 50


@dataclass
class CascadeStage:
    stumps: List[Stump]
    threshold: float


@dataclass
class CascadeTrainParams:
    base_w: int = DEFAULT_BASE_W
    base_h: int = DEFAULT_BASE_H
    d_min: float = DEFAULT_D_MIN
    f_max: float = DEFAULT_F_MAX
    f_target: float = DEFAULT_F_TARGET
    max_stages: int = DEFAULT_MAX_STAGES
    max_weak: int = DEFAULT_MAX_WEAK
    feature_pool: int = DEFAULT_FEATURE_POOL
    neg_per_stage: int = DEFAULT_NEG_PER_STAGE
    seed: int = 0

    def __post_init__(self):
        if self.base_w < 2 or self.base_h < 2:
            raise BrickscanError("base window must be at least 2x2")
        if not (0.0 < self.d_min <= 1.0):
            raise BrickscanError("d_min must be in (0, 1]")
        if not (0.0 < self.f_max <= 1.0):
            raise BrickscanError("f_max must be in (0, 1]")
        if self.max_stages < 1 or self.max_weak < 1:
            raise BrickscanError("stage and weak-learner budgets must be >= 1")
        if self.feature_pool < 1:
            raise BrickscanError("feature_pool must be >= 1")


@dataclass
class StageRecord:
    """Training provenance for one stage."""
    n_weak: int
    achieved_detection: float
    achieved_fp_rate: float
    cumulative_fp_rate: float
    n_negatives: int
    source_fp_rate: Optional[float] = None
    rounds: List[dict] = field(default_factory=list)


@dataclass
class CascadeModel:
    base_w: int
    base_h: int
    features: List[HaarFeature]
    stages: List[CascadeStage]
    meta: dict = field(default_factory=dict)

    # -- evaluation ------------------------------------------------------

    def scan_windows(self, ii: IntegralImage, xs: np.ndarray, ys: np.ndarray,
                     win_w: int, win_h: int) -> Tuple[np.ndarray, np.ndarray]:
        """Run the full cascade over same-size windows.

        Returns (accepted_mask, final_margin) where margin is the last
        evaluated stage score minus that stage's threshold (negative for
        rejected windows at the stage that cut them).
        """
        xs = np.asarray(xs, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.intp)
        _, stds = ii.window_stats(xs, ys, win_w, win_h)
        alive = np.arange(len(xs))
        margin = np.full(len(xs), -np.inf)
        for stage in self.stages:
            if len(alive) == 0:
                break
            scores = np.zeros(len(alive))
            axs = xs[alive]
            ays = ys[alive]
            astd = stds[alive]
            for stump in stage.stumps:
                vals = eval_feature_windows(
                    self.features[stump.feature_index], ii, axs, ays,
                    win_w, win_h, self.base_w, self.base_h, astd)
                scores += stump.alpha * stump.predict(vals)
            margin[alive] = scores - stage.threshold
            alive = alive[scores >= stage.threshold]
        mask = np.zeros(len(xs), dtype=bool)
        mask[alive] = True
        return mask, margin

    def classify_window(self, ii: IntegralImage, x: int, y: int,
                        win_w: int, win_h: int) -> bool:
        mask, _ = self.scan_windows(ii, np.array([x]), np.array([y]),
                                    win_w, win_h)
        return bool(mask[0])

    def classify_images(self, images: Sequence[np.ndarray]) -> np.ndarray:
        """Cascade decision for base-size images, vectorized per stage."""
        if len(images) == 0:
            return np.zeros(0, dtype=bool)
        alive = np.arange(len(images))
        result = np.zeros(len(images), dtype=bool)
        feats = self.features
        imgs = list(images)
        for stage in self.stages:
            if len(alive) == 0:
                break
            used = sorted({s.feature_index for s in stage.stumps})
            sub = eval_feature_matrix([feats[i] for i in used],
                                      [imgs[i] for i in alive],
                                      self.base_w, self.base_h)
            colof = {fi: c for c, fi in enumerate(used)}
            scores = np.zeros(len(alive))
            for stump in stage.stumps:
                col = sub[:, colof[stump.feature_index]]
                scores += stump.alpha * stump.predict(col)
            alive = alive[scores >= stage.threshold]
        result[alive] = True
        return result

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": CASCADE_FORMAT,
            "base_window": [self.base_w, self.base_h],
            "features": [f.to_dict() for f in self.features],
            "stages": [{
                "threshold": st.threshold,
                "stumps": [{
                    "feature": s.feature_index,
                    "threshold": s.threshold,
                    "polarity": s.polarity,
                    "alpha": s.alpha,
                } for s in st.stumps],
            } for st in self.stages],
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True,
                                         indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeModel":
        if d.get("format") != CASCADE_FORMAT:
            raise ManifestSchemaError(
                f"unsupported cascade format {d.get('format')!r}")
        try:
            base_w, base_h = (int(v) for v in d["base_window"])
            features = [HaarFeature.from_dict(f) for f in d["features"]]
            stages = []
            for st in d["stages"]:
                stumps = [Stump(feature_index=int(s["feature"]),
                                threshold=float(s["threshold"]),
                                polarity=int(s["polarity"]),
                                alpha=float(s["alpha"]))
                          for s in st["stumps"]]
                stages.append(CascadeStage(stumps=stumps,
                                           threshold=float(st["threshold"])))
            meta = d.get("meta", {})
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestSchemaError(f"bad cascade payload: {exc}") from exc
        for f in features:
            if not f.fits(base_w, base_h):
                raise ManifestSchemaError(
                    f"feature {f} does not fit base window")
        for st in stages:
            for s in st.stumps:
                if not (0 <= s.feature_index < len(features)):
                    raise ManifestSchemaError("stump feature index out of range")
        return cls(base_w=base_w, base_h=base_h, features=features,
                   stages=stages, meta=meta)

    @classmethod
    def load(cls, path) -> "CascadeModel":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ManifestSchemaError(f"unreadable cascade {path}: {exc}") \
                from exc
        return cls.from_dict(payload)


NegativeSource = Callable[[int], List[np.ndarray]]


def train_cascade(positives: Sequence[np.ndarray],
                  negative_source: NegativeSource,
                  params: CascadeTrainParams) -> CascadeModel:
    """Train an attentional cascade.

    ``negative_source(n)`` returns up to n fresh base-size negative images;
    an empty return means the supply is exhausted.  Samples for stage k+1
    are the survivors of stages 1..k on both sides; negatives are topped up
    from the source until ``neg_per_stage`` survive or the source dries up.
    The stop test for ``f_target`` uses the pass rate of fresh source draws
    through the whole cascade, not the per-stage training estimate, which
    goes degenerate on small banks.
    """
    positives = [np.asarray(p, dtype=np.float64) for p in positives]
    if not positives:
        raise BrickscanError("cascade training needs positive samples")
    n_positives_in = len(positives)

    model = CascadeModel(base_w=params.base_w, base_h=params.base_h,
                         features=[], stages=[], meta={})
    records: List[StageRecord] = []
    cumulative_f = 1.0
    source_f: Optional[float] = None
    exhausted = False

    bank, _, _ = _top_up_negatives(model, negative_source, [],
                                   params.neg_per_stage)
    if not bank:
        raise NegativePoolExhaustedError(
            "negative source produced no usable samples")

    for stage_idx in range(params.max_stages):
        rng = spawn(params.seed, STREAM_TRAINING, stage_idx)
        pool = sample_features(params.base_w, params.base_h,
                               params.feature_pool, rng)
        imgs = positives + bank
        labels = np.concatenate([np.ones(len(positives)),
                                 np.zeros(len(bank))])
        values = eval_feature_matrix(pool, imgs, params.base_w, params.base_h)
        result = train_stage(values, labels, params.d_min, params.f_max,
                             params.max_weak)
        if result.achieved_fp_rate >= 1.0:
            raise StageInfeasibleError(
                f"stage {stage_idx} rejected no negatives "
                f"({len(result.stumps)} weak learners)")

        base_index = len(model.features)
        used = sorted({s.feature_index for s in result.stumps})
        remap = {}
        for u in used:
            remap[u] = base_index + len(remap)
        model.features.extend(pool[u] for u in used)
        stumps = [Stump(feature_index=remap[s.feature_index],
                        threshold=s.threshold, polarity=s.polarity,
                        alpha=s.alpha) for s in result.stumps]
        model.stages.append(CascadeStage(stumps=stumps,
                                         threshold=result.threshold))
        cumulative_f *= result.achieved_fp_rate
        records.append(StageRecord(
            n_weak=len(stumps),
            achieved_detection=result.achieved_detection,
            achieved_fp_rate=result.achieved_fp_rate,
            cumulative_fp_rate=cumulative_f,
            n_negatives=len(bank),
            rounds=[{"stump_error": r.stump_error,
                     "ensemble_exp_loss": r.ensemble_exp_loss,
                     "ensemble_01_error": r.ensemble_01_error}
                    for r in result.rounds]))

        if stage_idx + 1 == params.max_stages:
            break

        # Bootstrap: both sample sets carry only survivors of the new stage
        # forward, so recorded per-stage rates are conditional and their
        # product is the exact end-to-end training rate.  Negatives are then
        # refilled from the source through the whole cascade.
        survivors_mask = _stage_pass(model, model.stages[-1], bank)
        bank = [img for img, keep in zip(bank, survivors_mask) if keep]
        pos_mask = _stage_pass(model, model.stages[-1], positives)
        positives = [img for img, keep in zip(positives, pos_mask) if keep]
        bank, drawn, passed = _top_up_negatives(model, negative_source, bank,
                                                params.neg_per_stage)
        if drawn > 0:
            source_f = passed / drawn
            records[-1].source_fp_rate = source_f
            if source_f <= params.f_target:
                break
        if not bank:
            exhausted = True
            break

    model.meta = {
        "train_params": {
            "d_min": params.d_min, "f_max": params.f_max,
            "f_target": params.f_target, "max_stages": params.max_stages,
            "max_weak": params.max_weak, "feature_pool": params.feature_pool,
            "neg_per_stage": params.neg_per_stage, "seed": params.seed,
            "n_positives": n_positives_in,
        },
        "cumulative_fp_rate": cumulative_f,
        "source_fp_rate": source_f,
        "negatives_exhausted": exhausted,
        "stages": [{
            "n_weak": r.n_weak,
            "achieved_detection": r.achieved_detection,
            "achieved_fp_rate": r.achieved_fp_rate,
            "cumulative_fp_rate": r.cumulative_fp_rate,
            "n_negatives": r.n_negatives,
            "source_fp_rate": r.source_fp_rate,
            "rounds": r.rounds,
        } for r in records],
    }
    return model


def _stage_pass(model: CascadeModel, stage: CascadeStage,
                images: List[np.ndarray]) -> np.ndarray:
    if not images:
        return np.zeros(0, dtype=bool)
    used = sorted({s.feature_index for s in stage.stumps})
    sub = eval_feature_matrix([model.features[i] for i in used], images,
                              model.base_w, model.base_h)
    colof = {fi: c for c, fi in enumerate(used)}
    scores = np.zeros(len(images))
    for stump in stage.stumps:
        scores += stump.alpha * stump.predict(sub[:, colof[stump.feature_index]])
    return scores >= stage.threshold


def _top_up_negatives(model: CascadeModel, source: NegativeSource,
                      bank: List[np.ndarray],
                      target: int) -> Tuple[List[np.ndarray], int, int]:
    """Refill the negative bank with source images passing the cascade.

    Returns (bank, drawn, passed) where drawn counts every image pulled
    from the source and passed counts those the current cascade accepted,
    so passed/drawn estimates the live false positive rate.
    """
    bank = list(bank)
    rounds = 0
    drawn = 0
    passed = 0
    while len(bank) < target and rounds < BOOTSTRAP_ROUNDS_LIMIT:
        rounds += 1
        want = target - len(bank)
        try:
            batch = source(max(want * 2, 32))
        except NegativePoolExhaustedError:
            break
        if not batch:
            break
        batch = [np.asarray(b, dtype=np.float64) for b in batch]
        drawn += len(batch)
        if model.stages:
            keep = model.classify_images(batch)
            batch = [b for b, k in zip(batch, keep) if k]
        passed += len(batch)
        bank.extend(batch[:want])
    return bank, drawn, passed


# -- scanning -------------------------------------------------------------

@dataclass
class ScanParams:
    scale_factor: float = 1.1
    step: float = 1.0
    min_size: Optional[Tuple[int, int]] = None   # (w, h) in pixels
    max_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.scale_factor <= 1.0:
            raise BrickscanError("scale_factor must be > 1.0")
        if self.step <= 0:
            raise BrickscanError("step must be positive")


def scan_scales(model: CascadeModel, image_w: int, image_h: int,
                params: ScanParams) -> List[Tuple[int, int, int]]:
    """Window sizes and strides to scan: (win_w, win_h, stride)."""
    out = []
    seen = set()
    s = 1.0
    while True:
        win_w = int(np.floor(model.base_w * s + 0.5))
        win_h = int(np.floor(model.base_h * s + 0.5))
        if win_w > image_w or win_h > image_h:
            break
        if params.max_size is not None and (win_w > params.max_size[0]
                                            or win_h > params.max_size[1]):
            break
        big_enough = True
        if params.min_size is not None:
            big_enough = (win_w >= params.min_size[0]
                          and win_h >= params.min_size[1])
        if big_enough and (win_w, win_h) not in seen:
            seen.add((win_w, win_h))
            stride = max(1, int(np.floor(params.step * s + 0.5)))
            out.append((win_w, win_h, stride))
        s *= params.scale_factor
    return out


def detect_multiscale(model: CascadeModel, image: np.ndarray,
                      params: Optional[ScanParams] = None
                      ) -> Tuple[np.ndarray, np.ndarray]:
    """Scan an image at all scales.

    Returns (rects, margins): rects is (n, 4) int array of accepted windows
    as (x, y, w, h), margins the final-stage score surplus of each.
    """
    if params is None:
        params = ScanParams()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise BrickscanError("detection expects a single-channel image")
    ii = IntegralImage(img)
    rect_list = []
    margin_list = []
    for (win_w, win_h, stride) in scan_scales(model, img.shape[1],
                                              img.shape[0], params):
        xs = np.arange(0, img.shape[1] - win_w + 1, stride, dtype=np.intp)
        ys = np.arange(0, img.shape[0] - win_h + 1, stride, dtype=np.intp)
        gx, gy = np.meshgrid(xs, ys)
        gx = gx.ravel()
        gy = gy.ravel()
        mask, margin = model.scan_windows(ii, gx, gy, win_w, win_h)
        if np.any(mask):
            k = int(mask.sum())
            r = np.empty((k, 4), dtype=np.int64)
            r[:, 0] = gx[mask]
            r[:, 1] = gy[mask]
            r[:, 2] = win_w
            r[:, 3] = win_h
            rect_list.append(r)
            margin_list.append(margin[mask])
    if not rect_list:
        return np.zeros((0, 4), dtype=np.int64), np.zeros(0)
    return np.concatenate(rect_list), np.concatenate(margin_list)
