"""Boosted decision stumps over feature-value matrices.

A stump predicts the object class when ``polarity * value >= polarity *
threshold``.  Candidate thresholds are the observed feature values, nothing
in between, which keeps the hypothesis space finite and lets tests enumerate
it exhaustively.  Tie breaking is fully specified: lower weighted error
first, then lower feature column, then polarity +1 over -1, then the
smallest threshold.

Stage training follows the classic attentional-cascade recipe: sample
weights start at 1/(2 n_pos) and 1/(2 n_neg), each round reweights by
beta^(1-miss), and the stage threshold is dropped from the natural
half-sum-of-alphas until the stage passes at least ``ceil(d_min * n_pos)``
of the positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import SingleClassError

ERROR_CLAMP = 1e-10
COLUMN_CHUNK = 256


@dataclass(frozen=True)
class Stump:
    feature_index: int
    threshold: float
    polarity: int
    alpha: float

    def predict(self, values: np.ndarray) -> np.ndarray:
        """0/1 prediction from this stump's feature value column."""
        if self.polarity >= 0:
            return (values >= self.threshold).astype(np.float64)
        return (values <= self.threshold).astype(np.float64)


@dataclass
class RoundLog:
    stump_error: float
    ensemble_exp_loss: float
    ensemble_01_error: float


@dataclass
class StageResult:
    stumps: List[Stump]
    threshold: float
    achieved_detection: float
    achieved_fp_rate: float
    rounds: List[RoundLog] = field(default_factory=list)


def _best_stump_for_chunk(sv, sy, sw, lead):
    """Best (error, row, polarity) per column of a presorted chunk.

    sv/sy/sw are value/label/weight arrays sorted per column, lead marks the
    first row of each run of equal values.  Returns arrays over columns.
    """
    n = sv.shape[0]
    cpos = np.cumsum(sw * sy, axis=0)
    cneg = np.cumsum(sw * (1.0 - sy), axis=0)
    wpos = cpos[-1]
    wneg = cneg[-1]

    # polarity +1 (predict >= threshold), threshold at the first row of a
    # run: everything below the run boundary is predicted background.
    below_pos = np.vstack([np.zeros((1, sv.shape[1])), cpos[:-1]])
    below_neg = np.vstack([np.zeros((1, sv.shape[1])), cneg[:-1]])
    err_plus = below_pos + (wneg - below_neg)
    err_plus[~lead] = np.inf

    # polarity -1 (predict <= threshold), threshold at the last row of a run.
    trail = np.vstack([lead[1:], np.ones((1, sv.shape[1]), dtype=bool)])
    err_minus = cneg + (wpos - cpos)
    err_minus[~trail] = np.inf

    ip = np.argmin(err_plus, axis=0)
    im = np.argmin(err_minus, axis=0)
    cols = np.arange(sv.shape[1])
    ep = err_plus[ip, cols]
    em = err_minus[im, cols]
    use_plus = ep <= em
    err = np.where(use_plus, ep, em)
    row = np.where(use_plus, ip, im)
    pol = np.where(use_plus, 1, -1)
    return err, row, pol


class StumpTrainer:
    """Holds per-column sort order so each boosting round is a linear scan."""

    def __init__(self, values: np.ndarray, labels: np.ndarray):
        self.values = np.asarray(values, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be (n_samples, n_features)")
        n_pos = int(np.sum(self.labels == 1.0))
        if n_pos == 0 or n_pos == len(self.labels):
            raise SingleClassError(
                "stump training needs both classes present")
        self._chunks = []
        for lo in range(0, self.values.shape[1], COLUMN_CHUNK):
            cols = self.values[:, lo:lo + COLUMN_CHUNK]
            order = np.argsort(cols, axis=0, kind="stable")
            sv = np.take_along_axis(cols, order, axis=0)
            sy = self.labels[order]
            lead = np.ones(sv.shape, dtype=bool)
            lead[1:] = sv[1:] != sv[:-1]
            self._chunks.append((lo, order, sv, sy, lead))

    def train(self, weights: np.ndarray) -> Tuple[Stump, float]:
        """Minimum weighted-error stump (alpha 0) and its weighted error."""
        best = None
        for (lo, order, sv, sy, lead) in self._chunks:
            sw = weights[order]
            err, row, pol = _best_stump_for_chunk(sv, sy, sw, lead)
            k = int(np.argmin(err))
            cand = (float(err[k]), lo + k, int(pol[k]),
                    float(sv[row[k], k]))
            if best is None or cand[0] < best[0]:
                best = cand
        error, col, polarity, threshold = best
        return Stump(feature_index=col, threshold=threshold,
                     polarity=polarity, alpha=0.0), error


def stage_scores(stumps: List[Stump], values: np.ndarray) -> np.ndarray:
    """Sum of alpha-weighted stump votes, one score per sample row."""
    scores = np.zeros(len(values))
    for s in stumps:
        scores += s.alpha * s.predict(values[:, s.feature_index])
    return scores


def stage_threshold_for_detection(scores_pos: np.ndarray, alpha_sum: float,
                                  d_min: float) -> float:
    """Largest threshold <= alpha_sum/2 passing ceil(d_min * n_pos) positives."""
    base = 0.5 * alpha_sum
    k = int(np.ceil(d_min * len(scores_pos)))
    k = max(1, min(k, len(scores_pos)))
    kth = np.sort(scores_pos)[::-1][k - 1]
    return min(base, float(kth))


def train_stage(values: np.ndarray, labels: np.ndarray, d_min: float,
                f_max: float, max_weak: int,
                trainer: Optional[StumpTrainer] = None) -> StageResult:
    """Boost stumps until the stage hits its detection and fp targets.

    Stops early once, at the detection-adjusted threshold, the false
    positive rate is at or below f_max; otherwise runs out max_weak rounds
    and reports what was achieved.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if trainer is None:
        trainer = StumpTrainer(values, labels)
    pos = labels == 1.0
    neg = ~pos
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    weights = np.where(pos, 1.0 / (2.0 * n_pos), 1.0 / (2.0 * n_neg))

    stumps: List[Stump] = []
    rounds: List[RoundLog] = []
    margins = np.zeros(len(labels))   # sum of (alpha/2) * (2h - 1)
    scores = np.zeros(len(labels))
    ysign = np.where(pos, 1.0, -1.0)
    threshold = 0.0
    achieved_d = 0.0
    achieved_f = 1.0

    for _ in range(max_weak):
        weights = weights / weights.sum()
        stump, error = trainer.train(weights)
        error = min(max(error, ERROR_CLAMP), 1.0 - ERROR_CLAMP)
        beta = error / (1.0 - error)
        alpha = float(np.log(1.0 / beta))
        stump = Stump(feature_index=stump.feature_index,
                      threshold=stump.threshold, polarity=stump.polarity,
                      alpha=alpha)
        stumps.append(stump)

        h = stump.predict(values[:, stump.feature_index])
        miss = h != labels
        weights = weights * np.power(beta, 1.0 - miss)

        scores = scores + alpha * h
        margins = margins + 0.5 * alpha * (2.0 * h - 1.0)
        alpha_sum = sum(s.alpha for s in stumps)
        exp_loss = float(np.mean(np.exp(-ysign * margins)))
        err01 = float(np.mean((scores >= 0.5 * alpha_sum) != pos))
        rounds.append(RoundLog(stump_error=float(error),
                               ensemble_exp_loss=exp_loss,
                               ensemble_01_error=err01))

        threshold = stage_threshold_for_detection(scores[pos], alpha_sum,
                                                  d_min)
        passed = scores >= threshold
        achieved_d = float(passed[pos].mean())
        achieved_f = float(passed[neg].mean())
        if achieved_d >= d_min and achieved_f <= f_max:
            break

    return StageResult(stumps=stumps, threshold=threshold,
                       achieved_detection=achieved_d,
                       achieved_fp_rate=achieved_f, rounds=rounds)
