"""Threshold classification, majority voting and ROC evaluation.

All scores are log2-probabilities. A sequence is normal when its score is
greater than or equal to the threshold. In ROC terms the positive class is
"anomalous", so a score strictly below the threshold is a positive call.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, TooShortError
from .model import LZModel, as_symbols


class Decision(str, enum.Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class ClassifierConfig:
    threshold: float
    subsequence_length: int = 10
    min_subsequences: int = 1
    max_subsequences: int | None = None

    def __post_init__(self):
        if self.subsequence_length < 1:
            raise ValueError("subsequence_length must be >= 1")
        if self.min_subsequences < 1:
            raise ValueError("min_subsequences must be >= 1")
        if self.max_subsequences is not None and self.max_subsequences < 1:
            raise ValueError("max_subsequences must be >= 1")


@dataclass
class Verdict:
    label: Decision
    score: float
    subsequence_scores: list = field(default_factory=list)
    votes_normal: int = 0

    @property
    def is_anomalous(self) -> bool:
        return self.label is Decision.ANOMALOUS


def classify(model: LZModel, seq, cfg: ClassifierConfig) -> Verdict:
    score = model.log_probability(seq)
    label = Decision.NORMAL if score >= cfg.threshold else Decision.ANOMALOUS
    return Verdict(label, score, [score], int(label is Decision.NORMAL))


def subsequence_scores(model: LZModel, seq, length: int, limit: int | None = None) -> np.ndarray:
    """Scores of the consecutive non-overlapping length-``length`` blocks of
    ``seq``; a trailing remainder is dropped."""
    seq = as_symbols(seq, model.alphabet_size)
    count = seq.shape[0] // length
    if limit is not None:
        count = min(count, limit)
    if count == 0:
        raise TooShortError(f"sequence of length {seq.shape[0]} holds no subsequence of length {length}")
    return model.window_log_probabilities(seq[: count * length], length, stride=length)


def majority_score(scores) -> float:
    """Largest threshold at which a strict majority of ``scores`` is still
    normal. ``majority_score(s) >= T`` iff more than half of ``s`` are
    ``>= T``; an even split therefore counts as anomalous."""
    s = np.sort(np.asarray(scores, dtype=np.float64))[::-1]
    if s.size == 0:
        raise InsufficientDataError("no subsequence scores")
    return float(s[s.size // 2])


def majority_classify(model: LZModel, seq, cfg: ClassifierConfig) -> Verdict:
    L = cfg.subsequence_length
    scores = subsequence_scores(model, seq, L, cfg.max_subsequences)
    if scores.size < cfg.min_subsequences:
        raise TooShortError(f"only {scores.size} subsequence(s), need {cfg.min_subsequences}")
    votes = int((scores >= cfg.threshold).sum())
    label = Decision.NORMAL if 2 * votes > scores.size else Decision.ANOMALOUS
    return Verdict(label, majority_score(scores), scores.tolist(), votes)


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class RocReport:
    points: list
    auc: float
    n_normal: int
    n_anomalous: int

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p.fpr for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p.tpr for p in self.points])

    def write_csv(self, stream, header_comments=()) -> None:
        for line in header_comments:
            stream.write(f"# {line}\n")
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["threshold_log2", "fpr", "tpr", "tp", "fp", "tn", "fn"])
        for p in self.points:
            w.writerow([repr(p.threshold), repr(p.fpr), repr(p.tpr), p.tp, p.fp, p.tn, p.fn])
        stream.write(f"# auc={self.auc!r}\n")


def _below(x: float) -> float:
    lo = x - 1.0
    return lo if lo < x else float(np.nextafter(x, -np.inf))


def _above(x: float) -> float:
    hi = x + 1.0
    return hi if hi > x else float(np.nextafter(x, np.inf))


def auc_trapezoid(fpr, tpr) -> float:
    """Trapezoid area under the points sorted by (fpr, tpr).

    Points sharing an fpr form a vertical run with no area; the segment to
    the next fpr starts from the run's largest tpr.
    """
    pts = sorted(zip((float(f) for f in fpr), (float(t) for t in tpr)))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def roc_curve(normal_scores, anomalous_scores) -> RocReport:
    normal = np.asarray(normal_scores, dtype=np.float64).ravel()
    anomalous = np.asarray(anomalous_scores, dtype=np.float64).ravel()
    if normal.size == 0 or anomalous.size == 0:
        raise InsufficientDataError("ROC needs at least one normal and one anomalous score")
    if np.isnan(normal).any() or np.isnan(anomalous).any():
        raise ValueError("scores must not be NaN")
    distinct = np.unique(np.concatenate([normal, anomalous]))
    finite = distinct[np.isfinite(distinct)]
    lo = _below(float(finite.min())) if finite.size else -np.inf
    hi = _above(float(finite.max())) if finite.size else np.inf
    thresholds = np.concatenate([[lo], distinct, [hi]])
    normal_sorted = np.sort(normal)
    anomalous_sorted = np.sort(anomalous)
    # number of scores strictly below each threshold
    fp = np.searchsorted(normal_sorted, thresholds, side="left")
    tp = np.searchsorted(anomalous_sorted, thresholds, side="left")
    points = [
        RocPoint(
            threshold=float(th),
            fpr=float(f) / normal.size,
            tpr=float(t) / anomalous.size,
            tp=int(t),
            fp=int(f),
            tn=int(normal.size - f),
            fn=int(anomalous.size - t),
        )
        for th, f, t in zip(thresholds, fp, tp)
    ]
    auc = auc_trapezoid([p.fpr for p in points], [p.tpr for p in points])
    return RocReport(points=points, auc=auc, n_normal=int(normal.size), n_anomalous=int(anomalous.size))


def threshold_for_fpr(normal_scores, target_fpr: float) -> float:
    """Largest threshold whose false-alarm fraction on ``normal_scores``
    stays at or below ``target_fpr``. May return ``inf`` for target 1."""
    if not 0.0 <= target_fpr <= 1.0:
        raise ValueError(f"target_fpr must lie in [0, 1], got {target_fpr}")
    s = np.sort(np.asarray(normal_scores, dtype=np.float64).ravel())
    if s.size == 0:
        raise InsufficientDataError("calibration needs at least one normal score")
    allowed = math.floor(target_fpr * s.size + 1e-9)
    if allowed >= s.size:
        return math.inf
    return float(s[allowed])


def false_positive_rate(normal_scores, threshold: float) -> float:
    s = np.asarray(normal_scores, dtype=np.float64)
    return float((s < threshold).mean())
