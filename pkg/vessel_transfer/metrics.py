"""
Segmentation scoring: thresholding, pixel confusion counts, accuracy /
sensitivity / specificity and the ROC curve with its area.

Metrics whose denominator is zero are reported as ``None`` (printed as
``undefined``), never as NaN.
"""

import dataclasses
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, ShapeError, UndefinedMetricError
from .imgio import GrayImage, MaskImage, RangeTag

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ConfigurationError(f"confusion counts must be >= 0, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclasses.dataclass(frozen=True)
class Scores:
    """Accuracy, sensitivity, specificity; ``None`` where undefined."""

    acc: Optional[float]
    sen: Optional[float]
    spe: Optional[float]


@dataclasses.dataclass(frozen=True, eq=False)
class RocCurve:
    """
    ROC points from the strictest threshold to the loosest.

    ``thresholds[0]`` is ``+inf`` for the ``(0, 0)`` endpoint; the last
    threshold is the smallest score and gives ``(1, 1)``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray


@dataclasses.dataclass(frozen=True)
class EvaluationRow:
    """One evaluation line, ``acc sen spe auc``."""

    acc: Optional[float]
    sen: Optional[float]
    spe: Optional[float]
    auc: Optional[float]


def apply_threshold(prob: GrayImage, t: float) -> MaskImage:
    """Binarise a unit probability map: 1 where ``prob >= t``."""
    if not 0.0 <= t <= 1.0:
        raise ConfigurationError(f"threshold must lie in [0, 1], got {t}")
    if prob.range_tag is not RangeTag.UNIT:
        raise ConfigurationError("thresholding needs a unit-range probability map")
    return MaskImage((prob.pixels >= t).astype(np.uint8))


def _roi_selector(shape: Tuple[int, ...], roi: Optional[MaskImage]) -> np.ndarray:
    if roi is None:
        return np.ones(shape, dtype=bool)
    if roi.pixels.shape != shape:
        raise ShapeError(f"roi {roi.pixels.shape} does not match image {shape}")
    return roi.pixels.astype(bool)


def confusion(pred: MaskImage, truth: MaskImage, roi: Optional[MaskImage] = None) -> ConfusionCounts:
    """Pixel counts of ``pred`` against ``truth``, restricted to ``roi`` when given."""
    if pred.pixels.shape != truth.pixels.shape:
        raise ShapeError(f"prediction {pred.pixels.shape} does not match truth {truth.pixels.shape}")
    inside = _roi_selector(truth.pixels.shape, roi)
    p = pred.pixels.astype(bool)[inside]
    y = truth.pixels.astype(bool)[inside]
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & y)),
        fp=int(np.count_nonzero(p & ~y)),
        tn=int(np.count_nonzero(~p & ~y)),
        fn=int(np.count_nonzero(~p & y)),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def metrics(c: ConfusionCounts) -> Scores:
    """
    acc = (tp + tn) / total, sen = tp / (tp + fn), spe = tn / (tn + fp).

    Raises:
        UndefinedMetricError: no pixels were counted.
    """
    if c.total == 0:
        raise UndefinedMetricError("no pixels were evaluated")
    return Scores(
        acc=_ratio(c.tp + c.tn, c.total),
        sen=_ratio(c.tp, c.tp + c.fn),
        spe=_ratio(c.tn, c.tn + c.fp),
    )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> Tuple[RocCurve, float]:
    """
    ROC curve over the unique score thresholds and its trapezoidal area.

    A pixel is predicted positive at threshold ``t`` when ``score >= t``.
    Tied scores move along the diagonal, so the area equals the Mann-Whitney
    statistic ``P(s+ > s-) + P(s+ = s-) / 2``.

    Raises:
        UndefinedMetricError: only one class is present.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores but {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ConfigurationError("labels must be 0 or 1")
    y = y.astype(bool)
    positives = int(np.count_nonzero(y))
    negatives = y.size - positives
    if positives == 0 or negatives == 0:
        raise UndefinedMetricError("AUC needs both vessel and background pixels")

    thresholds = np.unique(s)[::-1]
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    # counts of scores >= t
    tp = positives - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = negatives - np.searchsorted(neg_sorted, thresholds, side="left")
    tpr = np.concatenate([[0.0], tp / positives])
    fpr = np.concatenate([[0.0], fp / negatives])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    curve = RocCurve(np.concatenate([[np.inf], thresholds]), fpr, tpr)
    return curve, auc


def evaluate_pixels(
    scores: np.ndarray, truth: np.ndarray, threshold: float = 0.5
) -> EvaluationRow:
    """Metrics and AUC of flat score and 0/1 truth arrays."""
    if scores.shape != truth.shape:
        raise ShapeError(f"{scores.size} scores but {truth.size} truth pixels")
    if scores.size == 0:
        raise UndefinedMetricError("no pixels were evaluated")
    pred = (scores >= threshold).astype(np.uint8)
    counts = confusion(MaskImage(pred[None, :]), MaskImage(truth[None, :].astype(np.uint8)))
    result = metrics(counts)
    try:
        _, auc = roc_auc(scores, truth)
    except UndefinedMetricError as e:
        logger.warning("AUC undefined: %s", e.message)
        auc = None
    return EvaluationRow(result.acc, result.sen, result.spe, auc)


def pool_pixels(
    pairs: List[Tuple[Union[GrayImage, MaskImage], MaskImage, Optional[MaskImage]]]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Concatenate ``(prediction, truth, roi)`` triples into flat score/label arrays.

    A ``MaskImage`` prediction (a second observer's annotation) contributes
    its 0/1 values as scores.
    """
    all_scores, all_labels = [], []
    for pred, truth, roi in pairs:
        if pred.pixels.shape != truth.pixels.shape:
            raise ShapeError(
                f"prediction {pred.pixels.shape} does not match truth {truth.pixels.shape}"
            )
        inside = _roi_selector(truth.pixels.shape, roi)
        all_scores.append(pred.pixels.astype(np.float64)[inside])
        all_labels.append(truth.pixels[inside])
    if not all_scores:
        raise UndefinedMetricError("no images to evaluate")
    return np.concatenate(all_scores), np.concatenate(all_labels)
