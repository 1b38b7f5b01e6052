"""Global confusion matrix and the segmentation, label-efficiency and transfer metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .errors import EmptyEvaluationError, MissingBaselineError, RatioDomainError, ShapeError

SCARCE_FRACTIONS = (10.0, 2.5, 1.25)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel counts with landslide (class 1) as the positive class."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    merge = __add__

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_tuple(self):
        return (self.tp, self.fp, self.fn, self.tn)

    @classmethod
    def from_masks(cls, pred, true) -> "ConfusionMatrix":
        pred = np.asarray(pred)
        true = np.asarray(true)
        if pred.shape != true.shape:
            raise ShapeError(f"prediction shape {pred.shape} != ground truth shape {true.shape}")
        for name, arr in (("prediction", pred), ("ground truth", true)):
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise ShapeError(f"{name} contains values outside {{0, 1}}")
        p = pred.astype(bool).ravel()
        t = true.astype(bool).ravel()
        tp = int(np.count_nonzero(p & t))
        fp = int(np.count_nonzero(p & ~t))
        fn = int(np.count_nonzero(~p & t))
        return cls(tp, fp, fn, p.size - tp - fp - fn)


def accumulate(cm: ConfusionMatrix, pred_mask, true_mask) -> ConfusionMatrix:
    return cm + ConfusionMatrix.from_masks(pred_mask, true_mask)


@dataclass(frozen=True)
class MetricReport:
    miou: float
    f1: float
    precision: float
    recall: float
    macc: float                 # overall pixel accuracy, as reported under "mAcc"
    iou_ls: float = 0.0
    iou_bg: float = 0.0
    mean_class_acc: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den, empty=0.0):
    return num / den if den else empty


def segmentation_metrics(cm: ConfusionMatrix) -> MetricReport:
    """Thresholded metrics from one global matrix.

    Precision, recall and F1 are 0 when their denominator is 0.  A class whose IoU
    union is empty (never present, never predicted) scores IoU 1.
    """
    if cm.total == 0:
        raise EmptyEvaluationError("confusion matrix holds no pixels")
    tp, fp, fn, tn = cm.as_tuple()
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    iou_ls = _ratio(tp, tp + fp + fn, 1.0)
    iou_bg = _ratio(tn, tn + fp + fn, 1.0)
    per_class = [v for v, present in ((recall, tp + fn), (_ratio(tn, tn + fp), tn + fp)) if present]
    return MetricReport(
        miou=(iou_ls + iou_bg) / 2,
        f1=f1,
        precision=precision,
        recall=recall,
        macc=(tp + tn) / cm.total,
        iou_ls=iou_ls,
        iou_bg=iou_bg,
        mean_class_acc=float(np.mean(per_class)),
    )


@dataclass
class EfficiencyReport:
    scores: dict[float, float]
    rpd: dict[float, float]
    de: float | None
    scarce: tuple[float, ...] = SCARCE_FRACTIONS
    model: str = ""

    def to_dict(self) -> dict:
        return {"model": self.model,
                "scores": {_k(k): v for k, v in sorted(self.scores.items(), reverse=True)},
                "rpd": {_k(k): v for k, v in sorted(self.rpd.items(), reverse=True)},
                "de": self.de, "scarce_fractions": list(self.scarce)}


def _k(k: float) -> str:
    return f"{k:g}"


def efficiency_report(scores: Mapping[float, float], model: str = "",
                      scarce=SCARCE_FRACTIONS) -> EfficiencyReport:
    """RPD(k) = 1 - P(k)/P(100) for every k; DE = mean retention over the scarce fractions present."""
    scores = {float(k): float(v) for k, v in scores.items()}
    if 100.0 not in scores:
        raise MissingBaselineError("scores must include the k=100 full-data baseline")
    base = scores[100.0]
    if not base > 0:
        raise RatioDomainError(f"full-data score must be positive, got {base}")
    rpd = {k: 1.0 - v / base for k, v in scores.items()}
    used = [k for k in scarce if k in scores]
    de = float(np.mean([scores[k] / base for k in used])) if used else None
    return EfficiencyReport(scores, rpd, de, tuple(scarce), model)


@dataclass
class TransferReport:
    p_in: float
    p_gen: float
    p_ext: float
    r_site: float = field(init=False)
    r_ext: float = field(init=False)
    r_2hop: float = field(init=False)
    model: str = ""

    def __post_init__(self):
        self.r_site = self.p_gen / self.p_in
        self.r_2hop = self.p_ext / self.p_in
        self.r_ext = self.p_ext / self.p_gen if self.p_gen else float("nan")

    def to_dict(self) -> dict:
        return {"model": self.model, "p_in": self.p_in, "p_gen": self.p_gen, "p_ext": self.p_ext,
                "r_site": self.r_site, "r_ext": self.r_ext, "r_2hop": self.r_2hop}


def transfer_report(p_in: float, p_gen: float, p_ext: float, model: str = "") -> TransferReport:
    if not p_in > 0:
        raise RatioDomainError(f"in-domain score must be positive, got {p_in}")
    return TransferReport(float(p_in), float(p_gen), float(p_ext), model=model)
