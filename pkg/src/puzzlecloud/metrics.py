"""Classification and part-segmentation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, LabelError


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise DimensionError("metric over zero items")
    return pred, truth


def _mean(values):
    # correctly rounded sum so results do not depend on summation order
    return math.fsum(values) / len(values)


def overall_accuracy(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.count_nonzero(pred == truth)) / pred.size


@dataclass
class ConfusionTally:
    counts: np.ndarray  # counts[truth, pred]

    @classmethod
    def from_labels(cls, pred, truth, num_classes):
        pred, truth = _pair(pred, truth)
        if pred.min() < 0 or truth.min() < 0 or max(pred.max(), truth.max()) >= num_classes:
            raise LabelError(f"labels outside [0, {num_classes})")
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (truth, pred), 1)
        return cls(counts)

    @property
    def totals(self):
        return self.counts.sum(axis=1)

    @property
    def total(self):
        return int(self.counts.sum())

    def accuracy(self):
        return float(np.trace(self.counts)) / self.total

    def per_class_accuracy(self):
        """Recall per class; NaN for classes absent from the truth."""
        totals = self.totals
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, np.diag(self.counts) / np.maximum(totals, 1), np.nan)


def shape_miou(pred_parts, truth_parts, part_ids):
    """Mean over ``part_ids`` of point-set IoU; an empty union counts as 1."""
    pred, truth = _pair(pred_parts, truth_parts)
    part_ids = list(part_ids)
    if not part_ids:
        raise ConfigError("shape_miou needs at least one part id")
    ious = []
    for p in part_ids:
        in_pred = pred == p
        in_truth = truth == p
        union = np.count_nonzero(in_pred | in_truth)
        inter = np.count_nonzero(in_pred & in_truth)
        ious.append(1.0 if union == 0 else inter / union)
    return _mean(ious)


@dataclass
class IoUReport:
    shape_mious: list = field(default_factory=list)
    shape_categories: list = field(default_factory=list)
    category_miou: dict = field(default_factory=dict)
    instance_miou: float = float("nan")
    class_average_miou: float = float("nan")

    def to_dict(self):
        return {
            "category_miou": {str(k): v for k, v in self.category_miou.items()},
            "instance_miou": self.instance_miou,
            "class_average_miou": self.class_average_miou,
        }


def category_miou(shape_mious, categories):
    """Group shape mIoUs by category.

    Returns an :class:`IoUReport` with the mean per category, the instance
    average over all shapes and the unweighted mean of the category values.
    """
    shape_mious = [float(v) for v in shape_mious]
    categories = list(categories)
    if len(shape_mious) != len(categories):
        raise DimensionError("one category per shape is required")
    groups = {}
    for v, c in zip(shape_mious, categories):
        groups.setdefault(c, []).append(v)
    per_cat = {c: _mean(vs) for c, vs in sorted(groups.items(), key=lambda kv: str(kv[0]))}
    return IoUReport(
        shape_mious=shape_mious,
        shape_categories=categories,
        category_miou=per_cat,
        instance_miou=_mean(shape_mious) if shape_mious else float("nan"),
        class_average_miou=_mean(list(per_cat.values())) if per_cat else float("nan"),
    )


def per_part_accuracy(pred_parts, truth_parts, part_names=None):
    """Per-part recall, its mean over parts present in the truth, and pointwise accuracy.

    ``part_names`` maps part id -> display name (list or dict); without it the
    ids themselves are used as keys.
    """
    pred, truth = _pair(pred_parts, truth_parts)
    present = np.unique(truth)
    if part_names is None:
        names = {int(p): int(p) for p in present}
    elif isinstance(part_names, dict):
        names = dict(part_names)
    else:
        names = dict(enumerate(part_names))
    per_part = {}
    for pid, name in names.items():
        mask = truth == pid
        n = np.count_nonzero(mask)
        if n:
            per_part[name] = float(np.count_nonzero(pred[mask] == pid)) / n
    average = _mean(list(per_part.values())) if per_part else float("nan")
    return per_part, average, overall_accuracy(pred, truth)
