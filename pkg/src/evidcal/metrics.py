"""Segmentation metrics, reliability diagnostics, and the eta sweep.

All point-level scores reduce through a confusion matrix (rows = ground
truth, columns = prediction), which merges additively across scenes. mIoU
over a class subset is the unweighted mean of per-class IoU; classes whose
IoU denominator is zero (never in the ground truth and never predicted)
are excluded from the mean and reported. The sweep's F1 column scores
seen-versus-unseen detection with unseen as the positive class, and the
group recall columns are micro-averages over the group's ground-truth
points.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .calibration import calibrated_stack, dynamic_eta, estimate_u_bar


@dataclass
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be nonnegative")

    @classmethod
    def from_predictions(cls, gt, pred, n_classes: int) -> "ConfusionMatrix":
        gt = np.asarray(gt, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if gt.shape != pred.shape:
            raise ValueError("ground truth and prediction lengths differ")
        if gt.size and (gt.min() < 0 or gt.max() >= n_classes
                        or pred.min() < 0 or pred.max() >= n_classes):
            raise ValueError("class id outside [0, n_classes)")
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (gt, pred), 1)
        return cls(counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp()

    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp()


@dataclass
class MiouResult:
    value: float
    per_class: dict[int, float]
    excluded: list[int] = field(default_factory=list)


def miou(cm: ConfusionMatrix, class_subset) -> MiouResult:
    """Mean IoU over a class subset, excluding zero-denominator classes."""
    subset = [int(c) for c in class_subset]
    if not subset:
        raise ValueError("class subset must be nonempty")
    tp, fp, fn = cm.tp(), cm.fp(), cm.fn()
    per_class, excluded = {}, []
    for c in subset:
        denom = tp[c] + fp[c] + fn[c]
        if denom == 0:
            excluded.append(c)
        else:
            per_class[c] = float(tp[c]) / float(denom)
    if not per_class:
        raise ValueError("every class in the subset has an empty IoU denominator")
    return MiouResult(float(np.mean(list(per_class.values()))), per_class, excluded)


def hmiou(miou_seen: float, miou_unseen: float) -> float:
    """Harmonic mean of the seen and unseen mIoU; 0 when either is 0."""
    if miou_seen < 0 or miou_unseen < 0:
        raise ValueError("mIoU values must be nonnegative")
    if miou_seen == 0.0 or miou_unseen == 0.0:
        return 0.0
    return 2.0 * miou_seen * miou_unseen / (miou_seen + miou_unseen)


def precision_recall_f1(cm: ConfusionMatrix, class_id: int) -> dict[str, float]:
    """Per-class precision/recall/F1; 0 where a denominator vanishes."""
    tp = float(cm.tp()[class_id])
    fp = float(cm.fp()[class_id])
    fn = float(cm.fn()[class_id])
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def unseen_detection_scores(cm: ConfusionMatrix, unseen_ids) -> dict[str, float]:
    """Binary seen-vs-unseen detection scores, unseen as the positive class."""
    unseen = np.zeros(cm.n_classes, dtype=bool)
    unseen[np.asarray(unseen_ids, dtype=np.int64)] = True
    c = cm.counts
    tp = float(c[np.ix_(unseen, unseen)].sum())
    fp = float(c[np.ix_(~unseen, unseen)].sum())
    fn = float(c[np.ix_(unseen, ~unseen)].sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def group_recall(cm: ConfusionMatrix, group_ids) -> float:
    """Micro recall over a class group: correct points / ground-truth points."""
    ids = np.asarray(group_ids, dtype=np.int64)
    gt_points = cm.counts[ids, :].sum()
    if gt_points == 0:
        return 0.0
    return float(cm.tp()[ids].sum()) / float(gt_points)


@dataclass
class ReliabilityReport:
    bin_edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray
    gap: np.ndarray

    @property
    def ece(self) -> float:
        """Count-weighted mean gap."""
        total = self.counts.sum()
        if total == 0:
            return 0.0
        return float((self.counts * self.gap).sum() / total)

    def to_dict(self) -> dict:
        return {
            "bin_edges": [float(v) for v in self.bin_edges],
            "counts": [int(v) for v in self.counts],
            "mean_confidence": [float(v) for v in self.mean_confidence],
            "accuracy": [float(v) for v in self.accuracy],
            "gap": [float(v) for v in self.gap],
            "ece": self.ece,
        }


def reliability(p: np.ndarray, labels, n_bins: int = 10) -> ReliabilityReport:
    """Confidence histogram and per-bin accuracy over uniform [0,1] bins.

    Each point lands in the bin of its maximum (pre-calibration) posterior
    probability; gap = |accuracy - mean confidence| per bin.
    """
    p = np.asarray(p, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("reliability needs a nonempty (points, classes) array")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probabilities must be normalized before binning")
    conf = p.max(axis=1)
    correct = (np.argmax(p, axis=1) == labels).astype(np.float64)
    bins = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    counts = np.zeros(n_bins, dtype=np.int64)
    conf_sum = np.zeros(n_bins)
    correct_sum = np.zeros(n_bins)
    np.add.at(counts, bins, 1)
    np.add.at(conf_sum, bins, conf)
    np.add.at(correct_sum, bins, correct)
    nonzero = counts > 0
    mean_conf = np.zeros(n_bins)
    accuracy = np.zeros(n_bins)
    mean_conf[nonzero] = conf_sum[nonzero] / counts[nonzero]
    accuracy[nonzero] = correct_sum[nonzero] / counts[nonzero]
    gap = np.abs(accuracy - mean_conf) * nonzero
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return ReliabilityReport(edges, counts, mean_conf, accuracy, gap)


def segmentation_report(cm: ConfusionMatrix, seen_ids, unseen_ids) -> dict:
    """The standard metric block: group mIoU, HmIoU, detection F1, recalls."""
    seen_res = miou(cm, seen_ids)
    unseen_res = miou(cm, unseen_ids)
    all_res = miou(cm, list(seen_ids) + list(unseen_ids))
    det = unseen_detection_scores(cm, unseen_ids)
    return {
        "miou_seen": seen_res.value,
        "miou_unseen": unseen_res.value,
        "miou_all": all_res.value,
        "hmiou": hmiou(seen_res.value, unseen_res.value),
        "f1_unseen": det["f1"],
        "precision_unseen": det["precision"],
        "recall_seen": group_recall(cm, seen_ids),
        "recall_unseen": group_recall(cm, unseen_ids),
        "excluded_classes": sorted(set(seen_res.excluded + unseen_res.excluded)),
        "per_class_iou": {**seen_res.per_class, **unseen_res.per_class},
    }


def eta_sweep(p: np.ndarray, u: np.ndarray, gt: np.ndarray, seen_class_mask: np.ndarray,
              eta_grid, include_dynamic: bool = True) -> list[dict]:
    """Metric table across calibration factors, plus the dynamic-eta row.

    ``p`` are pre-calibration posteriors, ``u`` per-point uncertainties.
    Rows carry eta (float, or the string "dynamic"), group mIoU/HmIoU,
    unseen-detection F1, and group recalls.
    """
    p = np.asarray(p, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.int64)
    seen_class_mask = np.asarray(seen_class_mask, dtype=bool)
    n_classes = p.shape[1]
    seen_ids = np.flatnonzero(seen_class_mask)
    unseen_ids = np.flatnonzero(~seen_class_mask)
    rows = []

    def evaluate(eta, tag):
        _, pred = calibrated_stack(p, eta, seen_class_mask)
        cm = ConfusionMatrix.from_predictions(gt, pred, n_classes)
        report = segmentation_report(cm, seen_ids, unseen_ids)
        report.pop("per_class_iou")
        report["excluded_classes"] = len(report["excluded_classes"])
        return {"eta": tag, **report}

    for eta in eta_grid:
        if not 0.0 <= float(eta) <= 1.0:
            raise ValueError("eta grid must lie inside [0, 1]")
        rows.append(evaluate(float(eta), float(eta)))
    if include_dynamic:
        u = np.asarray(u, dtype=np.float64)
        u_bar = estimate_u_bar(p, u, seen_class_mask)
        rows.append(evaluate(dynamic_eta(u, u_bar), "dynamic"))
    return rows


SWEEP_COLUMNS = ("eta", "miou_seen", "miou_unseen", "miou_all", "hmiou",
                 "f1_unseen", "precision_unseen", "recall_seen", "recall_unseen",
                 "excluded_classes")


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in SWEEP_COLUMNS})


def uncertainty_by_class(u: np.ndarray, gt: np.ndarray, n_classes: int) -> dict[int, float]:
    """Mean estimated uncertainty per ground-truth class (present classes only)."""
    u = np.asarray(u, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.int64)
    out = {}
    for c in range(n_classes):
        mask = gt == c
        if mask.any():
            out[c] = float(u[mask].mean())
    return out


def write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=1, sort_keys=True)
        f.write("\n")
