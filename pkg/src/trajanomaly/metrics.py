"""Threshold-free detection metrics over frame scores, with ignore regions."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .simdata import ABNORMAL, ANOMALY_CLASSES, NORMAL, TRANSITION, Scene

log = logging.getLogger(__name__)

HEADLINE = ("auroc", "aupr_abnormal", "aupr_normal", "fpr_at_95_tpr")


@dataclass
class LabeledScores:
    scores: np.ndarray
    labels: np.ndarray  # bool, True = abnormal
    classes: np.ndarray | None = None  # anomaly class per frame ("" for normal)

    def __len__(self) -> int:
        return self.scores.size


def filter_ignore(scores, states, classes=None) -> LabeledScores:
    """Drop transition frames; labels become True for abnormal."""
    scores = np.asarray(scores, dtype=np.float64)
    states = np.asarray(states)
    if scores.shape != states.shape:
        raise ValueError(f"{scores.size} scores but {states.size} labels")
    unknown = set(np.unique(states)) - {NORMAL, TRANSITION, ABNORMAL}
    if unknown:
        raise ValueError(f"unknown frame states {sorted(unknown)}")
    keep = states != TRANSITION
    if not keep.any():
        raise ValueError("no evaluable frames")
    cls = None if classes is None else np.asarray(classes, dtype=object)[keep]
    return LabeledScores(scores[keep], states[keep] == ABNORMAL, cls)


def _check_both(labels: np.ndarray) -> None:
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("metric needs both normal and abnormal samples")


def _counts(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (TP, FP) at each distinct threshold, highest first, starting at (0, 0)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    if np.isnan(scores).any():
        raise ValueError("scores contain NaN")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return np.r_[0, tp], np.r_[0, fp]


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, TPR) at every distinct threshold, from (0, 0) to (1, 1)."""
    labels = np.asarray(labels, dtype=bool)
    _check_both(labels)
    tp, fp = _counts(scores, labels)
    return fp / fp[-1], tp / tp[-1]


def auroc(scores, labels) -> float:
    fpr, tpr = roc_points(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)


def aupr(scores, labels, positive: bool = True) -> float:
    """Step-interpolated area under precision-recall.

    ``positive=False`` treats the normal class as positive by negating scores.
    Precision at each achieved recall is the envelope max over higher recalls.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not positive:
        scores, labels = -scores, ~labels
    if not labels.any():
        raise ValueError("no positive samples")
    tp, fp = _counts(scores, labels)
    tp, fp = tp[1:], fp[1:]
    recall = tp / tp[-1]
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * envelope))


def fpr_at_95_tpr(scores, labels) -> float:
    fpr, tpr = roc_points(scores, labels)
    return float(fpr[tpr >= 0.95].min())


def per_class_auroc(scores, labels, classes, anomaly_class: str) -> float | None:
    """AUROC on normal frames plus frames of one anomaly class; None when the class is absent."""
    labels = np.asarray(labels, dtype=bool)
    classes = np.asarray(classes, dtype=object)
    target = labels & (classes == anomaly_class)
    if not target.any():
        log.info("anomaly class %s not present; skipped", anomaly_class)
        return None
    keep = ~labels | target
    return auroc(np.asarray(scores, dtype=np.float64)[keep], labels[keep])


def headline(data: LabeledScores) -> dict[str, float]:
    return {
        "auroc": auroc(data.scores, data.labels),
        "aupr_abnormal": aupr(data.scores, data.labels, positive=True),
        "aupr_normal": aupr(data.scores, data.labels, positive=False),
        "fpr_at_95_tpr": fpr_at_95_tpr(data.scores, data.labels),
    }


def frame_data(series: Sequence, scenes: Sequence[Scene]) -> LabeledScores:
    """Concatenate frame scores of matching scenes; uncovered and transition frames are dropped."""
    by_id = {s.scene_id: s for s in scenes}
    scores, states, classes = [], [], []
    for ser in series:
        if ser.scene_id not in by_id:
            raise ValueError(f"no labels for scene {ser.scene_id}")
        scene = by_id[ser.scene_id]
        if ser.n_frames != scene.n_frames:
            raise ValueError(f"scene {scene.scene_id}: {ser.n_frames} scored frames, {scene.n_frames} labelled")
        f = ser.frame
        ok = ~np.isnan(f)
        scores.append(f[ok])
        states.append(np.asarray(scene.states)[ok])
        classes.append(np.array([lab.anomaly_class or "" for lab in scene.labels], dtype=object)[ok])
    if not scores:
        raise ValueError("no evaluable frames")
    return filter_ignore(np.concatenate(scores), np.concatenate(states), np.concatenate(classes))


@dataclass
class Report:
    metrics: dict[str, float]
    per_class: dict[str, float] = field(default_factory=dict)
    n_frames: int = 0


def evaluate(series: Sequence, scenes: Sequence[Scene], classes: Sequence[str] = ANOMALY_CLASSES) -> Report:
    data = frame_data(series, scenes)
    per = {}
    for c in classes:
        v = per_class_auroc(data.scores, data.labels, data.classes, c)
        if v is not None:
            per[c] = v
    return Report(headline(data), per, len(data))


def summarize(reports: Sequence[Report]) -> dict[str, tuple[float, float]]:
    """Mean and population std of every metric over runs (per-class keys prefixed ``auroc:``)."""
    if not reports:
        raise ValueError("no reports to summarize")
    keys = list(reports[0].metrics) + [f"auroc:{c}" for c in reports[0].per_class]
    out = {}
    for k in keys:
        vals = [r.metrics[k] if ":" not in k else r.per_class.get(k.split(":", 1)[1], np.nan) for r in reports]
        out[k] = (float(np.mean(vals)), float(np.std(vals)))
    return out


def write_report(path: str | os.PathLike, reports: Sequence[Report]) -> Path:
    """CSV ``section,metric,mean,std,n``: headline rows, then one row per anomaly class."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary = summarize(reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("section", "metric", "mean", "std", "n_runs"))
        for k, (m, s) in summary.items():
            section, name = ("per_class", k.split(":", 1)[1]) if ":" in k else ("overall", k)
            w.writerow((section, name, repr(m), repr(s), len(reports)))
    return path


def read_report(path: str | os.PathLike) -> dict[tuple[str, str], tuple[float, float]]:
    with open(path, newline="") as fh:
        return {(r["section"], r["metric"]): (float(r["mean"]), float(r["std"])) for r in csv.DictReader(fh)}


def write_roc(path: str | os.PathLike, data: LabeledScores) -> Path:
    fpr, tpr = roc_points(data.scores, data.labels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("fpr", "tpr"))
        w.writerows(zip(map(repr, fpr.tolist()), map(repr, tpr.tolist())))
    return path
