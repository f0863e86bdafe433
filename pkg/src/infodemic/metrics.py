"""Classification, regression and ranking metrics."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import CLASSES
from .errors import EmptyInput


def _as_class_index(labels: Sequence) -> np.ndarray:
    return np.array([CLASSES.index(x) if isinstance(x, str) else int(x) for x in labels], dtype=np.int64)


def classification_report(pred_labels: Sequence, true_labels: Sequence) -> dict[str, float]:
    """Accuracy plus macro-averaged precision, recall and F1 over both classes.

    Labels may be class names or indices (0 = non_rumor, 1 = rumor).  Any 0/0
    ratio counts as 0.
    """
    if len(pred_labels) == 0 or len(true_labels) == 0:
        raise EmptyInput("classification_report needs at least one label")
    if len(pred_labels) != len(true_labels):
        raise ValueError("prediction and truth lengths differ")
    pred, true = _as_class_index(pred_labels), _as_class_index(true_labels)
    precisions, recalls, f1s = [], [], []
    for c in range(len(CLASSES)):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return {
        "accuracy": float(np.mean(pred == true)),
        "precision": float(np.mean(precisions)),
        "recall": float(np.mean(recalls)),
        "macF1": float(np.mean(f1s)),
    }


def regression_metrics(preds: Sequence[float], targets: Sequence[float], floor_at_zero: bool = False) -> dict[str, float]:
    """MSE and MSLE (natural log, ``log(1 + x)``).

    ``floor_at_zero`` clips predictions at 0 before the MSLE only.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.size == 0 or y.size == 0:
        raise EmptyInput("regression_metrics needs at least one value")
    if p.shape != y.shape:
        raise ValueError("prediction and target lengths differ")
    mse = float(np.mean((p - y) ** 2))
    pl = np.maximum(p, 0.0) if floor_at_zero else p
    if np.any(pl <= -1) or np.any(y <= -1):
        raise ValueError("MSLE needs values greater than -1")
    msle = float(np.mean((np.log1p(pl) - np.log1p(y)) ** 2))
    return {"mse": mse, "msle": msle}


def dcg(relevances_in_rank_order: Sequence[float]) -> float:
    rel = np.asarray(relevances_in_rank_order, dtype=np.float64)
    discounts = np.log2(np.arange(2, rel.size + 2))
    return float(np.sum(rel / discounts))


def ndcg(scores: Sequence[float], relevances: Sequence[float]) -> float:
    """Full-list nDCG with linear gain; ties in ``scores`` keep input order."""
    s = np.asarray(scores, dtype=np.float64)
    rel = np.asarray(relevances, dtype=np.float64)
    if s.size == 0 or rel.size == 0:
        raise EmptyInput("ndcg needs at least one item")
    if s.shape != rel.shape:
        raise ValueError("scores and relevances lengths differ")
    if np.any(rel < 0):
        raise ValueError("relevances must be non-negative")
    order = np.argsort(-s, kind="stable")
    ideal = dcg(np.sort(rel)[::-1])
    if ideal == 0.0:
        return 1.0
    return dcg(rel[order]) / ideal
