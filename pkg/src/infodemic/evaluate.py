"""Split evaluation and the observation-fraction sweep."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .data import LabelSet, PropagationEvent
from .errors import EmptyInput
from .features import EventSample, build_samples
from .metrics import classification_report, ndcg, regression_metrics
from .model import Predictions

DEFAULT_FRACTIONS = (0.2, 0.4, 0.6, 0.8)

_NUM = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["rumor", "virality", "vulnerability", "meta"],
    "properties": {
        "rumor": {"type": "object", "required": ["accuracy", "precision", "recall", "macF1"],
                  "properties": {k: {"type": "number", "minimum": 0, "maximum": 1}
                                 for k in ("accuracy", "precision", "recall", "macF1")}},
        "virality": {"type": "object", "required": ["mse", "msle", "ndcg"],
                     "properties": {"mse": {"type": "number", "minimum": 0},
                                    "msle": {"type": "number", "minimum": 0},
                                    "ndcg": {"type": "number", "minimum": 0, "maximum": 1}}},
        "vulnerability": {"type": "object", "required": ["mse", "msle", "ndcg"],
                          "properties": {"mse": {**_NUM, "minimum": 0}, "msle": {**_NUM, "minimum": 0},
                                         "ndcg": {**_NUM, "minimum": 0, "maximum": 1}}},
        "meta": {"type": "object",
                 "required": ["split", "obs_fraction", "event_count", "labeled_user_count", "seed"]},
    },
}


@dataclass
class MetricsReport:
    rumor: dict
    virality: dict
    vulnerability: dict  # values are None when the split has no labeled users
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(dict(d["rumor"]), dict(d["virality"]), dict(d["vulnerability"]), dict(d["meta"]))


def report_from_predictions(preds: Sequence[Predictions], samples: Sequence[EventSample],
                            meta: Optional[dict] = None) -> MetricsReport:
    if not samples:
        raise EmptyInput("cannot evaluate an empty split")
    rumor_pred = [int(torch.argmax(p.rumor_logits)) for p in preds]
    rumor_true = [s.rumor_target for s in samples]
    vir_pred = np.array([float(p.virality) for p in preds])
    vir_true = np.array([s.virality_target for s in samples])

    vul_pred, vul_true = [], []
    for p, s in zip(preds, samples):
        if s.vuln_mask is not None and bool(s.vuln_mask.any()):
            vul_pred.extend(p.vulnerability[s.vuln_mask].tolist())
            vul_true.extend(s.vuln_target[s.vuln_mask].tolist())

    virality = regression_metrics(vir_pred, vir_true, floor_at_zero=True)
    virality["ndcg"] = ndcg(vir_pred, 2.0 ** vir_true)
    if vul_true:
        vulnerability = regression_metrics(vul_pred, vul_true)
        vulnerability["ndcg"] = ndcg(vul_pred, vul_true)
    else:
        vulnerability = {"mse": None, "msle": None, "ndcg": None}
    meta = dict(meta or {})
    meta.setdefault("split", None)
    meta.setdefault("obs_fraction", None)
    meta.setdefault("seed", None)
    meta["event_count"] = len(samples)
    meta["labeled_user_count"] = len(vul_true)
    return MetricsReport(classification_report(rumor_pred, rumor_true), virality, vulnerability, meta)


def predict_samples(model, samples: Sequence[EventSample]) -> list[Predictions]:
    was = model.training
    model.eval()
    try:
        with torch.no_grad():
            return [model(s)[0] for s in samples]
    finally:
        model.train(was)


def evaluate_samples(model_or_fn, samples: Sequence[EventSample], meta: Optional[dict] = None) -> MetricsReport:
    """Evaluate a model (dropout off) or any ``sample -> Predictions`` callable."""
    if not samples:
        raise EmptyInput("cannot evaluate an empty split")
    if isinstance(model_or_fn, torch.nn.Module):
        preds = predict_samples(model_or_fn, samples)
    else:
        preds = [model_or_fn(s) for s in samples]
    return report_from_predictions(preds, samples, meta)


def evaluate(model, events: Sequence[PropagationEvent], labels: LabelSet, user_table, text_encoder,
             obs_fraction: float, split: str = "test", seed: Optional[int] = None) -> MetricsReport:
    if not events:
        raise EmptyInput("cannot evaluate an empty split")
    samples = build_samples(events, obs_fraction, user_table, text_encoder, labels)
    return evaluate_samples(model, samples, {"split": split, "obs_fraction": obs_fraction, "seed": seed})


def observation_sweep(model, events, labels, user_table, text_encoder,
                      fractions: Sequence[float] = DEFAULT_FRACTIONS, split: str = "test",
                      seed: Optional[int] = None) -> list[MetricsReport]:
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"observation fraction {f} outside (0, 1]")
    return [evaluate(model, events, labels, user_table, text_encoder, f, split, seed) for f in fractions]


SWEEP_COLUMNS = ("obs_fraction", "rumor_accuracy", "rumor_precision", "rumor_recall", "rumor_macF1",
                 "virality_mse", "virality_msle", "virality_ndcg",
                 "vulnerability_mse", "vulnerability_msle", "vulnerability_ndcg")


def sweep_rows(reports: Sequence[MetricsReport]) -> list[dict]:
    rows = []
    for r in reports:
        row = {"obs_fraction": r.meta["obs_fraction"]}
        for task in ("rumor", "virality", "vulnerability"):
            for k, v in getattr(r, task).items():
                row[f"{task}_{k}"] = v
        rows.append(row)
    return rows


def write_sweep_csv(path, reports: Sequence[MetricsReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in sweep_rows(reports):
            w.writerow({k: ("" if row.get(k) is None else row[k]) for k in SWEEP_COLUMNS})
