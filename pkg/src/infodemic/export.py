"""CSV exports of community assignments, user representations and predictions."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .features import EventSample

EXPORT_KINDS = ("communities", "embeddings", "predictions")

COMMUNITY_COLUMNS = ("user_id", "event_id", "community", "weight")
PREDICTION_COLUMNS = ("event_id", "rumor_probability", "predicted_virality", "user_id", "vulnerability")


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh)


def _eval_outputs(model, samples: Sequence[EventSample]) -> Iterable:
    was = model.training
    model.eval()
    try:
        with torch.no_grad():
            for s in samples:
                preds, inter = model(s)
                x4 = model.heads["vulnerability"].refine(inter, s)
                yield s, preds, inter, x4
    finally:
        model.train(was)


def _n_communities(model) -> int:
    return model.config.n_communities


def export_communities(model, samples: Sequence[EventSample], path, raw_path=None) -> None:
    """One row per (event, user): hard community and its assignment weight.

    ``raw_path`` additionally receives the full assignment rows.
    """
    fh, w = _writer(path)
    raw_fh, raw_w = _writer(raw_path) if raw_path is not None else (None, None)
    try:
        w.writerow(COMMUNITY_COLUMNS)
        if raw_w:
            raw_w.writerow(["user_id", "event_id"] + [f"c{k}" for k in range(_n_communities(model))])
        for s, _, inter, _ in _eval_outputs(model, samples):
            c = inter.pooled.assignment
            weight, idx = c.max(dim=1)
            for i, u in enumerate(s.users):
                w.writerow([u, s.event_id, int(idx[i]), repr(float(weight[i]))])
                if raw_w:
                    raw_w.writerow([u, s.event_id] + [repr(float(v)) for v in c[i]])
    finally:
        fh.close()
        if raw_fh:
            raw_fh.close()


def export_embeddings(model, samples: Sequence[EventSample], path) -> None:
    """Matrix of refined user representations, one row per (event, user)."""
    fh, w = _writer(path)
    try:
        w.writerow(["user_id", "event_id"] + [f"x{k}" for k in range(model.config.dim)])
        for s, _, _, x4 in _eval_outputs(model, samples):
            for i, u in enumerate(s.users):
                w.writerow([u, s.event_id] + [repr(float(v)) for v in x4[i]])
    finally:
        fh.close()


def export_predictions(model, samples: Sequence[EventSample], path) -> None:
    fh, w = _writer(path)
    try:
        w.writerow(PREDICTION_COLUMNS)
        for s, p, _, _ in _eval_outputs(model, samples):
            prob, vir = p.rumor_probability(), float(p.virality)
            for i, u in enumerate(s.users):
                w.writerow([s.event_id, repr(prob), repr(vir), u, repr(float(p.vulnerability[i]))])
    finally:
        fh.close()


def export_artifacts(model, samples: Sequence[EventSample], out_dir, kinds: Sequence[str] = EXPORT_KINDS) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for kind in kinds:
        if kind == "communities":
            written[kind] = out / "communities.csv"
            written["assignments"] = out / "assignments.csv"
            export_communities(model, samples, written[kind], written["assignments"])
        elif kind == "embeddings":
            written[kind] = out / "embeddings.csv"
            export_embeddings(model, samples, written[kind])
        elif kind == "predictions":
            written[kind] = out / "predictions.csv"
            export_predictions(model, samples, written[kind])
        else:
            raise ValueError(f"unknown export kind {kind!r}")
    return written
