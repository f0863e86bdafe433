"""Stage functions shared by the command line and the experiment scripts."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .config import RunConfig
from .data import CorpusSplits, LabelSet, PropagationEvent, read_events, read_json, split_corpus, derive_labels
from .features import build_samples
from .model import init_model
from .pretrain import UserEmbeddingTable, build_global_user_graph, pretrain_user_embeddings
from .text import make_text_encoder
from .trainer import TrainResult, Trainer, init_virality_bias, train

EVENTS_FILE = "events.jsonl"
LABELS_FILE = "labels.json"
SPLITS_FILE = "splits.json"
EMBEDDINGS_FILE = "user_embeddings.txt"
CHECKPOINT_FILE = "model.ckpt"
SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class Corpus:
    events: list[PropagationEvent]
    labels: LabelSet
    splits: Optional[CorpusSplits] = None

    def __post_init__(self):
        self.by_id = {e.event_id: e for e in self.events}

    def split_events(self, name: str) -> list[PropagationEvent]:
        if self.splits is None:
            raise ValueError("corpus has no splits")
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return [self.by_id[i] for i in getattr(self.splits, name)]


def prepare_corpus(events: list[PropagationEvent], seed: int) -> Corpus:
    return Corpus(events, derive_labels(events), split_corpus(events, seed))


def load_corpus(data_dir, need_labels: bool = True, need_splits: bool = True) -> Corpus:
    d = Path(data_dir)
    events = read_events(d / EVENTS_FILE)
    labels = LabelSet.from_dict(read_json(d / LABELS_FILE)) if need_labels else derive_labels(events)
    splits = CorpusSplits.from_dict(read_json(d / SPLITS_FILE)) if need_splits else None
    return Corpus(events, labels, splits)


def pretrain_for(corpus: Corpus, cfg: RunConfig) -> UserEmbeddingTable:
    graph = build_global_user_graph(corpus.split_events("train"))
    return pretrain_user_embeddings(graph, cfg.pretrain, cfg.run.seed)


def text_encoder_for(cfg: RunConfig):
    return make_text_encoder(cfg.text_encoder_spec())


def samples_for(corpus: Corpus, split: str, fraction: float, table: UserEmbeddingTable, encoder):
    return build_samples(corpus.split_events(split), fraction, table, encoder, corpus.labels)


def run_training(cfg: RunConfig, corpus: Corpus, table: UserEmbeddingTable, encoder=None,
                 with_validation: bool = True) -> tuple[TrainResult, Trainer]:
    encoder = encoder or text_encoder_for(cfg)
    frac = cfg.train.obs_fraction
    train_samples = samples_for(corpus, "train", frac, table, encoder)
    val_samples = samples_for(corpus, "validation", frac, table, encoder) if with_validation else None
    model = init_model(cfg.model, cfg.run.seed)
    init_virality_bias(model, train_samples)
    trainer = Trainer(model, cfg.train, train_samples)
    return train(model, train_samples, val_samples, cfg.train, trainer), trainer
