"""Tensorised per-event model inputs and targets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .data import (
    CLASSES,
    LabelSet,
    ObservedEvent,
    PropagationEvent,
    UserInteractionGraph,
    build_user_graph,
    observe_prefix,
)
from .encoder import DTYPE
from .pretrain import UserEmbeddingTable

TIME_EPS = 1e-9


@dataclass(eq=False)
class EventSample:
    event_id: str
    users: tuple[str, ...]
    user_x0: Tensor  # |U| x d
    post_content: Tensor  # |V| x d
    post_time: Tensor  # |V|, timestamps / observation window
    adj: Tensor  # |U| x |U|
    flow: Tensor  # |U| x |U|
    rumor_target: Optional[int] = None
    virality_target: Optional[float] = None
    vuln_target: Optional[Tensor] = None  # |U|, zero where unlabeled
    vuln_mask: Optional[Tensor] = None  # |U| bool

    @property
    def labeled_users(self) -> int:
        return 0 if self.vuln_mask is None else int(self.vuln_mask.sum())


def normalized_times(observed: ObservedEvent) -> np.ndarray:
    t = np.array([p.timestamp for p in observed.posts], dtype=np.float64)
    return t / max(observed.window, TIME_EPS)


def build_sample(observed: ObservedEvent, table: UserEmbeddingTable, text_encoder,
                 labels: Optional[LabelSet] = None,
                 graph: Optional[UserInteractionGraph] = None) -> EventSample:
    graph = graph or build_user_graph(observed)
    users = graph.users
    content = text_encoder.encode_many([p.text for p in observed.posts])
    sample = EventSample(
        event_id=observed.event.event_id,
        users=users,
        user_x0=torch.as_tensor(table.lookup_many(list(users)), dtype=DTYPE),
        post_content=torch.as_tensor(content, dtype=DTYPE),
        post_time=torch.as_tensor(normalized_times(observed), dtype=DTYPE),
        adj=torch.as_tensor(graph.adjacency, dtype=DTYPE),
        flow=torch.as_tensor(graph.flow, dtype=DTYPE),
    )
    if labels is not None:
        attach_targets(sample, labels, observed.event)
    return sample


def attach_targets(sample: EventSample, labels: LabelSet, event: PropagationEvent) -> None:
    sample.rumor_target = CLASSES.index(labels.klass.get(event.event_id, event.label))
    sample.virality_target = float(labels.virality[event.event_id])
    vul = labels.vulnerability
    sample.vuln_mask = torch.tensor([u in vul for u in sample.users], dtype=torch.bool)
    sample.vuln_target = torch.tensor([vul.get(u, 0.0) for u in sample.users], dtype=DTYPE)


def build_samples(events: Sequence[PropagationEvent], fraction: float, table: UserEmbeddingTable,
                  text_encoder, labels: Optional[LabelSet] = None) -> list[EventSample]:
    return [build_sample(observe_prefix(e, fraction), table, text_encoder, labels) for e in events]
