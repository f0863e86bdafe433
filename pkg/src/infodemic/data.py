"""Cascade ingestion, observation prefixes, user graphs, labels and splits."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DanglingParent,
    InsufficientNonOverlap,
    MalformedEvent,
    MissingSource,
    NonMonotoneChild,
)

RUMOR = "rumor"
NON_RUMOR = "non_rumor"
CLASSES = (NON_RUMOR, RUMOR)  # index order matches the rumor logits


@dataclass(frozen=True)
class Post:
    post_id: str
    parent_id: Optional[str]
    user_id: str
    timestamp: float
    text: str = ""


@dataclass(frozen=True)
class PropagationEvent:
    event_id: str
    label: str
    posts: tuple[Post, ...]

    @property
    def T(self) -> float:
        return self.posts[-1].timestamp

    @property
    def source(self) -> Post:
        return next(p for p in self.posts if p.parent_id is None)

    def users(self) -> list[str]:
        return _unique_users(self.posts)


@dataclass(frozen=True, eq=False)
class ObservedEvent:
    event: PropagationEvent
    fraction: float
    posts: tuple[Post, ...]
    adjacency: np.ndarray  # |V| x |V|, symmetric, uint8

    @property
    def window(self) -> float:
        return self.fraction * self.event.T


@dataclass(frozen=True, eq=False)
class UserInteractionGraph:
    users: tuple[str, ...]
    adjacency: np.ndarray  # symmetric, zero diagonal
    # flow[a, b] = 1 when a post by users[b] replies to a post by users[a]
    flow: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.users)


@dataclass
class LabelSet:
    virality: dict[str, float]
    vulnerability: dict[str, float]
    klass: dict[str, str]

    def to_dict(self) -> dict:
        return {"virality": self.virality, "vulnerability": self.vulnerability, "class": self.klass}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabelSet":
        return cls(dict(d["virality"]), dict(d["vulnerability"]), dict(d.get("class", {})))


@dataclass
class CorpusSplits:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": self.train, "validation": self.validation, "test": self.test}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CorpusSplits":
        return cls(list(d["train"]), list(d["validation"]), list(d["test"]), int(d["seed"]))


def _unique_users(posts: Iterable[Post]) -> list[str]:
    seen: dict[str, None] = {}
    for p in posts:
        seen.setdefault(p.user_id, None)
    return list(seen)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def parse_event(raw) -> PropagationEvent:
    """Parse one event record (a JSON line or an already-decoded dict).

    Timestamps are rebased so the source post sits at 0 and posts are sorted
    by (timestamp, post_id).
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedEvent(f"record is not valid JSON: {exc}") from None
    if not isinstance(raw, Mapping):
        raise MalformedEvent("record must be an object")
    for key in ("event_id", "label", "posts"):
        if key not in raw:
            raise MalformedEvent(f"record missing field {key!r}")
    event_id = str(raw["event_id"])
    label = raw["label"]
    if label not in CLASSES:
        raise MalformedEvent(f"{event_id}: unknown label {label!r}")
    posts_raw = raw["posts"]
    if not isinstance(posts_raw, list) or not posts_raw:
        raise MalformedEvent(f"{event_id}: record has no posts")

    posts: dict[str, Post] = {}
    for p in posts_raw:
        try:
            pid = str(p["post_id"])
            parent = p.get("parent_id")
            post = Post(
                post_id=pid,
                parent_id=None if parent is None else str(parent),
                user_id=str(p["user_id"]),
                timestamp=float(p["ts"]),
                text=str(p.get("text") or ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEvent(f"{event_id}: bad post entry {p!r} ({exc})") from None
        if not math.isfinite(post.timestamp):
            raise MalformedEvent(f"{event_id}: non-finite timestamp on {pid}")
        if pid in posts:
            raise MalformedEvent(f"{event_id}: duplicate post_id {pid}")
        posts[pid] = post

    roots = [p for p in posts.values() if p.parent_id is None]
    if len(roots) != 1:
        raise MissingSource(f"{event_id}: expected exactly one source post, found {len(roots)}")
    root = roots[0]

    children: dict[str, list[str]] = defaultdict(list)
    for p in posts.values():
        if p.parent_id is None:
            continue
        if p.parent_id not in posts:
            raise DanglingParent(f"{event_id}: post {p.post_id} cites missing parent {p.parent_id}")
        children[p.parent_id].append(p.post_id)

    reached = {root.post_id}
    stack = [root.post_id]
    while stack:
        for c in children.get(stack.pop(), ()):
            if c not in reached:
                reached.add(c)
                stack.append(c)
    if len(reached) != len(posts):
        raise CycleDetected(f"{event_id}: {len(posts) - len(reached)} posts not reachable from the source")

    for p in posts.values():
        if p.parent_id is not None and p.timestamp < posts[p.parent_id].timestamp:
            raise NonMonotoneChild(
                f"{event_id}: post {p.post_id} ({p.timestamp}) precedes its parent {p.parent_id}"
            )

    t0 = root.timestamp
    rebased = [
        Post(p.post_id, p.parent_id, p.user_id, p.timestamp - t0, p.text) for p in posts.values()
    ]
    rebased.sort(key=lambda p: (p.timestamp, p.post_id))
    return PropagationEvent(event_id, label, tuple(rebased))


def event_to_record(event: PropagationEvent) -> dict:
    return {
        "event_id": event.event_id,
        "label": event.label,
        "posts": [
            {"post_id": p.post_id, "parent_id": p.parent_id, "user_id": p.user_id,
             "ts": p.timestamp, "text": p.text}
            for p in event.posts
        ],
    }


def read_events(path) -> list[PropagationEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                events.append(parse_event(line))
            except MalformedEvent as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
    return events


def write_events(path, events: Iterable[PropagationEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(event_to_record(e), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# prefixes and graphs
# ---------------------------------------------------------------------------

def observe_prefix(event: PropagationEvent, fraction: float) -> ObservedEvent:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    threshold = fraction * event.T
    kept = tuple(p for p in event.posts if p.timestamp <= threshold)
    index = {p.post_id: i for i, p in enumerate(kept)}
    adj = np.zeros((len(kept), len(kept)), dtype=np.uint8)
    for i, p in enumerate(kept):
        if p.parent_id is not None:
            j = index[p.parent_id]
            adj[i, j] = adj[j, i] = 1
    return ObservedEvent(event, fraction, kept, adj)


def build_user_graph(observed: ObservedEvent) -> UserInteractionGraph:
    users = _unique_users(observed.posts)
    uidx = {u: i for i, u in enumerate(users)}
    author = {p.post_id: p.user_id for p in observed.posts}
    n = len(users)
    flow = np.zeros((n, n), dtype=np.uint8)
    for p in observed.posts:
        if p.parent_id is None:
            continue
        a, b = uidx[author[p.parent_id]], uidx[p.user_id]
        if a != b:
            flow[a, b] = 1
    adj = (flow | flow.T).astype(np.uint8)
    return UserInteractionGraph(tuple(users), adj, flow)


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def derive_virality_label(event: PropagationEvent) -> float:
    return math.log2(len(set(p.user_id for p in event.posts)))


def derive_vulnerability_labels(corpus: Sequence[PropagationEvent]) -> dict[str, float]:
    n_events: dict[str, int] = defaultdict(int)
    n_rumor: dict[str, int] = defaultdict(int)
    for e in corpus:
        for u in set(p.user_id for p in e.posts):
            n_events[u] += 1
            if e.label == RUMOR:
                n_rumor[u] += 1
    return {u: n_rumor[u] / n for u, n in n_events.items() if n >= 2}


def derive_labels(corpus: Sequence[PropagationEvent]) -> LabelSet:
    return LabelSet(
        virality={e.event_id: derive_virality_label(e) for e in corpus},
        vulnerability=derive_vulnerability_labels(corpus),
        klass={e.event_id: e.label for e in corpus},
    )


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def non_overlapping_events(corpus: Sequence[PropagationEvent]) -> list[str]:
    """Events none of whose users appear in any other event."""
    seen_in: dict[str, int] = defaultdict(int)
    user_sets = [set(p.user_id for p in e.posts) for e in corpus]
    for users in user_sets:
        for u in users:
            seen_in[u] += 1
    return [e.event_id for e, users in zip(corpus, user_sets) if all(seen_in[u] == 1 for u in users)]


def split_corpus(corpus: Sequence[PropagationEvent], seed: int) -> CorpusSplits:
    n_each = int(0.1 * len(corpus))
    pool = non_overlapping_events(corpus)
    if len(pool) < 2 * n_each:
        raise InsufficientNonOverlap(len(pool), 2 * n_each)
    rng = np.random.default_rng(seed)
    picked = [pool[i] for i in rng.choice(len(pool), size=2 * n_each, replace=False)]
    val, test = picked[:n_each], picked[n_each:]
    held = set(picked)
    train = [e.event_id for e in corpus if e.event_id not in held]
    return CorpusSplits(train, val, test, seed)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass
class ClassStats:
    instances: int
    avg_posts: float
    avg_users: float
    avg_vulnerability: Optional[float]
    avg_virality: float


@dataclass
class StatsTable:
    rows: dict[str, ClassStats]

    def to_dict(self) -> dict:
        return {k: vars(v) for k, v in self.rows.items()}

    def to_text(self) -> str:
        head = f"{'type':<10} {'#instances':>10} {'avg#posts':>10} {'avg#users':>10} {'avg vuln':>9} {'avg viral':>10}"
        lines = [head, "-" * len(head)]
        for name, r in self.rows.items():
            vuln = "n/a" if r.avg_vulnerability is None else f"{r.avg_vulnerability:.3f}"
            lines.append(
                f"{name:<10} {r.instances:>10d} {r.avg_posts:>10.1f} {r.avg_users:>10.1f} "
                f"{vuln:>9} {r.avg_virality:>10.1f}"
            )
        return "\n".join(lines)


def corpus_stats(corpus: Sequence[PropagationEvent], labels: LabelSet) -> StatsTable:
    """Per-class corpus statistics.

    Average vulnerability is taken over (event, labeled participant) pairs.
    Average virality is the raw unique-user count of each event.
    """
    rows = {}
    for cls in (RUMOR, NON_RUMOR):
        events = [e for e in corpus if e.label == cls]
        if not events:
            continue
        n_users = [len(set(p.user_id for p in e.posts)) for e in events]
        vul = [labels.vulnerability[u] for e in events for u in set(p.user_id for p in e.posts)
               if u in labels.vulnerability]
        rows[cls] = ClassStats(
            instances=len(events),
            avg_posts=float(np.mean([len(e.posts) for e in events])),
            avg_users=float(np.mean(n_users)),
            avg_vulnerability=float(np.mean(vul)) if vul else None,
            avg_virality=float(np.mean([round(2.0 ** labels.virality[e.event_id]) for e in events])),
        )
    return StatsTable(rows)
