"""Global user graph and random-walk contrastive user embeddings."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import PropagationEvent, build_user_graph, observe_prefix
from .errors import CorruptCheckpoint, IsolatedAnchor, VersionMismatch

log = logging.getLogger(__name__)

TABLE_FORMAT = "infodemic-user-embeddings"
TABLE_VERSION = 1
FALLBACK_KEY = "*fallback*"


@dataclass
class GlobalUserGraph:
    users: list[str]
    neighbors: dict[str, set[str]]
    _index: dict[str, int] = field(init=False, repr=False)
    _adj: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {u: i for i, u in enumerate(self.users)}
        self._adj = [
            np.array(sorted(self._index[v] for v in self.neighbors.get(u, ())), dtype=np.int64)
            for u in self.users
        ]

    def __len__(self) -> int:
        return len(self.users)

    def degree(self, user: str) -> int:
        return len(self.neighbors.get(user, ()))

    def edges(self) -> set[frozenset]:
        return {frozenset((a, b)) for a, nb in self.neighbors.items() for b in nb}


def build_global_user_graph(train_events: Sequence[PropagationEvent]) -> GlobalUserGraph:
    users: dict[str, None] = {}
    neighbors: dict[str, set[str]] = {}
    for event in train_events:
        g = build_user_graph(observe_prefix(event, 1.0))
        for u in g.users:
            users.setdefault(u, None)
            neighbors.setdefault(u, set())
        rows, cols = np.nonzero(g.adjacency)
        for i, j in zip(rows, cols):
            neighbors[g.users[i]].add(g.users[j])
    return GlobalUserGraph(list(users), neighbors)


def _random_walk(graph: GlobalUserGraph, start: int, walk_len: int, rng) -> list[int]:
    path, cur = [], start
    for _ in range(walk_len):
        nb = graph._adj[cur]
        cur = int(nb[rng.integers(len(nb))])
        path.append(cur)
    return path


def _sample_indices(graph: GlobalUserGraph, anchor: int, walk_len: int, rng) -> tuple[int, int, int]:
    if len(graph._adj[anchor]) == 0:
        raise IsolatedAnchor(f"user {graph.users[anchor]!r} has no neighbours")
    path = _random_walk(graph, anchor, walk_len, rng)
    candidates = [n for n in path if n != anchor]
    positive = candidates[int(rng.integers(len(candidates)))]
    excluded = set(path)
    excluded.add(anchor)
    n = len(graph)
    if len(excluded) >= n:
        raise IsolatedAnchor(f"no negative candidate for {graph.users[anchor]!r}")
    if len(excluded) * 2 < n:
        while True:
            neg = int(rng.integers(n))
            if neg not in excluded:
                break
    else:
        pool = [i for i in range(n) if i not in excluded]
        neg = pool[int(rng.integers(len(pool)))]
    return anchor, positive, neg


def sample_contrastive_triplet(graph: GlobalUserGraph, anchor: str, walk_len: int, rng) -> tuple[str, str, str]:
    """Return (anchor, positive, negative).

    The positive is a uniformly chosen step of a simple random walk of
    ``walk_len`` steps (steps landing back on the anchor are skipped); the
    negative is a uniform user that is neither the anchor nor on the walk.
    """
    a, p, n = _sample_indices(graph, graph._index[anchor], walk_len, rng)
    return graph.users[a], graph.users[p], graph.users[n]


@dataclass
class PretrainConfig:
    dim: int = 64
    epochs: int = 20
    walk_len: int = 5
    lr: float = 5e-3

    def to_dict(self) -> dict:
        return asdict(self)


class UserEmbeddingTable:
    def __init__(self, users: Sequence[str], vectors: np.ndarray, fallback: np.ndarray | None = None):
        self.users = list(users)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.index = {u: i for i, u in enumerate(self.users)}
        self.fallback = mean_fallback(self.vectors) if fallback is None else np.asarray(fallback, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, user: str) -> bool:
        return user in self.index

    def __len__(self) -> int:
        return len(self.users)

    def lookup(self, user: str) -> np.ndarray:
        i = self.index.get(user)
        return self.fallback if i is None else self.vectors[i]

    def lookup_many(self, users: Sequence[str]) -> np.ndarray:
        if not users:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(u) for u in users])

    def save(self, path) -> None:
        header = {"format": TABLE_FORMAT, "version": TABLE_VERSION, "dim": self.dim, "users": len(self.users)}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header) + "\n")
            for u, row in zip(self.users, self.vectors):
                fh.write(json.dumps(u) + "\t" + " ".join(repr(float(x)) for x in row) + "\n")
            fh.write(FALLBACK_KEY + "\t" + " ".join(repr(float(x)) for x in self.fallback) + "\n")

    @classmethod
    def load(cls, path) -> "UserEmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        try:
            header = json.loads(lines[0])
        except (IndexError, json.JSONDecodeError):
            raise CorruptCheckpoint(f"{path}: missing embedding table header") from None
        if header.get("format") != TABLE_FORMAT:
            raise CorruptCheckpoint(f"{path}: not a user embedding table")
        if header.get("version") != TABLE_VERSION:
            raise VersionMismatch(f"{path}: table version {header.get('version')} != {TABLE_VERSION}")
        n, dim = int(header["users"]), int(header["dim"])
        if len(lines) != n + 2:
            raise CorruptCheckpoint(f"{path}: expected {n + 2} lines, found {len(lines)}")
        users, rows = [], []
        for line in lines[1:-1]:
            key, _, values = line.partition("\t")
            users.append(json.loads(key))
            rows.append([float(x) for x in values.split()])
        key, _, values = lines[-1].partition("\t")
        if key != FALLBACK_KEY:
            raise CorruptCheckpoint(f"{path}: final row is not the fallback vector")
        fallback = np.array([float(x) for x in values.split()])
        vectors = np.array(rows, dtype=np.float64).reshape(n, dim)
        if fallback.shape != (dim,):
            raise CorruptCheckpoint(f"{path}: fallback has wrong length")
        return cls(users, vectors, fallback)


def mean_fallback(vectors: np.ndarray) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError("cannot build a fallback from an empty table")
    m = vectors.mean(axis=0)
    norm = np.linalg.norm(m)
    if norm == 0.0:
        m = np.zeros_like(m)
        m[0] = 1.0
        return m
    return m / norm


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def pretrain_user_embeddings(graph: GlobalUserGraph, config: PretrainConfig | None = None, seed: int = 0) -> UserEmbeddingTable:
    """Contrastive pre-training on the global user graph.

    Minimises ``x_a . x_neg - x_a . x_pos`` with one SGD step per sampled
    triplet; the three touched rows are projected back onto the unit sphere
    after every step.
    """
    config = config or PretrainConfig()
    if len(graph) == 0:
        raise ValueError("empty user graph")
    rng = np.random.default_rng(seed)
    X = _normalize_rows(rng.standard_normal((len(graph), config.dim)))
    anchors = np.array([i for i in range(len(graph)) if len(graph._adj[i]) > 0], dtype=np.int64)
    lr = config.lr
    epochs = config.epochs if lr != 0.0 else 0  # a zero step leaves the initialisation untouched
    for epoch in range(epochs):
        skipped = 0
        for a in rng.permutation(anchors):
            try:
                a, p, n = _sample_indices(graph, int(a), config.walk_len, rng)
            except IsolatedAnchor:
                skipped += 1
                continue
            xa, xp, xn = X[a].copy(), X[p].copy(), X[n].copy()
            X[a] = xa - lr * (xn - xp)
            X[p] = xp + lr * xa
            X[n] = xn - lr * xa
            for i in (a, p, n):
                X[i] /= np.linalg.norm(X[i])
        if skipped:
            log.debug("epoch %d: skipped %d anchors", epoch, skipped)
    return UserEmbeddingTable(graph.users, X)


def lookup_user_embedding(table: UserEmbeddingTable, user_id: str) -> np.ndarray:
    return table.lookup(user_id)
