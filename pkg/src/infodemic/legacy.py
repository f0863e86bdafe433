"""Converter for the tree-file cascade layout into canonical event records.

Expected input directory::

    label.txt            one "label:event_id" per line
    tree/<event_id>.txt  one "['uid', 'tid', 'delay']->['uid', 'tid', 'delay']" edge per line
    source_tweets.txt    optional "event_id<TAB>text" lines

Delays are minutes since the source post.  Labels ``non-rumor`` map to
``non_rumor``; ``false``, ``true`` and ``unverified`` all map to ``rumor``.
"""
from __future__ import annotations

import ast
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .data import NON_RUMOR, RUMOR, PropagationEvent, parse_event
from .errors import ValidationError

log = logging.getLogger(__name__)

LABEL_MAP = {"non-rumor": NON_RUMOR, "false": RUMOR, "true": RUMOR, "unverified": RUMOR}
ROOT = ("ROOT", "ROOT")


@dataclass
class ConversionReport:
    events: int = 0
    skipped_events: list = field(default_factory=list)
    clamped_times: int = 0
    reattached_posts: int = 0
    duplicate_edges: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def parse_tree_line(line: str) -> tuple[tuple, tuple]:
    left, sep, right = line.strip().partition("->")
    if not sep:
        raise ValidationError(f"not a tree edge: {line.strip()!r}")
    parent, child = ast.literal_eval(left), ast.literal_eval(right)
    if len(parent) != 3 or len(child) != 3:
        raise ValidationError(f"tree nodes need three fields: {line.strip()!r}")
    return tuple(str(x) for x in parent), tuple(str(x) for x in child)


def read_label_file(path) -> dict[str, str]:
    labels = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw, _, eid = line.strip().partition(":")
        key = raw.strip().lower()
        if key not in LABEL_MAP:
            raise ValidationError(f"unknown label {raw!r} for event {eid!r}")
        labels[eid.strip()] = LABEL_MAP[key]
    return labels


def read_source_texts(path) -> dict[str, str]:
    texts = {}
    if path is None or not Path(path).exists():
        return texts
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        eid, sep, text = line.partition("\t")
        if sep:
            texts[eid.strip()] = text
    return texts


def _node_id(node: tuple) -> str:
    return f"{node[0]}:{node[1]}:{node[2]}"


def convert_tree(event_id: str, label: str, lines, source_text: str = "",
                 report: ConversionReport | None = None) -> PropagationEvent:
    """Turn one tree file into an event.

    Nodes are (user, tweet, delay) triples.  Each node keeps its first parent;
    nodes that cannot be reached from the source are attached to it, and child
    times earlier than their parent's are raised to the parent's time.
    """
    report = report or ConversionReport()
    parent_of: dict[tuple, tuple] = {}
    order: list[tuple] = []
    root = None
    for line in lines:
        if not line.strip():
            continue
        parent, child = parse_tree_line(line)
        if parent[:2] == ROOT:
            if root is None:
                root = child
                order.append(child)
            continue
        if child == parent or child == root:
            continue
        if child in parent_of:
            report.duplicate_edges += 1
            continue
        parent_of[child] = parent
        order.append(child)
        if parent not in parent_of and parent != root and parent not in order:
            order.append(parent)
    if root is None:
        raise ValidationError(f"event {event_id}: tree has no ROOT edge")

    children: dict[tuple, list] = {}
    for c, p in parent_of.items():
        children.setdefault(p, []).append(c)
    reached = {root}
    queue = deque([root])
    while queue:
        n = queue.popleft()
        for c in children.get(n, []):
            if c not in reached:
                reached.add(c)
                queue.append(c)
    for n in order:
        if n not in reached:
            # climb to the top of the detached subtree (or until a cycle closes)
            top, seen = n, {n}
            while top in parent_of and parent_of[top] not in seen and parent_of[top] != root:
                top = parent_of[top]
                seen.add(top)
            if top in parent_of:
                children[parent_of[top]].remove(top)
            parent_of[top] = root
            reached.add(top)
            report.reattached_posts += 1
            # pull in anything hanging below the reattached node
            queue = deque([top])
            while queue:
                m = queue.popleft()
                for c in children.get(m, []):
                    if c not in reached:
                        reached.add(c)
                        queue.append(c)

    times = {root: 0.0}
    depth_order = [root]
    queue = deque([root])
    kids: dict[tuple, list] = {}
    for c, p in parent_of.items():
        kids.setdefault(p, []).append(c)
    while queue:
        n = queue.popleft()
        for c in kids.get(n, []):
            t = float(c[2]) * 60.0
            if t < times[n]:
                report.clamped_times += 1
                t = times[n]
            times[c] = t
            depth_order.append(c)
            queue.append(c)

    posts = []
    for n in depth_order:
        posts.append({
            "post_id": _node_id(n),
            "parent_id": None if n == root else _node_id(parent_of[n]),
            "user_id": n[0],
            "ts": times[n],
            "text": source_text if n == root else "",
        })
    report.events += 1
    return parse_event({"event_id": event_id, "label": label, "posts": posts})


def convert_legacy_corpus(root_dir) -> tuple[list[PropagationEvent], ConversionReport]:
    root_dir = Path(root_dir)
    labels = read_label_file(root_dir / "label.txt")
    texts = read_source_texts(root_dir / "source_tweets.txt")
    report = ConversionReport()
    events = []
    for eid in sorted(labels):
        tree = root_dir / "tree" / f"{eid}.txt"
        if not tree.exists():
            report.skipped_events.append(eid)
            log.warning("no tree file for event %s", eid)
            continue
        lines = tree.read_text(encoding="utf-8").splitlines()
        events.append(convert_tree(eid, labels[eid], lines, texts.get(eid, ""), report))
    return events, report
