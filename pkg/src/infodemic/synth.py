"""Synthetic cascade corpora with planted user vulnerability.

Every pool user carries a latent vulnerability from a two-mode Beta mixture.
Each participant slot of a rumor is filled from the high mode with
probability ``high_share`` (non-rumors: from the low mode).  Each event also
draws a tilt ``z ~ N(0, 1)``.  Within a mode, users are picked with weight
``exp(tilt_strength * z * v)``, so the tilt moves the event's mean
vulnerability.  Its log2 size moves by ``+rho * z`` for rumors and ``-rho * z``
for non-rumors.  Isolated events recruit freshly created users, which keeps
enough non-overlapping events for leakage-free splits.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .data import NON_RUMOR, RUMOR, LabelSet, Post, PropagationEvent, derive_labels
from .errors import ConfigInvalid

RUMOR_TOKENS = ("shocking", "secret", "exposed", "unconfirmed", "leaked", "hoax", "coverup",
                "insider", "banned", "miracle", "hidden", "scandal")
NEWS_TOKENS = ("official", "confirmed", "report", "statement", "update", "announced",
               "agency", "press", "briefing", "data", "published", "ministry")
CREDULOUS_TOKENS = ("omg", "share", "wow", "believe", "retweet", "unbelievable", "must",
                    "truth", "wake", "everyone", "spread", "urgent")
SKEPTIC_TOKENS = ("source", "verify", "doubt", "evidence", "check", "factcheck", "link",
                  "really", "citation", "debunked", "misleading", "careful")
FILLER_TOKENS = ("the", "a", "today", "people", "city", "news", "this", "that", "about",
                 "now", "video", "photo", "just", "here", "they", "we", "is", "of")


@dataclass(frozen=True)
class SynthConfig:
    n_events: int = 500
    user_pool: Optional[int] = None  # default: about five events per pool user
    rumor_ratio: float = 0.5
    mean_users: float = 24.0
    rho: float = 0.5
    isolated_fraction: float = 0.3
    size_spread: float = 1.0  # sd of log2 event size
    high_share: float = 0.95
    tilt_strength: float = 8.0
    min_users: int = 3
    extra_post_rate: float = 0.05
    mean_duration: float = 3600.0
    tokens_per_post: int = 10

    def validate(self) -> None:
        bad = []
        if self.n_events < 1:
            bad.append("n_events must be >= 1")
        if self.user_pool is not None and self.user_pool < 2:
            bad.append("user_pool must be >= 2")
        if not 0.0 <= self.rumor_ratio <= 1.0:
            bad.append("rumor_ratio must be in [0, 1]")
        if self.mean_users < 1:
            bad.append("mean_users must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            bad.append("rho must be in [0, 1]")
        if not 0.0 <= self.isolated_fraction <= 1.0:
            bad.append("isolated_fraction must be in [0, 1]")
        if self.size_spread < 0:
            bad.append("size_spread must be >= 0")
        if not 0.5 <= self.high_share <= 1.0:
            bad.append("high_share must be in [0.5, 1]")
        if self.tilt_strength < 0:
            bad.append("tilt_strength must be >= 0")
        if self.min_users < 1:
            bad.append("min_users must be >= 1")
        if self.extra_post_rate < 0 or self.mean_duration <= 0 or self.tokens_per_post < 1:
            bad.append("extra_post_rate, mean_duration, tokens_per_post out of range")
        if bad:
            raise ConfigInvalid("; ".join(bad))

    def pool_size(self) -> int:
        if self.user_pool is not None:
            return self.user_pool
        pool_events = self.n_events * (1.0 - self.isolated_fraction)
        return max(2, int(round(pool_events * self.mean_users / 5.0)))

    def to_dict(self) -> dict:
        return asdict(self)


def _draw_latent(rng, high: bool) -> float:
    return float(rng.beta(8, 2) if high else rng.beta(2, 8))


def _tilted_pick(rng, values: np.ndarray, k: int, tilt: float) -> np.ndarray:
    """Weighted sampling without replacement (Gumbel top-k), weights exp(tilt * v)."""
    if k <= 0:
        return np.zeros(0, dtype=int)
    keys = tilt * values + rng.gumbel(size=len(values))
    return np.argsort(-keys, kind="stable")[:k]


def _post_text(rng, label: str, vuln: float, is_source: bool, n_tokens: int) -> str:
    class_pool = RUMOR_TOKENS if label == RUMOR else NEWS_TOKENS
    p_class = 0.4 if is_source else 0.1
    words = []
    for _ in range(n_tokens):
        r = rng.random()
        if r < p_class:
            pool = class_pool
        elif r < p_class + 0.35:
            pool = CREDULOUS_TOKENS if rng.random() < vuln else SKEPTIC_TOKENS
        else:
            pool = FILLER_TOKENS
        words.append(pool[rng.integers(len(pool))])
    if not is_source:
        words.insert(0, "RT")
    return " ".join(words)


def generate_synthetic_corpus_with_latents(config: SynthConfig, seed: int):
    """Like :func:`generate_synthetic_corpus` but also returns ``{user_id: latent v}``."""
    config.validate()
    rng = np.random.default_rng(seed)

    pool_n = config.pool_size()
    pool_high = rng.random(pool_n) < 0.5
    latent = {f"u{i:06d}": _draw_latent(rng, bool(h)) for i, h in enumerate(pool_high)}
    pool_ids = list(latent)
    high_ids = [u for u, h in zip(pool_ids, pool_high) if h]
    low_ids = [u for u, h in zip(pool_ids, pool_high) if not h]

    high_v = np.array([latent[u] for u in high_ids])
    low_v = np.array([latent[u] for u in low_ids])

    events = []
    n_iso = int(round(config.isolated_fraction * config.n_events))
    iso_flags = np.zeros(config.n_events, dtype=bool)
    iso_flags[rng.choice(config.n_events, size=n_iso, replace=False)] = True

    for ei in range(config.n_events):
        eid = f"e{ei:05d}"
        label = RUMOR if rng.random() < config.rumor_ratio else NON_RUMOR
        q = config.high_share if label == RUMOR else 1.0 - config.high_share
        sign = 1.0 if label == RUMOR else -1.0
        z = rng.standard_normal()
        eps = rng.standard_normal()
        log_size = math.log2(config.mean_users) + config.size_spread * (
            config.rho * sign * z + math.sqrt(1.0 - config.rho ** 2) * eps
        )
        n_users = max(config.min_users, int(round(2.0 ** log_size)))
        tilt = config.tilt_strength * z

        participants: list[str] = []
        if iso_flags[ei]:
            for k in range(n_users):
                high = bool(rng.random() < q)
                cand = np.array([_draw_latent(rng, high) for _ in range(8)])
                uid = f"{eid}_x{k:04d}"
                latent[uid] = float(cand[_tilted_pick(rng, cand, 1, tilt)[0]])
                participants.append(uid)
        else:
            n_users = min(n_users, pool_n)
            n_hi = int((rng.random(n_users) < q).sum())
            n_hi = min(n_hi, len(high_ids))
            n_lo = min(n_users - n_hi, len(low_ids))
            chosen = [high_ids[i] for i in _tilted_pick(rng, high_v, n_hi, tilt)]
            chosen += [low_ids[i] for i in _tilted_pick(rng, low_v, n_lo, tilt)]
            participants = [chosen[i] for i in rng.permutation(len(chosen))]

        authors = list(participants)
        n_extra = rng.binomial(len(participants), config.extra_post_rate)
        for _ in range(n_extra):
            who = int(rng.integers(len(participants)))
            pos = int(rng.integers(who + 1, len(authors) + 1))
            authors.insert(pos, participants[who])

        n_posts = len(authors)
        duration = config.mean_duration * float(rng.lognormal(0.0, 0.5))
        shape = float(rng.uniform(0.3, 1.2))
        if n_posts > 1:
            arrivals = np.sort(rng.beta(shape, 1.0, size=n_posts - 1))
            arrivals = arrivals / arrivals[-1] * duration
            times = [0.0] + [round(float(t), 3) for t in arrivals]
        else:
            times = [0.0]

        posts = []
        for k, (uid, ts) in enumerate(zip(authors, times)):
            pid = f"{eid}_p{k:05d}"
            if k == 0:
                parent = None
            elif k == 1 or rng.random() < 0.4:
                parent = f"{eid}_p00000"
            else:
                parent = f"{eid}_p{int(rng.integers(1, k)):05d}"
            text = _post_text(rng, label, latent[uid], k == 0, config.tokens_per_post)
            posts.append(Post(pid, parent, uid, ts, text))
        events.append(PropagationEvent(eid, label, tuple(posts)))

    labels = derive_labels(events)
    used = {p.user_id for e in events for p in e.posts}
    return events, labels, {u: v for u, v in latent.items() if u in used}


def generate_synthetic_corpus(config: SynthConfig, seed: int) -> tuple[list[PropagationEvent], LabelSet]:
    events, labels, _ = generate_synthetic_corpus_with_latents(config, seed)
    return events, labels
