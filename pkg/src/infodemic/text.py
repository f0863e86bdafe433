"""Frozen post-text encoders: ``encode(str) -> d-vector``, deterministic and stateless."""
from __future__ import annotations

import re
import zlib
from functools import lru_cache

import numpy as np

_TOKEN = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str, max_tokens: int = 50) -> list[str]:
    return _TOKEN.findall(text.lower())[:max_tokens]


def token_bucket(token: str, buckets: int) -> int:
    return zlib.crc32(token.encode("utf-8")) % buckets


class HashingTextEncoder:
    """Hashed bag-of-tokens followed by a fixed Gaussian projection.

    The token-count vector is L2-normalised before projection, so empty text
    maps to the zero vector.
    """

    def __init__(self, dim: int = 64, buckets: int = 2 ** 14, max_tokens: int = 50, seed: int = 0):
        self.dim = dim
        self.buckets = buckets
        self.max_tokens = max_tokens
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((buckets, dim)) / np.sqrt(dim)
        self._encode = lru_cache(maxsize=200_000)(self._encode_uncached)

    def counts(self, text: str) -> dict[int, int]:
        out: dict[int, int] = {}
        for tok in tokenize(text, self.max_tokens):
            b = token_bucket(tok, self.buckets)
            out[b] = out.get(b, 0) + 1
        return out

    def _encode_uncached(self, text: str) -> np.ndarray:
        counts = self.counts(text)
        if not counts:
            return np.zeros(self.dim)
        idx = np.fromiter(counts.keys(), dtype=np.int64)
        c = np.fromiter(counts.values(), dtype=np.float64)
        vec = (c / np.linalg.norm(c)) @ self.projection[idx]
        vec.flags.writeable = False
        return vec

    def encode(self, text: str) -> np.ndarray:
        return self._encode(text)

    def encode_many(self, texts) -> np.ndarray:
        return np.stack([self.encode(t) for t in texts]) if texts else np.zeros((0, self.dim))

    def describe(self) -> dict:
        return {"kind": "hashing", "dim": self.dim, "buckets": self.buckets,
                "max_tokens": self.max_tokens, "seed": self.seed}


class TransformerTextEncoder:
    """[CLS] vector of a frozen pretrained transformer, projected to ``dim``.

    Needs locally available weights; the projection is a fixed seeded
    Gaussian map so the encoder stays frozen.
    """

    def __init__(self, model_name: str, dim: int = 64, max_tokens: int = 50, seed: int = 0):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModel.from_pretrained(model_name).eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        hidden = self.model.config.hidden_size
        self.projection = np.random.default_rng(seed).standard_normal((hidden, dim)) / np.sqrt(hidden)
        self.dim, self.max_tokens, self.model_name, self.seed = dim, max_tokens, model_name, seed

    @lru_cache(maxsize=100_000)
    def encode(self, text: str) -> np.ndarray:
        enc = self.tokenizer(text, truncation=True, max_length=self.max_tokens + 2, return_tensors="pt")
        with self._torch.no_grad():
            cls = self.model(**enc).last_hidden_state[0, 0].double().numpy()
        return cls @ self.projection

    def encode_many(self, texts) -> np.ndarray:
        return np.stack([self.encode(t) for t in texts]) if texts else np.zeros((0, self.dim))

    def describe(self) -> dict:
        return {"kind": "transformer", "model": self.model_name, "dim": self.dim,
                "max_tokens": self.max_tokens, "seed": self.seed}


def make_text_encoder(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind", "hashing")
    if kind == "hashing":
        return HashingTextEncoder(**spec)
    if kind == "transformer":
        return TransformerTextEncoder(spec.pop("model"), **spec)
    raise ValueError(f"unknown text encoder kind {kind!r}")
