"""Versioned, checksummed checkpoint files.

Layout: a magic line, one JSON header line ``{"version", "length", "sha256"}``
and a ``torch.save`` payload of exactly ``length`` bytes.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
from pathlib import Path
from typing import Optional

import torch

from .errors import CorruptCheckpoint, VersionMismatch

MAGIC = b"INFODEMIC-CHECKPOINT\n"
VERSION = 1


def _encode(payload: dict) -> bytes:
    buf = io.BytesIO()
    torch.save(payload, buf)
    return buf.getvalue()


def save_checkpoint(path, model_state: dict, config: dict, trainer_state: Optional[dict] = None,
                    extra: Optional[dict] = None) -> None:
    """Write parameters (keyed by module path), a config snapshot and optional trainer state."""
    body = _encode({
        "model": {k: v.detach().clone() for k, v in model_state.items()},
        "config": json.dumps(config, sort_keys=True),
        "trainer": trainer_state,
        "extra": extra or {},
    })
    header = json.dumps({"version": VERSION, "length": len(body),
                         "sha256": hashlib.sha256(body).hexdigest()}, sort_keys=True)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("ascii") + b"\n")
        fh.write(body)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    """Return ``{"model", "config", "trainer", "extra"}``; config comes back verbatim."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise CorruptCheckpoint(f"{path}: not a checkpoint file")
    rest = raw[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable header") from exc
    if header.get("version") != VERSION:
        raise VersionMismatch(f"{path}: checkpoint version {header.get('version')!r}, expected {VERSION}")
    body = rest[nl + 1:]
    if len(body) != header.get("length"):
        raise CorruptCheckpoint(f"{path}: expected {header.get('length')} payload bytes, found {len(body)}")
    if hashlib.sha256(body).hexdigest() != header.get("sha256"):
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    payload = torch.load(io.BytesIO(body), weights_only=False)
    payload["config"] = json.loads(payload["config"])
    return payload
