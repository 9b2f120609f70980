"""Byte-stable JSON encoding used for hashing reports and for state snapshots."""
from __future__ import annotations

import hashlib
import json


def dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dumps_pretty(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def digest(*parts) -> bytes:
    """SHA-256 over length-prefixed string parts; used to derive seeded sub-streams."""
    h = hashlib.sha256()
    for p in parts:
        b = p if isinstance(p, bytes) else str(p).encode("utf-8")
        h.update(len(b).to_bytes(8, "big"))
        h.update(b)
    return h.digest()


def draw(*parts) -> int:
    """Deterministic 64-bit draw keyed by ``parts``."""
    return int.from_bytes(digest(*parts)[:8], "big")
