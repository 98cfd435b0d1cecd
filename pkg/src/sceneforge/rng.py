"""Deterministic random substreams.

Every stochastic operation in the toolchain draws from a substream derived
from a master seed plus a structural path (statement index, variant index,
step number, ...). Substreams are independent Philox streams, so editing one
consumer never reshuffles the draws seen by another.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part: int | str) -> bytes:
    if isinstance(part, bool):  # bool is an int subclass; keep the tag distinct
        part = int(part)
    if isinstance(part, int):
        return b"i" + str(part).encode("ascii")
    return b"s" + part.encode("utf-8")


def stream_key(master_seed: int, *path: int | str) -> int:
    """Collapse (seed, path...) into a 128-bit Philox key."""
    h = hashlib.blake2b(digest_size=16)
    h.update(_encode(int(master_seed) & _MASK64))
    for part in path:
        h.update(b"/")
        h.update(_encode(part))
    return int.from_bytes(h.digest(), "big")


def substream(master_seed: int, *path: int | str) -> np.random.Generator:
    """Generator for the substream identified by (master_seed, *path)."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, *path)))
