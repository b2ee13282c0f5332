"""Named, counter-based deterministic random streams.

Every consumer (each device, the referee, the entanglement source) draws from
its own Philox stream whose key is a SHA-256 digest of the run seed and the
stream name, so streams never overlap and runs are reproducible.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _as_bytes(x) -> bytes:
    if isinstance(x, bytes):
        return x
    if isinstance(x, int):
        return x.to_bytes((max(x.bit_length(), 1) + 7) // 8, "big", signed=False)
    return str(x).encode()


def derive_key(root, *labels) -> int:
    h = hashlib.sha256()
    h.update(b"certirand/v1")
    for part in (root, *labels):
        b = _as_bytes(part)
        h.update(len(b).to_bytes(4, "big"))
        h.update(b)
    return int.from_bytes(h.digest()[:16], "big")


def stream(root, *labels) -> np.random.Generator:
    """Independent generator for ``labels`` under ``root``."""
    return np.random.Generator(np.random.Philox(key=derive_key(root, *labels)))


class RunStreams:
    """Factory for the streams of one run."""

    def __init__(self, run_seed):
        self.run_seed = run_seed

    def get(self, *labels) -> np.random.Generator:
        return stream(self.run_seed, *labels)

    def child(self, *labels) -> "RunStreams":
        return RunStreams(derive_key(self.run_seed, *labels))
