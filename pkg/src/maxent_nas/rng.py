"""Deterministic, stream-addressable random number generation.

All randomness in the library flows through (seed, stream) pairs. The same
pair yields the same draw sequence on every platform: streams are backed by
numpy's SFC64 generator keyed through SeedSequence, both of which are
specified independently of OS, architecture, and word size. SFC64 is the
fastest of numpy's generators, which matters because scoring draws one
Gaussian per convolution weight (tens of millions per candidate).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


def hash64(*parts: object) -> int:
    """Map arbitrary labeled parts to a stable 64-bit stream id."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class SeededRng:
    """Handle for one deterministic draw stream.

    `seed` is the user-facing run seed; `stream` selects an independent
    substream (e.g. one per scored candidate). Generators created from equal
    handles are interchangeable.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & MASK64, spawn_key=(self.stream & MASK64,))
        return np.random.Generator(np.random.SFC64(ss))

    def substream(self, index: int) -> "SeededRng":
        """Derive a child stream, e.g. for repeat-averaged scoring."""
        return SeededRng(self.seed, hash64(self.stream, index))
