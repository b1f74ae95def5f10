"""Counter-based random streams keyed by (master seed, replica, purpose).

A stream key is the Philox key ``(master, replica)`` together with a starting
counter whose third word encodes the purpose tag.  Tags are at most 8 ASCII
bytes, so the mapping is injective; two streams with different tags start
2**128 counter blocks apart and never overlap in practice.  This layout is
part of the reproducibility contract and must not change between versions.
"""
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_word(purpose):
    raw = purpose.encode("ascii")
    if not raw or len(raw) > 8:
        raise ValueError(f"purpose tag must be 1-8 ASCII bytes, got {purpose!r}")
    return int.from_bytes(raw.ljust(8, b"\0"), "little")


def seed_derive(master, replica, purpose):
    """Stream key for ``(master, replica, purpose)``.

    Returns ``(key, counter)`` as tuples of Python ints: the two Philox key
    words and the four starting counter words.
    """
    if replica < 0:
        raise ValueError("replica index must be nonnegative")
    key = (int(master) & _MASK64, int(replica) & _MASK64)
    counter = (0, 0, _tag_word(purpose), 0)
    return key, counter


@dataclass(frozen=True)
class RngStream:
    master: int
    replica: int
    purpose: str

    @property
    def key(self):
        return seed_derive(self.master, self.replica, self.purpose)

    def generator(self):
        key, counter = self.key
        bitgen = np.random.Philox(
            key=np.array(key, dtype=np.uint64), counter=np.array(counter, dtype=np.uint64)
        )
        return np.random.Generator(bitgen)


def generators(master, replicas, purpose):
    """One independent generator per replica index."""
    return [RngStream(master, int(r), purpose).generator() for r in replicas]


def as_generator(rng, purpose="default"):
    """Accept a Generator, an RngStream, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        rng = 0
    return RngStream(int(rng), 0, purpose).generator()
