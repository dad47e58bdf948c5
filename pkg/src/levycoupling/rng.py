"""Deterministic per-stream random generators.

Every stream is a Philox counter-based generator keyed by ``(seed, tag, index, ...)``
through ``SeedSequence.spawn_key``, so results never depend on the order in
which streams are created or on how work is split across threads.
"""
import numpy as np

# stream tags
PATH = 0
COUPLED = 1
PARTICLE = 2
LAW = 3
REPLICATE = 4
INITIAL = 5
MARKS = 6
BOOTSTRAP = 7
AUX = 8


def stream(seed, *key):
    """Return the generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class Streams:
    """A seed plus a key prefix; ``streams.get(i)`` is the stream for item ``i``."""

    def __init__(self, seed, *prefix):
        self.seed = int(seed)
        self.prefix = tuple(int(p) for p in prefix)

    def get(self, *key):
        return stream(self.seed, *self.prefix, *key)

    def child(self, *key):
        return Streams(self.seed, *self.prefix, *key)

    def __repr__(self):
        return f"Streams(seed={self.seed}, prefix={self.prefix})"


def as_streams(rng, *default_prefix):
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Streams(int(rng), *default_prefix)
    raise TypeError("expected an integer seed or a Streams object")
