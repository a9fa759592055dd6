"""Counter-based splittable random number streams.

Every stochastic routine in this package draws from an :class:`RngStream`,
a thin wrapper around numpy's Philox counter-based bit generator keyed by
``(seed, stream_id)``.  Two streams built from the same key replay the same
sample sequence; streams with distinct keys are statistically independent.
Child streams are derived by mixing tags into the ``stream_id``, which lets
ensembles key noise by (trajectory, step, particle) without any shared
mutable state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
# SplitMix64 increment (golden-ratio based), used to decorrelate child keys.
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """One SplitMix64 scrambling round; a 64-bit bijection."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _tag_to_int(tag) -> int:
    """Map a tag to 64 bits; strings hash stably (not via salted hash())."""
    if isinstance(tag, str):
        return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")
    return int(tag) & _MASK64


def _mix(stream_id: int, *tags) -> int:
    h = stream_id & _MASK64
    for t in tags:
        h = _splitmix64(h ^ _tag_to_int(t))
    return h


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    The underlying Philox generator is created lazily on first draw;
    sequential draws advance its counter.  Re-creating the stream with the
    same key restarts the identical sequence.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def child(self, *tags) -> "RngStream":
        """Derive an independent substream keyed by integer or string tags.

        Deterministic: the same parent key and tags always name the same
        substream.  Used to key per-trajectory / per-step / per-particle
        noise in ensembles.
        """
        return RngStream(self.seed, _mix(self.stream_id, *tags))

    # -- convenience draw methods (all delegate to the numpy Generator) --

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self.generator().uniform(low, high, size=size)

    def exponential(self, scale: float = 1.0, size=None) -> np.ndarray:
        return self.generator().exponential(scale, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self.generator().normal(loc, scale, size=size)
