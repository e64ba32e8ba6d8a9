"""Seedable, splittable random streams.

Streams are built on the counter-based Philox engine seeded through
``numpy.random.SeedSequence``, so a stream is fully determined by
``(seed, stream path)`` and distinct paths give statistically independent
streams.  Every sampler in the package draws through one of these streams;
parallel tasks own disjoint substreams, which makes results independent of
scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream"]


@dataclass
class RngStream:
    """A named, reproducible random stream.

    ``path`` is a tuple of non-negative integers identifying the stream under
    the root ``seed``; ``substream`` extends the path, giving a tree of
    independent generators.
    """

    seed: int
    path: tuple[int, ...] = ()
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def substream(self, *ids: int) -> "RngStream":
        """Derive an independent child stream; deterministic in (seed, path, ids)."""
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))
