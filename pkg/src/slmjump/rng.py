"""Counter-based random-number streams for reproducible parallel ensembles.

Every sampler in the package takes an :class:`RngSpec` instead of a raw seed.
A spec is a ``(master_seed, stream_id)`` pair mapped to a Philox counter-based
bit generator, so distinct pairs give statistically independent streams and
ensemble results do not depend on how paths are distributed over workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSpec:
    """Key of one reproducible random stream.

    Parameters
    ----------
    master_seed : int
        64-bit run seed shared by the whole ensemble.
    stream_id : int
        Per-path substream index (non-negative, < 2**64).
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _MASK64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not 0 <= int(self.stream_id) <= _MASK64:
            raise ValueError(f"stream_id must be a non-negative 64-bit int, got {self.stream_id}")

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream; same spec always yields the same draws."""
        key = (int(self.master_seed) & _MASK64) | (int(self.stream_id) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "RngSpec":
        """Sibling spec with the same master seed and a different substream."""
        return RngSpec(self.master_seed, stream_id)
