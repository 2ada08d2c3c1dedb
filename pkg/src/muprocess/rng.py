"""Counter-based random number streams for reproducible Monte Carlo.

Every stochastic object in this package is driven by a Philox
(counter-based) generator.  A replica stream is derived from the pair
(master seed, replica index), so replicas are mutually independent and
the assignment of replicas to workers does not affect results.
"""
from __future__ import annotations

import numpy as np

# Lane indices keep different uses of randomness inside one replica
# (e.g. simulation vs. oracle sampling) on disjoint streams.
LANE_PATH = 0
LANE_ORACLE = 1
LANE_BACKWARD = 2


def replica_seed(master_seed: int, replica: int, lane: int = LANE_PATH) -> int:
    """64-bit sub-seed for one replica, derived from the master seed."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replica), int(lane)))
    return int(ss.generate_state(1, np.uint64)[0])


def stream_from_seed(seed: int) -> np.random.Generator:
    """Philox generator keyed by a single 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def replica_stream(master_seed: int, replica: int, lane: int = LANE_PATH) -> np.random.Generator:
    return stream_from_seed(replica_seed(master_seed, replica, lane))


class NormalChunks:
    """Sequential standard-normal draws from a generator, in chunks.

    Streaming simulation kernels consume normals chunk by chunk; the
    sequence of values only depends on the seed, not on the chunk size.
    """

    def __init__(self, rng: np.random.Generator, chunk: int = 1 << 16):
        self._rng = rng
        self._chunk = int(chunk)
        self.drawn = 0

    def next(self) -> np.ndarray:
        self.drawn += self._chunk
        return self._rng.standard_normal(self._chunk)
