"""Counter-addressable random streams.

Every stream is identified by the master seed plus a tuple of integer keys
(purpose tag, replication index, hypothesis index, ...), so replication k can
be regenerated on its own and results never depend on execution order.
"""

import numpy as np
from scipy.special import ndtri

# purpose tags keep streams for different jobs disjoint
DATA = 1
BOOTSTRAP = 2
TABLE_DATA = 3
TABLE_BOOTSTRAP = 4
RETRY = 5

_TWO53 = float(2**53)


def substream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Normal deviates by inverting the normal CDF at open-interval uniforms."""
    u = (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / _TWO53
    return ndtri(u)
