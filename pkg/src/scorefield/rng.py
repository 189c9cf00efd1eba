"""Counter-based random streams.

Every random draw in the pipeline comes from a Philox generator keyed by
``(seed, iteration, view, purpose)``.  Streams are stateless from the
caller's point of view: the same key always reproduces the same sequence, so
any single gradient step can be replayed in isolation and resuming from a
checkpoint only needs the iteration counter.
"""

import numpy as np

# Purpose tags. Values are part of the checkpoint/replay contract: do not
# renumber existing entries.
INIT = 0
CAMERA = 1
LIGHT = 2
SHADING = 3
SDS_T = 4
SDS_EPS = 5
OCCUPANCY = 6
RAY_JITTER = 7
VIEW_PICK = 9

_MASK64 = (1 << 64) - 1
_MIX = 0x9E3779B97F4A7C15


def stream(seed, iteration=0, view=0, purpose=INIT):
    """Return a fresh ``np.random.Generator`` for one (iter, view, purpose) cell."""
    if iteration < 0 or view < 0:
        raise ValueError("iteration and view must be non-negative")
    k0 = ((int(seed) * _MIX) ^ purpose) & _MASK64
    k1 = ((int(iteration) << 20) | (view & 0xFFFFF)) & _MASK64
    bitgen = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64))
    return np.random.Generator(bitgen)
