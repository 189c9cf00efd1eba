"""Occupancy grid, octree pyramid, and empty-space-skipping ray sampling.

The grid holds a running density estimate per cell.  Updates decay every
cell by a fixed factor and then take the max with one fresh density probe at
a jittered point inside the cell, so a freshly initialized grid "forgets"
its optimistic prior geometrically while real surfaces stay pinned.  The
octree is a conservative OR-pyramid over the thresholded grid; a node is
empty only if every descendant leaf is.
"""

import numpy as np

from . import _kernels
from .encoding import DEFAULT_BOUNDS

INIT_VALUE = 20.0
DECAY = 0.6
THRESHOLD = 0.01
UPDATE_INTERVAL = 10


class OccupancyGrid:
    def __init__(
        self,
        resolution=256,
        bounds=DEFAULT_BOUNDS,
        init_value=INIT_VALUE,
        decay=DECAY,
        threshold=THRESHOLD,
        update_interval=UPDATE_INTERVAL,
        dtype=np.float32,
    ):
        if resolution & (resolution - 1):
            raise ValueError("occupancy resolution must be a power of two")
        self.resolution = int(resolution)
        self.lo = np.asarray(bounds[0], dtype=np.float64)
        self.hi = np.asarray(bounds[1], dtype=np.float64)
        self.decay = float(decay)
        self.threshold = float(threshold)
        self.update_interval = int(update_interval)
        self.dtype = np.dtype(dtype)
        self.values = np.full((resolution,) * 3, init_value, dtype=self.dtype)

    def cell_size(self):
        return (self.hi - self.lo) / self.resolution

    def update(self, field, rng=None, chunk=262144):
        """Decay every cell, then max with one jittered density probe per cell."""
        r = self.resolution
        cell = self.cell_size()
        idx = np.indices((r, r, r), dtype=np.float64).reshape(3, -1).T
        if rng is None:
            jit = 0.5
        else:
            jit = rng.random((idx.shape[0], 3))
        pts = self.lo + (idx + jit) * cell
        probe = np.empty(pts.shape[0], dtype=self.dtype)
        for s in range(0, pts.shape[0], chunk):
            probe[s : s + chunk] = field.eval_density(pts[s : s + chunk], need_ctx=False)
        np.maximum(self.values * self.decay, probe.reshape((r, r, r)), out=self.values)

    def occupied_mask(self):
        return self.values > self.threshold


class Octree:
    """OR-pyramid over the occupancy mask, coarse (1^3) to fine (leaf)."""

    def __init__(self, pyramid, lo, hi):
        self.pyramid = pyramid  # list of bool arrays, root first
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.leaf_resolution = pyramid[-1].shape[0]
        # flattened view for the traversal kernel
        self._res = np.array([p.shape[0] for p in pyramid], dtype=np.int64)
        sizes = self._res**3
        self._off = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self._flat = np.concatenate([p.astype(np.uint8).ravel() for p in pyramid])

    @property
    def levels(self):
        return len(self.pyramid)

    def occupied_fraction(self):
        leaf = self.pyramid[-1]
        return float(leaf.mean())


def build_octree(grid):
    """Collapse the occupancy grid into a conservative octree."""
    mask = np.ascontiguousarray(grid.occupied_mask())
    levels = [mask]
    while levels[-1].shape[0] > 1:
        m = levels[-1]
        r = m.shape[0] // 2
        m = m.reshape(r, 2, r, 2, r, 2).any(axis=(1, 3, 5))
        levels.append(m)
    levels.reverse()
    return Octree(levels, grid.lo, grid.hi)


def sample_rays(origins, dirs, octree, max_samples=1024, rng=None):
    """Stratified depths restricted to occupied leaves.

    Returns ``(tvals (R, max_samples), counts (R,), deltas (R,))``: the first
    ``counts[r]`` entries of row r are strictly increasing depths spaced on
    the global chord grid of the bounding box (step ``deltas[r]``), with the
    midpoint rule when ``rng`` is None and stratified jitter otherwise.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    nrays = origins.shape[0]
    box = float(octree.hi[0] - octree.lo[0])
    if not np.allclose(octree.hi - octree.lo, box):
        raise ValueError("octree bounding box must be cubic")
    if rng is None:
        jitter = np.full((nrays, max_samples), 0.5, dtype=np.float64)
    else:
        jitter = rng.uniform(1e-3, 1.0 - 1e-3, size=(nrays, max_samples))
    tvals = np.zeros((nrays, max_samples), dtype=np.float64)
    counts = np.zeros(nrays, dtype=np.int64)
    deltas = np.zeros(nrays, dtype=np.float64)
    _kernels.octree_sample(
        origins,
        dirs,
        octree._flat,
        octree._off,
        octree._res,
        float(octree.lo[0]),
        float(octree.lo[1]),
        float(octree.lo[2]),
        box,
        max_samples,
        jitter,
        tvals,
        counts,
        deltas,
    )
    return tvals, counts, deltas
