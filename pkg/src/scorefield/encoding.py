"""Multiresolution hash-grid encoding with hand-derived gradients.

Each level is a dense lattice of ``res^3`` cells whose corner features live
in a table.  Coarse levels small enough to be injective are indexed
directly; finer levels use the XOR spatial hash with primes
(1, 2654435761, 805459861) modulo the table size.  Features are trilinearly
interpolated and concatenated across levels, so the output is piecewise
affine along any axis within a cell.
"""

import numpy as np

from . import _kernels
from .errors import OutOfDomainError
from .params import Parameter

DEFAULT_BOUNDS = ((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))


def level_resolutions(levels, base_resolution, max_resolution):
    """Geometric ladder of lattice resolutions from base to max inclusive."""
    if levels < 1:
        raise ValueError("need at least one level")
    if levels == 1:
        return np.array([base_resolution], dtype=np.int64)
    growth = np.exp((np.log(max_resolution) - np.log(base_resolution)) / (levels - 1))
    res = np.round(base_resolution * growth ** np.arange(levels)).astype(np.int64)
    res[0] = base_resolution
    res[-1] = max_resolution
    return res


class HashGridEncoding:
    def __init__(
        self,
        levels=16,
        table_size=2**19,
        feature_dim=4,
        base_resolution=16,
        max_resolution=4096,
        bounds=DEFAULT_BOUNDS,
        dtype=np.float32,
        rng=None,
        init_scale=1e-4,
    ):
        self.levels = int(levels)
        self.table_size = int(table_size)
        self.feature_dim = int(feature_dim)
        self.resolutions = level_resolutions(levels, base_resolution, max_resolution)
        self.lo = np.asarray(bounds[0], dtype=np.float64)
        self.hi = np.asarray(bounds[1], dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ValueError("bounds must have positive extent")
        self.dtype = np.dtype(dtype)

        # direct indexing while the full lattice fits in the table
        dense = (self.resolutions + 1) ** 3
        self.level_size = np.minimum(dense, self.table_size).astype(np.int64)
        self.level_hashed = (dense > self.table_size).astype(np.uint8)
        self.level_offset = np.concatenate([[0], np.cumsum(self.level_size)[:-1]]).astype(np.int64)
        total = int(self.level_size.sum())

        if rng is None:
            rng = np.random.default_rng(0)
        table = rng.uniform(-init_scale, init_scale, size=(total, feature_dim))
        self.tables = Parameter(table.astype(self.dtype), name="encoding.tables")

    @property
    def out_dim(self):
        return self.levels * self.feature_dim

    def parameters(self):
        return [self.tables]

    def _normalize(self, pts):
        pts = np.asarray(pts)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected (N, 3) points, got {pts.shape}")
        eps = 1e-9
        bad = np.logical_or(pts < self.lo - eps, pts > self.hi + eps).any(axis=1)
        if bad.any():
            raise OutOfDomainError(
                f"{int(bad.sum())} of {pts.shape[0]} points outside bounding box "
                f"{self.lo.tolist()}..{self.hi.tolist()}"
            )
        pts01 = (pts - self.lo) / (self.hi - self.lo)
        return np.clip(pts01, 0.0, 1.0).astype(self.dtype)

    def encode(self, pts):
        """Encode world points: returns (features (N, out_dim), ctx)."""
        pts01 = self._normalize(pts)
        out = np.zeros((pts01.shape[0], self.out_dim), dtype=self.dtype)
        _kernels.encode_fwd(
            pts01,
            self.resolutions,
            self.level_offset,
            self.level_size,
            self.level_hashed,
            self.feature_dim,
            self.tables.value,
            out,
        )
        return out, pts01

    def encode_backward(self, ctx, dfeat, need_point_grad=False):
        """Accumulate table gradients; optionally return d(feature)/d(world point)."""
        pts01 = ctx
        dfeat = np.ascontiguousarray(dfeat, dtype=self.dtype)
        _kernels.encode_bwd_tables(
            pts01,
            self.resolutions,
            self.level_offset,
            self.level_size,
            self.level_hashed,
            self.feature_dim,
            dfeat,
            self.tables.grad,
        )
        if not need_point_grad:
            return None
        dpts01 = np.empty_like(pts01)
        _kernels.encode_bwd_points(
            pts01,
            self.resolutions,
            self.level_offset,
            self.level_size,
            self.level_hashed,
            self.feature_dim,
            self.tables.value,
            dfeat,
            dpts01,
        )
        return dpts01 / (self.hi - self.lo).astype(self.dtype)
