"""Shared builders and finite-difference utilities for the test suite."""

import numpy as np

from scorefield.cameras import orbit_camera
from scorefield.encoding import HashGridEncoding
from scorefield.field import EnvironmentMap, NeuralField
from scorefield.occupancy import OccupancyGrid, build_octree


def small_field(seed=0, dtype=np.float64, levels=4, table_size=2**12, hidden=16):
    """A low-capacity field, big enough to exercise every code path."""
    rng = np.random.default_rng(seed)
    enc = HashGridEncoding(
        levels=levels,
        table_size=table_size,
        feature_dim=2,
        base_resolution=4,
        max_resolution=32,
        dtype=dtype,
        rng=rng,
    )
    return NeuralField(encoding=enc, dtype=dtype, rng=rng, hidden=hidden)


def small_env(seed=1, dtype=np.float64, hidden=8):
    return EnvironmentMap(dtype=dtype, rng=np.random.default_rng(seed), hidden=hidden)


def full_octree(resolution=16, bounds=((-2.0,) * 3, (2.0,) * 3)):
    """Octree with every leaf marked occupied (dense sampling)."""
    grid = OccupancyGrid(resolution=resolution, bounds=bounds)
    grid.values[:] = 1.0
    return build_octree(grid)


def tiny_camera(width=8, height=8, azimuth=0.7, elevation=0.3, distance=1.75, focal=1.25):
    return orbit_camera(azimuth, elevation, distance, focal, width, height)


def collect_params(*modules):
    params = []
    for m in modules:
        params.extend(m.parameters())
    return params


def directional_fd(f, params, direction, h=1e-6):
    """Central finite difference of scalar ``f()`` along ``direction``.

    ``direction`` is a list of arrays matching ``params``; parameter values
    are restored afterwards.
    """
    for p, d in zip(params, direction):
        p.value += h * d
    f_plus = f()
    for p, d in zip(params, direction):
        p.value -= 2.0 * h * d
    f_minus = f()
    for p, d in zip(params, direction):
        p.value += h * d
    return (f_plus - f_minus) / (2.0 * h)


def random_direction(params, rng):
    vecs = [rng.standard_normal(p.value.shape) for p in params]
    norm = np.sqrt(sum(float((v * v).sum()) for v in vecs))
    return [v / norm for v in vecs]


def tape_dot(params, direction):
    """Inner product of accumulated gradients with a direction."""
    return sum(float((p.grad * d).sum()) for p, d in zip(params, direction))


def rel_err(a, b):
    denom = max(abs(a), abs(b), 1e-12)
    return abs(a - b) / denom


class UniformSphereField:
    """Analytic density field: constant sigma inside a sphere, zero outside.

    Quacks like NeuralField as far as the renderer's forward pass needs.
    """

    def __init__(self, sigma=0.4, radius=0.6, center=(0.0, 0.0, 0.0), albedo=(0.6, 0.5, 0.4)):
        self.sigma = float(sigma)
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)
        self.albedo_value = np.asarray(albedo, dtype=np.float64)
        self.dtype = np.dtype(np.float64)
        self.degenerate_normal_count = 0

    def inside(self, pts):
        return np.linalg.norm(np.asarray(pts) - self.center, axis=-1) <= self.radius

    def forward(self, pts, want_normal=False, need_ctx=True):
        sig = np.where(self.inside(pts), self.sigma, 0.0)
        albedo = np.broadcast_to(self.albedo_value, (pts.shape[0], 3)).copy()
        normal = None
        if want_normal:
            d = np.asarray(pts) - self.center
            n = np.linalg.norm(d, axis=1, keepdims=True)
            normal = d / np.maximum(n, 1e-9)
        return sig, albedo, normal, None

    def eval_density(self, pts, need_ctx=False):
        return np.where(self.inside(pts), self.sigma, 0.0)


class ConstantEnvironment:
    """Fixed background color; no parameters."""

    def __init__(self, color=(0.0, 0.0, 0.0)):
        self.color = np.asarray(color, dtype=np.float64)

    def forward(self, dirs, need_ctx=True):
        return np.broadcast_to(self.color, (dirs.shape[0], 3)).copy(), None

    def backward(self, ctx, drgb):
        return None

    def parameters(self):
        return []
