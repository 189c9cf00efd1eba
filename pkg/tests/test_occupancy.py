import numpy as np
import pytest

from helpers import UniformSphereField, full_octree
from scorefield.occupancy import OccupancyGrid, build_octree, sample_rays


class ZeroField:
    dtype = np.dtype(np.float64)

    def eval_density(self, pts, need_ctx=False):
        return np.zeros(pts.shape[0])


def test_power_of_two_resolution_required():
    with pytest.raises(ValueError):
        OccupancyGrid(resolution=24)


def test_decay_law_on_empty_field():
    # with nothing to see, the optimistic prior must decay geometrically:
    # after k updates every cell holds exactly init * decay^k
    grid = OccupancyGrid(resolution=8, dtype=np.float64)
    field = ZeroField()
    for k in range(1, 7):
        grid.update(field)
        assert np.array_equal(grid.values, np.full_like(grid.values, 20.0 * 0.6**k))


def test_update_pins_occupied_cells():
    grid = OccupancyGrid(resolution=16, dtype=np.float64)
    field = UniformSphereField(sigma=5.0, radius=0.5)
    for _ in range(12):
        grid.update(field)
    centers = np.stack(
        np.meshgrid(*[np.arange(16)] * 3, indexing="ij"), axis=-1
    ).reshape(-1, 3)
    pts = grid.lo + (centers + 0.5) * grid.cell_size()
    inside = field.inside(pts).reshape(16, 16, 16)
    # cells whose center is well inside the sphere must stay occupied
    assert grid.occupied_mask()[inside].all()


def test_octree_pyramid_is_conservative():
    grid = OccupancyGrid(resolution=16)
    grid.values[:] = 0.0
    grid.values[3, 7, 12] = 1.0
    tree = build_octree(grid)
    assert tree.levels == 5
    assert tree.pyramid[0].all()  # root sees the one occupied leaf
    for lvl, level in enumerate(tree.pyramid):
        assert level.sum() == 1  # single occupied branch all the way down
    assert tree.pyramid[-1][3, 7, 12]


def test_occupied_fraction():
    grid = OccupancyGrid(resolution=8)
    grid.values[:] = 0.0
    grid.values[:4] = 1.0
    tree = build_octree(grid)
    assert abs(tree.occupied_fraction() - 0.5) < 1e-12


def test_sample_rays_skips_empty_space():
    grid = OccupancyGrid(resolution=16)
    grid.values[:] = 0.0
    grid.values[6:10, 6:10, 6:10] = 1.0  # occupied block around the center
    tree = build_octree(grid)

    origins = np.array([[-3.0, 0.01, 0.02]])
    dirs = np.array([[1.0, 0.0, 0.0]])
    tvals, counts, deltas = sample_rays(origins, dirs, tree, max_samples=256)
    n = int(counts[0])
    assert n > 0
    pts = origins[0] + tvals[0, :n, None] * dirs[0]
    cell = grid.cell_size()
    # every sample must fall inside the occupied block (with cell tolerance)
    lo = grid.lo + 6 * cell
    hi = grid.lo + 10 * cell
    assert (pts >= lo - 1e-9).all() and (pts <= hi + 1e-9).all()


def test_sample_rays_full_box_covers_chord():
    tree = full_octree(resolution=8)
    origins = np.array([[0.0, 0.0, -5.0]])
    dirs = np.array([[0.0, 0.0, 1.0]])
    tvals, counts, deltas = sample_rays(origins, dirs, tree, max_samples=128)
    n = int(counts[0])
    ts = tvals[0, :n]
    assert n == 128
    assert np.all(np.diff(ts) > 0)
    # chord through the [-2,2] box is 4 long starting at t=3
    assert ts[0] > 3.0 and ts[-1] < 7.0
    assert abs(deltas[0] - 4.0 / 128) < 1e-12


def test_sample_rays_miss_returns_empty():
    tree = full_octree(resolution=8)
    origins = np.array([[0.0, 5.0, -5.0]])
    dirs = np.array([[0.0, 0.0, 1.0]])  # passes far outside the box
    _, counts, _ = sample_rays(origins, dirs, tree, max_samples=64)
    assert counts[0] == 0


def test_jittered_samples_stay_sorted_and_bounded():
    grid = OccupancyGrid(resolution=8)
    grid.values[:] = 1.0
    tree = build_octree(grid)
    rng = np.random.default_rng(9)
    origins = np.tile([[0.0, 0.1, -4.0]], (5, 1))
    dirs = np.tile([[0.05, 0.0, 1.0]], (5, 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tvals, counts, _ = sample_rays(origins, dirs, tree, max_samples=64, rng=rng)
    for r in range(5):
        ts = tvals[r, : counts[r]]
        assert np.all(np.diff(ts) > 0)
