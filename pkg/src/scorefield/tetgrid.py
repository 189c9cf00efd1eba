"""Deformable tetrahedral grid and differentiable iso-surface extraction.

A cubic lattice is split into six tetrahedra per cell (all sharing the cell's
main diagonal, reordered to positive volume).  Each lattice vertex carries a
signed scalar ``s`` (>= 0 inside) and a position offset clamped to half a cell.
Surface vertices sit on sign-crossing edges at

    v = (s_a * p_b - s_b * p_a) / (s_a - s_b)

which is linear interpolation to the zero crossing; both the scalars and the
endpoint positions receive gradients through this formula.
"""

import numpy as np

from .errors import ConfigError, EmptyMeshError
from .params import Parameter

# Tet edges in canonical corner order; crossings are emitted directed
# (inside corner, outside corner).
_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _build_case_table():
    """Triangle templates per sign pattern, oriented outward geometrically.

    Entry ``table[pattern]`` is a list of triangles; each triangle is three
    directed corner pairs (inside, outside).  Built once on a canonical
    positively-oriented tet and valid for every positively-oriented tet.
    """
    pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    table = []
    for pattern in range(16):
        inside = [i for i in range(4) if pattern >> i & 1]
        outside = [i for i in range(4) if not pattern >> i & 1]
        if not inside or not outside:
            table.append([])
            continue
        crossings = [(a, b) for a in inside for b in outside]
        mid = {e: 0.5 * (pos[e[0]] + pos[e[1]]) for e in crossings}
        ref = pos[outside].mean(axis=0) - pos[inside].mean(axis=0)

        def orient(tri):
            p0, p1, p2 = (mid[e] for e in tri)
            n = np.cross(p1 - p0, p2 - p0)
            return list(tri) if np.dot(n, ref) > 0 else [tri[0], tri[2], tri[1]]

        if len(crossings) == 3:
            table.append([orient(tuple(crossings))])
        else:
            i0, i1 = inside
            o0, o1 = outside
            cyc = [(i0, o0), (i0, o1), (i1, o1), (i1, o0)]
            table.append([orient((cyc[0], cyc[1], cyc[2])), orient((cyc[0], cyc[2], cyc[3]))])
    return table


_CASE_TABLE = _build_case_table()


def cube_tetrahedra(resolution):
    """Corner indices (T, 4) of the six-per-cell split, positively oriented."""
    r = int(resolution)
    n = r + 1
    ii, jj, kk = np.meshgrid(np.arange(r), np.arange(r), np.arange(r), indexing="ij")
    corner = np.empty((8, r, r, r), dtype=np.int64)
    for c in range(8):
        dx, dy, dz = c >> 2 & 1, c >> 1 & 1, c & 1
        corner[c] = ((ii + dx) * n + (jj + dy)) * n + (kk + dz)
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    axis_bit = (4, 2, 1)
    tets = []
    for p in perms:
        c0 = 0
        c1 = c0 | axis_bit[p[0]]
        c2 = c1 | axis_bit[p[1]]
        c3 = 7
        tets.append(np.stack([corner[c0], corner[c1], corner[c2], corner[c3]], axis=-1).reshape(-1, 4))
    tets = np.concatenate(tets, axis=0)

    # enforce positive signed volume via the canonical unit-cell geometry
    unit = np.array([[c >> 2 & 1, c >> 1 & 1, c & 1] for c in range(8)], dtype=np.float64)
    for p_i, p in enumerate(perms):
        c0 = 0
        c1 = c0 | axis_bit[p[0]]
        c2 = c1 | axis_bit[p[1]]
        quad = [c0, c1, c2, 7]
        v = unit[quad]
        det = np.linalg.det(v[1:] - v[0])
        if det < 0:
            lo = p_i * (tets.shape[0] // 6)
            hi = lo + tets.shape[0] // 6
            tets[lo:hi, [2, 3]] = tets[lo:hi, [3, 2]]
    return tets


class SurfaceMesh:
    """Triangle mesh with provenance onto the tet lattice for the backward pass."""

    __slots__ = ("vertices", "faces", "edge_in", "edge_out")

    def __init__(self, vertices, faces, edge_in, edge_out):
        self.vertices = vertices
        self.faces = faces
        self.edge_in = edge_in
        self.edge_out = edge_out

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def face_normals(self, normalize=True):
        v = self.vertices
        f = self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if normalize:
            n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-30)
        return n


def marching_tets(positions, sdf, tets):
    """Extract the s=0 surface; s >= 0 counts as inside.

    Shared crossing edges are deduplicated so the mesh is watertight wherever
    the surface stays inside the lattice.
    """
    s = sdf[tets]
    pattern = ((s >= 0.0) << np.arange(4)).sum(axis=1)
    tri_in = []
    tri_out = []
    for p in range(1, 15):
        rows = np.nonzero(pattern == p)[0]
        if rows.size == 0:
            continue
        for tri in _CASE_TABLE[p]:
            corners_in = np.array([e[0] for e in tri])
            corners_out = np.array([e[1] for e in tri])
            tri_in.append(tets[rows][:, corners_in])
            tri_out.append(tets[rows][:, corners_out])
    if not tri_in:
        raise EmptyMeshError("no sign crossings: the scalar field has one sign everywhere")
    edge_in = np.concatenate(tri_in, axis=0).reshape(-1)
    edge_out = np.concatenate(tri_out, axis=0).reshape(-1)

    n = positions.shape[0]
    key = np.minimum(edge_in, edge_out) * n + np.maximum(edge_in, edge_out)
    uniq, first, inverse = np.unique(key, return_index=True, return_inverse=True)
    ein = edge_in[first]
    eout = edge_out[first]

    sa = sdf[ein]
    sb = sdf[eout]
    denom = sa - sb
    verts = (sa[:, None] * positions[eout] - sb[:, None] * positions[ein]) / denom[:, None]
    faces = inverse.reshape(-1, 3).astype(np.int64)
    return SurfaceMesh(verts, faces, ein, eout)


def marching_tets_backward(positions, sdf, mesh, dvertices):
    """Pull vertex cotangents back onto lattice scalars and positions."""
    ein = mesh.edge_in
    eout = mesh.edge_out
    sa = sdf[ein][:, None]
    sb = sdf[eout][:, None]
    denom = sa - sb
    v = mesh.vertices
    dsa = np.sum(dvertices * (positions[eout] - v) / denom, axis=1)
    dsb = np.sum(dvertices * (v - positions[ein]) / denom, axis=1)
    dpa = (-sb / denom) * dvertices
    dpb = (sa / denom) * dvertices
    dsdf = np.zeros_like(sdf)
    dpos = np.zeros_like(positions)
    np.add.at(dsdf, ein, dsa)
    np.add.at(dsdf, eout, dsb)
    np.add.at(dpos, ein, dpa)
    np.add.at(dpos, eout, dpb)
    return dpos, dsdf


def inverse_softplus(y, clip=20.0):
    """Stable inverse of log(1 + e^x), clipped for extreme densities."""
    y = np.maximum(np.asarray(y, dtype=np.float64), 1e-12)
    x = np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))
    return np.clip(x, -clip, clip)


class TetGrid:
    """Lattice of scalars and bounded vertex offsets driving marching tets."""

    def __init__(self, resolution=64, bounds=((-1.25, -1.25, -1.25), (1.25, 1.25, 1.25)), dtype=np.float32):
        if resolution < 2:
            raise ConfigError("tet grid resolution must be at least 2")
        self.resolution = int(resolution)
        self.lo = np.asarray(bounds[0], dtype=np.float64)
        self.hi = np.asarray(bounds[1], dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ConfigError("tet grid bounds must have positive extent")
        self.dtype = np.dtype(dtype)
        n = self.resolution + 1
        ax = [np.linspace(self.lo[d], self.hi[d], n) for d in range(3)]
        gx, gy, gz = np.meshgrid(*ax, indexing="ij")
        self.base_positions = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(self.dtype)
        self.cell_size = float((self.hi[0] - self.lo[0]) / self.resolution)
        self.max_offset = 0.5 * self.cell_size
        self.tets = cube_tetrahedra(self.resolution)
        self.sdf = Parameter(np.full(n**3, -1.0, dtype=self.dtype), name="tet.sdf")
        self.offsets = Parameter(np.zeros((n**3, 3), dtype=self.dtype), name="tet.offsets")
        self._clamp_mask = None

    @property
    def n_lattice(self):
        return self.base_positions.shape[0]

    def parameters(self):
        return [self.sdf, self.offsets]

    def positions(self):
        """Deformed lattice positions; remembers where the clamp saturated."""
        off = np.clip(self.offsets.value, -self.max_offset, self.max_offset)
        self._clamp_mask = np.abs(self.offsets.value) < self.max_offset
        return self.base_positions + off

    def init_from_field(self, field, density_level=1.0, chunk=262144):
        """Seed lattice scalars from a density field: s = logit(sigma) - logit(level)."""
        pts = self.base_positions.astype(np.float64)
        out = np.empty(pts.shape[0], dtype=np.float64)
        for lo in range(0, pts.shape[0], chunk):
            hi = min(lo + chunk, pts.shape[0])
            out[lo:hi] = field.eval_density(pts[lo:hi])
        self.sdf.value[:] = (inverse_softplus(out) - inverse_softplus(density_level)).astype(self.dtype)
        self.offsets.value[:] = 0.0

    def extract(self):
        """Current surface mesh; raises EmptyMeshError if the sign never flips."""
        return marching_tets(self.positions(), self.sdf.value, self.tets)

    def accumulate_grads(self, mesh, dvertices):
        """Route mesh-vertex cotangents into the sdf/offset parameters."""
        dpos, dsdf = marching_tets_backward(self.positions(), self.sdf.value, mesh, dvertices)
        self.sdf.grad += dsdf.astype(self.sdf.value.dtype)
        mask = self._clamp_mask if self._clamp_mask is not None else True
        self.offsets.grad += np.where(mask, dpos, 0.0).astype(self.offsets.value.dtype)

    def inverted_tet_count(self):
        p = self.positions().astype(np.float64)
        t = p[self.tets]
        det = np.linalg.det(t[:, 1:] - t[:, :1])
        return int((det <= 0.0).sum())


def _face_vertex_normals(vertices, faces):
    e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    c = np.cross(e1, e2)
    norm = np.maximum(np.linalg.norm(c, axis=1, keepdims=True), 1e-30)
    return c / norm, c, norm, e1, e2


def face_adjacency(faces):
    """Pairs of face indices sharing an edge (interior edges only)."""
    f = faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    fid = np.tile(np.arange(f.shape[0]), 3)
    key = np.minimum(edges[:, 0], edges[:, 1]).astype(np.int64) * (f.max() + 1) + np.maximum(
        edges[:, 0], edges[:, 1]
    )
    order = np.argsort(key, kind="stable")
    key = key[order]
    fid = fid[order]
    same = key[1:] == key[:-1]
    return np.stack([fid[:-1][same], fid[1:][same]], axis=1)


def face_smoothness(vertices, faces, pairs=None):
    """Mean misalignment (1 - n_i . n_j) over adjacent faces.

    Returns (loss, dvertices).  Faces whose area underflows have no
    orientation, so pairs touching them are excluded from the mean —
    dividing by their guarded norm would blow up the gradient.
    """
    if pairs is None:
        pairs = face_adjacency(faces)
    if pairs.shape[0] == 0:
        return 0.0, np.zeros_like(vertices)
    n, c, norm, e1, e2 = _face_vertex_normals(vertices, faces)
    oriented = norm[:, 0] > 1e-20
    pairs = pairs[oriented[pairs[:, 0]] & oriented[pairs[:, 1]]]
    if pairs.shape[0] == 0:
        return 0.0, np.zeros_like(vertices)
    ni = n[pairs[:, 0]]
    nj = n[pairs[:, 1]]
    loss = float(np.mean(1.0 - np.sum(ni * nj, axis=1)))

    scale = 1.0 / pairs.shape[0]
    dn = np.zeros_like(n)
    np.add.at(dn, pairs[:, 0], -nj * scale)
    np.add.at(dn, pairs[:, 1], -ni * scale)
    # n = c/|c|  =>  dc = (dn - n (n . dn)) / |c|
    dc = (dn - n * np.sum(n * dn, axis=1, keepdims=True)) / norm
    de1 = np.cross(e2, dc)
    de2 = np.cross(dc, e1)
    dv = np.zeros_like(vertices)
    np.add.at(dv, faces[:, 0], -de1 - de2)
    np.add.at(dv, faces[:, 1], de1)
    np.add.at(dv, faces[:, 2], de2)
    return loss, dv
