"""Numba JIT kernels for the hot loops.

Determinism contract: every ``prange`` here either writes disjoint output
rows (one per sample / ray / tile) or, for scatter-accumulation into shared
hash tables, parallelizes over *levels* so each table region is owned by a
single thread and samples are visited in a fixed order.  No kernel performs
a cross-thread floating-point reduction, so results are bit-identical for
any thread count.

Scalar math runs in float64 and is stored into the output dtype; gradients
stay hand-derived and exact for both float32 and float64 buffers.
"""

import math

import numpy as np
from numba import njit, prange

_P1 = 2654435761
_P2 = 805459861


@njit(inline="always")
def _corner_index(ix, iy, iz, res, size, hashed):
    if hashed:
        h = np.uint64(ix) ^ (np.uint64(iy) * np.uint64(_P1)) ^ (np.uint64(iz) * np.uint64(_P2))
        return np.int64(h % np.uint64(size))
    stride = res + 1
    return (ix * stride + iy) * stride + iz


@njit(parallel=True, cache=True)
def encode_fwd(pts01, level_res, level_off, level_size, level_hashed, feat_dim, tables, out):
    n = pts01.shape[0]
    nlevels = level_res.shape[0]
    for i in prange(n):
        for lv in range(nlevels):
            res = level_res[lv]
            off = level_off[lv]
            size = level_size[lv]
            hashed = level_hashed[lv]
            fx = pts01[i, 0] * res
            fy = pts01[i, 1] * res
            fz = pts01[i, 2] * res
            ix = min(int(fx), res - 1)
            iy = min(int(fy), res - 1)
            iz = min(int(fz), res - 1)
            tx = fx - ix
            ty = fy - iy
            tz = fz - iz
            base = lv * feat_dim
            for dx in range(2):
                wx = tx if dx else 1.0 - tx
                for dy in range(2):
                    wy = ty if dy else 1.0 - ty
                    for dz in range(2):
                        wz = tz if dz else 1.0 - tz
                        w = wx * wy * wz
                        row = off + _corner_index(ix + dx, iy + dy, iz + dz, res, size, hashed)
                        for d in range(feat_dim):
                            out[i, base + d] += w * tables[row, d]


@njit(parallel=True, cache=True)
def encode_bwd_tables(pts01, level_res, level_off, level_size, level_hashed, feat_dim, dout, dtables):
    # One thread owns one level: scatter order inside a level is the fixed
    # sample order, so accumulation is reproducible bit-for-bit.
    n = pts01.shape[0]
    nlevels = level_res.shape[0]
    for lv in prange(nlevels):
        res = level_res[lv]
        off = level_off[lv]
        size = level_size[lv]
        hashed = level_hashed[lv]
        base = lv * feat_dim
        for i in range(n):
            fx = pts01[i, 0] * res
            fy = pts01[i, 1] * res
            fz = pts01[i, 2] * res
            ix = min(int(fx), res - 1)
            iy = min(int(fy), res - 1)
            iz = min(int(fz), res - 1)
            tx = fx - ix
            ty = fy - iy
            tz = fz - iz
            for dx in range(2):
                wx = tx if dx else 1.0 - tx
                for dy in range(2):
                    wy = ty if dy else 1.0 - ty
                    for dz in range(2):
                        wz = tz if dz else 1.0 - tz
                        w = wx * wy * wz
                        row = off + _corner_index(ix + dx, iy + dy, iz + dz, res, size, hashed)
                        for d in range(feat_dim):
                            dtables[row, d] += w * dout[i, base + d]


@njit(parallel=True, cache=True)
def encode_bwd_points(pts01, level_res, level_off, level_size, level_hashed, feat_dim, tables, dout, dpts01):
    n = pts01.shape[0]
    nlevels = level_res.shape[0]
    for i in prange(n):
        gx = 0.0
        gy = 0.0
        gz = 0.0
        for lv in range(nlevels):
            res = level_res[lv]
            off = level_off[lv]
            size = level_size[lv]
            hashed = level_hashed[lv]
            fx = pts01[i, 0] * res
            fy = pts01[i, 1] * res
            fz = pts01[i, 2] * res
            ix = min(int(fx), res - 1)
            iy = min(int(fy), res - 1)
            iz = min(int(fz), res - 1)
            tx = fx - ix
            ty = fy - iy
            tz = fz - iz
            base = lv * feat_dim
            for dx in range(2):
                wx = tx if dx else 1.0 - tx
                sx = 1.0 if dx else -1.0
                for dy in range(2):
                    wy = ty if dy else 1.0 - ty
                    sy = 1.0 if dy else -1.0
                    for dz in range(2):
                        wz = tz if dz else 1.0 - tz
                        sz = 1.0 if dz else -1.0
                        row = off + _corner_index(ix + dx, iy + dy, iz + dz, res, size, hashed)
                        dot = 0.0
                        for d in range(feat_dim):
                            dot += tables[row, d] * dout[i, base + d]
                        gx += sx * wy * wz * dot * res
                        gy += wx * sy * wz * dot * res
                        gz += wx * wy * sz * dot * res
        dpts01[i, 0] = gx
        dpts01[i, 1] = gy
        dpts01[i, 2] = gz


@njit(parallel=True, cache=True)
def composite_fwd(sigma, radiance, tvals, delta, counts, out_color, out_alpha, out_depth):
    nrays = sigma.shape[0]
    for r in prange(nrays):
        trans = 1.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        dep = 0.0
        dl = delta[r]
        for k in range(counts[r]):
            att = math.exp(-sigma[r, k] * dl)
            w = trans * (1.0 - att)
            c0 += w * radiance[r, k, 0]
            c1 += w * radiance[r, k, 1]
            c2 += w * radiance[r, k, 2]
            dep += w * tvals[r, k]
            trans *= att
        out_color[r, 0] = c0
        out_color[r, 1] = c1
        out_color[r, 2] = c2
        out_alpha[r] = 1.0 - trans
        out_depth[r] = dep


@njit(parallel=True, cache=True)
def composite_bwd(sigma, radiance, delta, counts, dcolor, dalpha, dsigma, dradiance):
    nrays = sigma.shape[0]
    for r in prange(nrays):
        cnt = counts[r]
        if cnt == 0:
            continue
        dl = delta[r]
        # forward sweep: per-sample transmittance and weights
        tbuf = np.empty(cnt, dtype=np.float64)
        wbuf = np.empty(cnt, dtype=np.float64)
        trans = 1.0
        for k in range(cnt):
            att = math.exp(-sigma[r, k] * dl)
            tbuf[k] = trans
            wbuf[k] = trans * (1.0 - att)
            trans *= att
        # backward sweep: suffix sum of downstream weight gradients
        suffix = 0.0
        for k in range(cnt - 1, -1, -1):
            g = (
                dcolor[r, 0] * radiance[r, k, 0]
                + dcolor[r, 1] * radiance[r, k, 1]
                + dcolor[r, 2] * radiance[r, k, 2]
                + dalpha[r]
            )
            att = math.exp(-sigma[r, k] * dl)
            dsigma[r, k] = dl * (tbuf[k] * att * g - suffix)
            dradiance[r, k, 0] = wbuf[k] * dcolor[r, 0]
            dradiance[r, k, 1] = wbuf[k] * dcolor[r, 1]
            dradiance[r, k, 2] = wbuf[k] * dcolor[r, 2]
            suffix += g * wbuf[k]


@njit(inline="always")
def _cell_exit_t(ox, oy, oz, dx, dy, dz, cx, cy, cz, cell, lox, loy, loz):
    # exit distance from an axis-aligned cell at integer coords (cx,cy,cz)
    big = 1e30
    tx = big
    ty = big
    tz = big
    if dx > 1e-12:
        tx = (lox + (cx + 1) * cell - ox) / dx
    elif dx < -1e-12:
        tx = (lox + cx * cell - ox) / dx
    if dy > 1e-12:
        ty = (loy + (cy + 1) * cell - oy) / dy
    elif dy < -1e-12:
        ty = (loy + cy * cell - oy) / dy
    if dz > 1e-12:
        tz = (loz + (cz + 1) * cell - oz) / dz
    elif dz < -1e-12:
        tz = (loz + cz * cell - oz) / dz
    t = tx
    if ty < t:
        t = ty
    if tz < t:
        t = tz
    return t


@njit(parallel=True, cache=True)
def octree_sample(origins, dirs, occ_flat, lvl_off, lvl_res, lox, loy, loz, box, max_samples, jitter, tvals, counts, deltas):
    """Stratified samples restricted to occupied leaves along each ray.

    Walks maximal empty subtrees in one step (descend from the root; the
    first empty ancestor bounds the skip) and emits the global stratified
    sample points that land inside occupied leaf segments.
    """
    nrays = origins.shape[0]
    nlev = lvl_res.shape[0]
    leaf_res = lvl_res[nlev - 1]
    for r in prange(nrays):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]

        # slab test against the bounding box
        t0 = 0.0
        t1 = 1e30
        ok = True
        for ax in range(3):
            o = ox if ax == 0 else (oy if ax == 1 else oz)
            d = dx if ax == 0 else (dy if ax == 1 else dz)
            lo = lox if ax == 0 else (loy if ax == 1 else loz)
            hi = lo + box
            if abs(d) < 1e-12:
                if o < lo or o > hi:
                    ok = False
            else:
                ta = (lo - o) / d
                tb = (hi - o) / d
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
        if not ok or t1 <= t0:
            counts[r] = 0
            deltas[r] = 0.0
            continue

        step = (t1 - t0) / max_samples
        deltas[r] = step
        bump = step * 1e-3
        cnt = 0
        k = 0
        t = t0 + bump
        guard = 0
        max_guard = 8 * leaf_res + 64
        while t < t1 and k < max_samples and guard < max_guard:
            guard += 1
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            # clamp into the box to survive roundoff at the boundary
            ux = (px - lox) / box
            uy = (py - loy) / box
            uz = (pz - loz) / box
            if ux < 0.0:
                ux = 0.0
            if ux >= 1.0:
                ux = 0.9999999
            if uy < 0.0:
                uy = 0.0
            if uy >= 1.0:
                uy = 0.9999999
            if uz < 0.0:
                uz = 0.0
            if uz >= 1.0:
                uz = 0.9999999

            # descend; the first empty level is the maximal empty node
            seg_end = -1.0
            occupied_leaf = False
            for lv in range(nlev):
                res = lvl_res[lv]
                cx = int(ux * res)
                cy = int(uy * res)
                cz = int(uz * res)
                if cx >= res:
                    cx = res - 1
                if cy >= res:
                    cy = res - 1
                if cz >= res:
                    cz = res - 1
                idx = lvl_off[lv] + (cx * res + cy) * res + cz
                if occ_flat[idx] == 0:
                    seg_end = _cell_exit_t(ox, oy, oz, dx, dy, dz, cx, cy, cz, box / res, lox, loy, loz)
                    break
                if lv == nlev - 1:
                    occupied_leaf = True
                    seg_end = _cell_exit_t(ox, oy, oz, dx, dy, dz, cx, cy, cz, box / res, lox, loy, loz)
            if seg_end <= t:
                seg_end = t + step * 1e-2
            if seg_end > t1:
                seg_end = t1

            if occupied_leaf:
                while k < max_samples:
                    ts = t0 + (k + jitter[r, k]) * step
                    if ts < t:
                        k += 1
                        continue
                    if ts < seg_end:
                        tvals[r, cnt] = ts
                        cnt += 1
                        k += 1
                    else:
                        break
            else:
                # fast-forward the sample pointer past the empty segment
                while k < max_samples and t0 + (k + jitter[r, k]) * step < seg_end:
                    k += 1
            t = seg_end + bump
        counts[r] = cnt


@njit(cache=True)
def raster_bins(tx0, tx1, ty0, ty1, valid, ntx, nty):
    """CSR face lists per screen tile; faces stay in ascending id order."""
    nt = ntx * nty
    off = np.zeros(nt + 1, dtype=np.int64)
    nf = tx0.shape[0]
    for f in range(nf):
        if not valid[f]:
            continue
        for ty in range(ty0[f], ty1[f] + 1):
            for tx in range(tx0[f], tx1[f] + 1):
                off[ty * ntx + tx + 1] += 1
    for i in range(nt):
        off[i + 1] += off[i]
    faces_out = np.empty(off[nt], dtype=np.int64)
    cursor = off[:nt].copy()
    for f in range(nf):
        if not valid[f]:
            continue
        for ty in range(ty0[f], ty1[f] + 1):
            for tx in range(tx0[f], tx1[f] + 1):
                t = ty * ntx + tx
                faces_out[cursor[t]] = f
                cursor[t] += 1
    return off, faces_out


@njit(parallel=True, cache=True)
def raster_cast(origins, dirs, verts, faces, tile_off, tile_faces, ntx, nty, tile, width, height, face_id, out_t, out_u, out_v):
    """Per-pixel nearest ray/triangle hit; ties in t keep the lower face id."""
    for tl in prange(ntx * nty):
        tx = tl % ntx
        ty = tl // ntx
        x_hi = min(width, (tx + 1) * tile)
        y_hi = min(height, (ty + 1) * tile)
        for py in range(ty * tile, y_hi):
            for px in range(tx * tile, x_hi):
                pix = py * width + px
                ox, oy, oz = origins[pix, 0], origins[pix, 1], origins[pix, 2]
                dx, dy, dz = dirs[pix, 0], dirs[pix, 1], dirs[pix, 2]
                best_t = np.inf
                best = np.int64(-1)
                bu = 0.0
                bv = 0.0
                for k in range(tile_off[tl], tile_off[tl + 1]):
                    f = tile_faces[k]
                    i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
                    e1x = verts[i1, 0] - verts[i0, 0]
                    e1y = verts[i1, 1] - verts[i0, 1]
                    e1z = verts[i1, 2] - verts[i0, 2]
                    e2x = verts[i2, 0] - verts[i0, 0]
                    e2y = verts[i2, 1] - verts[i0, 1]
                    e2z = verts[i2, 2] - verts[i0, 2]
                    hx = dy * e2z - dz * e2y
                    hy = dz * e2x - dx * e2z
                    hz = dx * e2y - dy * e2x
                    a = e1x * hx + e1y * hy + e1z * hz
                    if abs(a) < 1e-12:
                        continue
                    fi = 1.0 / a
                    sx = ox - verts[i0, 0]
                    sy = oy - verts[i0, 1]
                    sz = oz - verts[i0, 2]
                    u = fi * (sx * hx + sy * hy + sz * hz)
                    if u < -1e-9 or u > 1.0 + 1e-9:
                        continue
                    qx = sy * e1z - sz * e1y
                    qy = sz * e1x - sx * e1z
                    qz = sx * e1y - sy * e1x
                    v = fi * (dx * qx + dy * qy + dz * qz)
                    if v < -1e-9 or u + v > 1.0 + 1e-9:
                        continue
                    t = fi * (e2x * qx + e2y * qy + e2z * qz)
                    if t <= 1e-9:
                        continue
                    if t < best_t:
                        best_t = t
                        best = f
                        bu = u
                        bv = v
                face_id[pix] = best
                if best >= 0:
                    out_t[pix] = best_t
                    out_u[pix] = bu
                    out_v[pix] = bv
