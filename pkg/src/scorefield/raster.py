"""Differentiable surface rendering.

Per pixel the nearest triangle is found by exact ray casting (perspective
correct by construction), shaded with the same lighting model as the volume
renderer, and composited over the environment.  Gradients reach

  * the texture field through the albedo at the hit point,
  * the vertices through the hit distance (implicit function theorem on the
    ray/triangle system), the flat face normal, and a screen-space coverage
    ramp on silhouette pixels: alpha = clamp(0.5 + d_edge, 0, 1) where
    d_edge is the signed pixel distance to the nearest edge of the hit face.

Pixels just outside the silhouette keep alpha 0, so coverage gradients are
one-sided; that is enough to pull edges outward because boundary pixels
saturate only once the edge has moved past their centers.
"""

import numpy as np

from . import _kernels
from .errors import EmptyMeshError
from .volume import RenderOutput, _shade, _shade_backward

DEFAULT_TILE = 16


def project_vertices(camera, verts):
    """Screen-space pixel coords and camera depth for world points."""
    px, py, z = camera.project(verts)
    return px, py, z


def projection_jacobian(camera, verts):
    """d(px)/dv and d(py)/dv, each (n, 3), at the given world points."""
    right, upv, fwd = camera.basis()
    rel = np.asarray(verts, dtype=np.float64) - camera.position
    x = rel @ right
    y = rel @ upv
    z = rel @ fwd
    zs = np.where(np.abs(z) < 1e-12, 1e-12, z)
    fx = 0.5 * camera.width * camera.focal / zs
    fy = -0.5 * camera.height * camera.focal / zs
    jx = fx[:, None] * (right[None, :] - (x / zs)[:, None] * fwd[None, :])
    jy = fy[:, None] * (upv[None, :] - (y / zs)[:, None] * fwd[None, :])
    return jx, jy


def rasterize(camera, verts, faces, tile=DEFAULT_TILE):
    """Nearest-hit buffers for one view; ties in depth keep the lower face id."""
    w, h = camera.width, camera.height
    px, py, z = project_vertices(camera, verts)
    fz = z[faces]
    fpx = px[faces]
    fpy = py[faces]
    valid = (fz > 1e-6).all(axis=1)
    x0 = np.floor(fpx.min(axis=1)).astype(np.int64) - 1
    x1 = np.ceil(fpx.max(axis=1)).astype(np.int64) + 1
    y0 = np.floor(fpy.min(axis=1)).astype(np.int64) - 1
    y1 = np.ceil(fpy.max(axis=1)).astype(np.int64) + 1
    valid &= (x1 >= 0) & (x0 <= w - 1) & (y1 >= 0) & (y0 <= h - 1)
    x0 = np.clip(x0, 0, w - 1)
    x1 = np.clip(x1, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.clip(y1, 0, h - 1)
    ntx = (w + tile - 1) // tile
    nty = (h + tile - 1) // tile
    off, tile_faces = _kernels.raster_bins(
        x0 // tile, x1 // tile, y0 // tile, y1 // tile, valid, ntx, nty
    )
    origins, dirs = camera.rays()
    face_id = np.full(w * h, -1, dtype=np.int64)
    t = np.zeros(w * h)
    u = np.zeros(w * h)
    v = np.zeros(w * h)
    _kernels.raster_cast(
        origins, dirs, np.ascontiguousarray(verts, dtype=np.float64), faces,
        off, tile_faces, ntx, nty, tile, w, h, face_id, t, u, v,
    )
    return {
        "face_id": face_id, "t": t, "u": u, "v": v,
        "px": px, "py": py, "z": z,
        "origins": origins, "dirs": dirs, "width": w, "height": h,
    }


def _boundary_mask(hit_img):
    pad = np.pad(hit_img, 1, constant_values=False)
    inner = pad[1:-1, 1:-1]
    miss_near = (~pad[:-2, 1:-1]) | (~pad[2:, 1:-1]) | (~pad[1:-1, :-2]) | (~pad[1:-1, 2:])
    return inner & miss_near


def _edge_coverage(ras, faces):
    """Coverage alpha for silhouette pixels plus the data to differentiate it.

    Returns (alpha_flat, aa) where aa carries, per AA pixel, the flat pixel
    index, the two vertex ids of the nearest edge, the winding sign and the
    edge's screen geometry contribution state.
    """
    w, h = ras["width"], ras["height"]
    face_id = ras["face_id"]
    hit = face_id >= 0
    alpha = hit.astype(np.float64)
    bnd = _boundary_mask(hit.reshape(h, w)).reshape(-1)
    idx = np.nonzero(bnd)[0]
    if idx.size == 0:
        return alpha, None
    f = face_id[idx]
    tri = faces[f]
    ax = ras["px"][tri]
    ay = ras["py"][tri]
    qx = (idx % w).astype(np.float64)
    qy = (idx // w).astype(np.float64)
    area2 = (ax[:, 1] - ax[:, 0]) * (ay[:, 2] - ay[:, 0]) - (ay[:, 1] - ay[:, 0]) * (ax[:, 2] - ax[:, 0])
    wind = np.where(area2 >= 0.0, 1.0, -1.0)
    dists = np.empty((idx.size, 3))
    for e, (i0, i1) in enumerate(((0, 1), (1, 2), (2, 0))):
        ex = ax[:, i1] - ax[:, i0]
        ey = ay[:, i1] - ay[:, i0]
        ln = np.maximum(np.hypot(ex, ey), 1e-12)
        cr = ex * (qy - ay[:, i0]) - ey * (qx - ax[:, i0])
        dists[:, e] = wind * cr / ln
    pick = np.argmin(dists, axis=1)
    dmin = dists[np.arange(idx.size), pick]
    alpha[idx] = np.clip(0.5 + dmin, 0.0, 1.0)
    corner = np.array(((0, 1), (1, 2), (2, 0)))[pick]
    va = tri[np.arange(idx.size), corner[:, 0]]
    vb = tri[np.arange(idx.size), corner[:, 1]]
    aa = {"idx": idx, "va": va, "vb": vb, "wind": wind, "qx": qx, "qy": qy, "dmin": dmin}
    return alpha, aa


def _aa_backward(aa, ras, dalpha_flat, camera, verts, dverts):
    """Chain coverage cotangents through the edge distance into the vertices."""
    act = (aa["dmin"] > -0.5) & (aa["dmin"] < 0.5)
    if not act.any():
        return
    idx = aa["idx"][act]
    va = aa["va"][act]
    vb = aa["vb"][act]
    wind = aa["wind"][act]
    qx = aa["qx"][act]
    qy = aa["qy"][act]
    g = dalpha_flat[idx]
    axp = ras["px"][va]
    ayp = ras["py"][va]
    bxp = ras["px"][vb]
    byp = ras["py"][vb]
    ex = bxp - axp
    ey = byp - ayp
    ln = np.maximum(np.hypot(ex, ey), 1e-12)
    cr = ex * (qy - ayp) - ey * (qx - axp)
    # dist = wind * cr / ln
    dcr = g * wind / ln
    dln = -g * wind * cr / ln**2
    dax = dcr * (byp - qy) + dln * (-ex / ln)
    day = dcr * (qx - bxp) + dln * (-ey / ln)
    dbx = dcr * (qy - ayp) + dln * (ex / ln)
    dby = dcr * (axp - qx) + dln * (ey / ln)
    need = np.unique(np.concatenate([va, vb]))
    jx, jy = projection_jacobian(camera, verts[need])
    pos = {int(vid): k for k, vid in enumerate(need)}
    ka = np.array([pos[int(i)] for i in va])
    kb = np.array([pos[int(i)] for i in vb])
    np.add.at(dverts, va, dax[:, None] * jx[ka] + day[:, None] * jy[ka])
    np.add.at(dverts, vb, dbx[:, None] * jx[kb] + dby[:, None] * jy[kb])


def render_mesh(field, env, mesh, camera, shading=None, with_grad=True, tile=DEFAULT_TILE):
    """Render a surface mesh; the tape fills ``out.dvertices`` alongside the
    field and environment parameter gradients."""
    from .cameras import ShadingSample

    if shading is None:
        shading = ShadingSample()
    if mesh.n_faces == 0:
        raise EmptyMeshError("cannot render a mesh with no faces")
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    faces = mesh.faces
    dtype = field.dtype
    w, h = camera.width, camera.height

    ras = rasterize(camera, verts, faces, tile=tile)
    face_id = ras["face_id"]
    hit = np.nonzero(face_id >= 0)[0]
    dirs = ras["dirs"]
    origins = ras["origins"]

    alpha_flat, aa = _edge_coverage(ras, faces)
    bg, env_ctx = env.forward(dirs, need_ctx=with_grad)

    fg = np.zeros((w * h, 3))
    hitp = np.zeros((w * h, 3))
    shade_saved = None
    fctx = None
    p = d_hit = n_pix = None
    fnorm = fcross = fnlen = e1 = e2 = None
    if hit.size:
        t_hit = ras["t"][hit]
        d_hit = dirs[hit]
        p = origins[hit] + t_hit[:, None] * d_hit
        hitp[hit] = p
        fid = face_id[hit]
        e1 = verts[faces[:, 1]] - verts[faces[:, 0]]
        e2 = verts[faces[:, 2]] - verts[faces[:, 0]]
        fcross = np.cross(e1, e2)
        fnlen = np.maximum(np.linalg.norm(fcross, axis=1, keepdims=True), 1e-30)
        fnorm = fcross / fnlen
        n_pix = fnorm[fid]
        _, albedo, _, fctx = field.forward(p.astype(dtype), want_normal=False, need_ctx=with_grad)
        radiance, shade_saved = _shade(albedo, p, n_pix, shading)
        fg[hit] = radiance

    color = alpha_flat[:, None] * fg + (1.0 - alpha_flat[:, None]) * bg
    dverts = np.zeros_like(verts)

    tape = None
    if with_grad:

        def tape_fn(dcolor, dalpha_ext):
            dc = dcolor.reshape(w * h, 3).astype(np.float64)
            env.backward(env_ctx, ((1.0 - alpha_flat[:, None]) * dc).astype(dtype))
            dalpha_flat = np.sum(dc * (fg - bg), axis=1)
            if dalpha_ext is not None:
                dalpha_flat = dalpha_flat + np.asarray(dalpha_ext).reshape(w * h)
            if hit.size:
                fid = face_id[hit]
                dfg = alpha_flat[hit, None] * dc[hit]
                dalbedo, dnormal, dpts_shade = _shade_backward(dfg, shade_saved, shading, need_point_grad=True)
                dpts = field.backward(fctx, dalbedo=dalbedo.astype(dtype), need_point_grad=True)
                dpts = dpts.astype(np.float64)
                if dpts_shade is not None:
                    dpts += dpts_shade
                # hit point p = o + t d: route dp through t via the linear
                # system [-d | e1 | e2] (t,u,v)^T = o - v0
                g_t = np.sum(dpts * d_hit, axis=1)
                m = np.empty((hit.size, 3, 3))
                m[:, :, 0] = -d_hit
                m[:, :, 1] = e1[fid]
                m[:, :, 2] = e2[fid]
                g = np.zeros((hit.size, 3))
                g[:, 0] = g_t
                y = np.linalg.solve(np.transpose(m, (0, 2, 1)), g[:, :, None])[:, :, 0]
                uu = ras["u"][hit]
                vv = ras["v"][hit]
                w0 = (1.0 - uu - vv)[:, None]
                np.add.at(dverts, faces[fid, 0], -w0 * y)
                np.add.at(dverts, faces[fid, 1], -uu[:, None] * y)
                np.add.at(dverts, faces[fid, 2], -vv[:, None] * y)
                if dnormal is not None:
                    dn_face = np.zeros_like(fnorm)
                    np.add.at(dn_face, fid, dnormal)
                    dc_face = (dn_face - fnorm * np.sum(fnorm * dn_face, axis=1, keepdims=True)) / fnlen
                    de1 = np.cross(e2, dc_face)
                    de2 = np.cross(dc_face, e1)
                    np.add.at(dverts, faces[:, 0], -de1 - de2)
                    np.add.at(dverts, faces[:, 1], de1)
                    np.add.at(dverts, faces[:, 2], de2)
            if aa is not None:
                _aa_backward(aa, ras, dalpha_flat, camera, verts, dverts)

        tape = tape_fn

    out = RenderOutput(
        color.astype(dtype).reshape(h, w, 3),
        alpha_flat.astype(dtype).reshape(h, w),
        hitp.astype(dtype).reshape(h, w, 3),
        tape=tape,
    )
    out.dvertices = dverts
    return out
