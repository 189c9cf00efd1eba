"""Mesh export/import with a baked albedo texture.

Every triangle gets its own square chart in the atlas (a right triangle
inset by a margin), so no two faces ever share texels and bilinear lookups
never bleed across charts.  Texels in the margin ring clamp to the nearest
point inside the triangle, extending edge colors outward.  Textures are
stored as 8-bit sRGB PNG; all in-memory colors stay linear.
"""

import os

import numpy as np
from PIL import Image

from .errors import ConfigError


def linear_to_srgb(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_to_linear(y):
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, 1.0)
    return np.where(y <= 0.04045, y / 12.92, ((y + 0.055) / 1.055) ** 2.4)


def save_png(path, img_linear):
    srgb = linear_to_srgb(img_linear)
    data = np.round(srgb * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def load_png(path):
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(img)


def chart_layout(n_faces, atlas_res=1024, margin=2.0):
    """Per-face chart UVs (n, 3, 2) plus the integer cell grid size."""
    if n_faces < 1:
        raise ConfigError("cannot lay out an atlas for zero faces")
    cells = int(np.ceil(np.sqrt(n_faces)))
    cell = atlas_res // cells
    if cell < 2 * margin + 2:
        raise ConfigError(
            f"atlas {atlas_res} too small for {n_faces} faces (cell {cell}px)"
        )
    i = np.arange(n_faces)
    cx = (i % cells) * cell
    cy = (i // cells) * cell
    corners_px = np.empty((n_faces, 3, 2))
    corners_px[:, 0, 0] = cx + margin
    corners_px[:, 0, 1] = cy + margin
    corners_px[:, 1, 0] = cx + cell - margin
    corners_px[:, 1, 1] = cy + margin
    corners_px[:, 2, 0] = cx + margin
    corners_px[:, 2, 1] = cy + cell - margin
    uv = np.empty_like(corners_px)
    uv[:, :, 0] = corners_px[:, :, 0] / atlas_res
    uv[:, :, 1] = 1.0 - corners_px[:, :, 1] / atlas_res
    return uv, cells, cell


def bake_texture(mesh, field, atlas_res=1024, margin=2.0, chunk=262144):
    """Sample the field's albedo over every chart; returns (texture, uvs)."""
    uv, cells, cell = chart_layout(mesh.n_faces, atlas_res, margin)
    tex = np.full((atlas_res, atlas_res, 3), 0.5)

    ty, tx = np.meshgrid(np.arange(atlas_res), np.arange(atlas_res), indexing="ij")
    cell_x = tx // cell
    cell_y = ty // cell
    fid = cell_y * cells + cell_x
    ok = (fid < mesh.n_faces) & (cell_x < cells) & (cell_y < cells)
    fid = fid[ok]
    lx = (tx[ok] - cell_x[ok] * cell + 0.5) - margin
    ly = (ty[ok] - cell_y[ok] * cell + 0.5) - margin
    span = cell - 2.0 * margin
    u1 = lx / span
    u2 = ly / span
    # clamp into the chart triangle so margin texels extend edge colors
    u1 = np.clip(u1, 0.0, 1.0)
    u2 = np.clip(u2, 0.0, 1.0)
    s = u1 + u2
    over = s > 1.0
    u1[over] /= s[over]
    u2[over] /= s[over]
    u0 = 1.0 - u1 - u2

    tri = mesh.vertices[mesh.faces[fid]]
    pts = u0[:, None] * tri[:, 0] + u1[:, None] * tri[:, 1] + u2[:, None] * tri[:, 2]
    albedo = np.empty((pts.shape[0], 3))
    for lo in range(0, pts.shape[0], chunk):
        hi = min(lo + chunk, pts.shape[0])
        _, alb, _, _ = field.forward(pts[lo:hi].astype(field.dtype), want_normal=False, need_ctx=False)
        albedo[lo:hi] = alb
    tex[ty[ok], tx[ok]] = albedo
    return tex, uv


def export_scene(prefix, mesh, field, atlas_res=1024):
    """Write prefix.obj / prefix.mtl / prefix.png; returns their paths."""
    parent = os.path.dirname(os.path.abspath(prefix))
    os.makedirs(parent, exist_ok=True)
    tex, uv = bake_texture(mesh, field, atlas_res=atlas_res)
    obj_path = prefix + ".obj"
    mtl_path = prefix + ".mtl"
    png_path = prefix + ".png"
    save_png(png_path, tex)
    mtl_name = os.path.basename(mtl_path)
    png_name = os.path.basename(png_path)

    lines = [f"mtllib {mtl_name}", "o surface"]
    # shortest decimal that parses back to the same float: "v" rows must
    # survive a write/read cycle bit-for-bit, and fixed-point formats drop
    # significant digits on near-zero coordinates
    fmt = np.format_float_positional
    for v in mesh.vertices:
        lines.append(f"v {fmt(v[0], unique=True)} {fmt(v[1], unique=True)} {fmt(v[2], unique=True)}")
    for f in range(mesh.n_faces):
        for c in range(3):
            lines.append(f"vt {uv[f, c, 0]:.8f} {uv[f, c, 1]:.8f}")
    lines.append("usemtl baked")
    for f in range(mesh.n_faces):
        a, b, c = mesh.faces[f] + 1
        t = 3 * f + 1
        lines.append(f"f {a}/{t} {b}/{t + 1} {c}/{t + 2}")
    with open(obj_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(mtl_path, "w") as fh:
        fh.write(f"newmtl baked\nKd 1.0 1.0 1.0\nmap_Kd {png_name}\n")
    return {"obj": obj_path, "mtl": mtl_path, "png": png_path}


def load_obj(path):
    """Read back vertices, faces, per-corner UVs, and the linear texture."""
    verts = []
    uvs = []
    faces = []
    corner_uv = []
    texture = None
    mtl_file = None
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "mtllib":
                mtl_file = parts[1]
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ConfigError("only triangle faces are supported")
                vi = []
                ti = []
                for token in parts[1:]:
                    bits = token.split("/")
                    vi.append(int(bits[0]) - 1)
                    ti.append(int(bits[1]) - 1 if len(bits) > 1 and bits[1] else -1)
                faces.append(vi)
                corner_uv.append(ti)
    if mtl_file is not None:
        mtl_path = os.path.join(base, mtl_file)
        if os.path.exists(mtl_path):
            with open(mtl_path) as fh:
                for line in fh:
                    parts = line.split()
                    if parts and parts[0] == "map_Kd":
                        texture = load_png(os.path.join(base, parts[1]))
    uvs = np.asarray(uvs) if uvs else np.zeros((0, 2))
    corner_uv = np.asarray(corner_uv, dtype=np.int64)
    faces = np.asarray(faces, dtype=np.int64)
    per_corner = uvs[corner_uv] if corner_uv.size and (corner_uv >= 0).all() else None
    return {
        "vertices": np.asarray(verts),
        "faces": faces,
        "uvs": per_corner,
        "texture": texture,
    }


def sample_texture(texture, uv):
    """Bilinear lookup; uv has origin at the bottom-left like the OBJ vt rows."""
    h, w = texture.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    x = np.clip(uv[..., 0] * w - 0.5, 0.0, w - 1.0)
    y = np.clip((1.0 - uv[..., 1]) * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    c00 = texture[y0, x0]
    c01 = texture[y0, x1]
    c10 = texture[y1, x0]
    c11 = texture[y1, x1]
    return (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11)
