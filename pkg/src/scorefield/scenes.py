"""Analytic reference scene: a sphere and a box under a gradient sky.

Serves two jobs: its ray-traced images are the targets that the Gaussian
oracle priors pull renders toward, and its closed-form geometry/albedo are
ground truth for evaluation.  Surfaces are shaded with the same lighting
model as the differentiable renderers, so a perfectly trained model can
match the reference exactly.
"""

import numpy as np

from .cameras import ShadingSample, orbit_camera
from .volume import _shade

SPHERE_CENTER = np.array([-0.25, -0.18, 0.0])
SPHERE_RADIUS = 0.45
BOX_CENTER = np.array([0.32, 0.28, -0.05])
BOX_HALF = np.array([0.28, 0.2, 0.3])

SKY_LOW = np.array([0.9, 0.82, 0.72])
SKY_HIGH = np.array([0.34, 0.5, 0.72])


def background(dirs):
    """Vertical sky gradient for unit directions."""
    z01 = 0.5 * (np.asarray(dirs)[..., 2] + 1.0)
    return SKY_LOW + z01[..., None] * (SKY_HIGH - SKY_LOW)


def sphere_albedo(pts, edited=False):
    p = np.asarray(pts)
    if edited:
        r = 0.2 + 0.08 * np.sin(3.0 * p[..., 0])
        g = 0.35 + 0.1 * p[..., 1]
        b = 0.85 + 0.1 * np.cos(2.0 * p[..., 2])
    else:
        r = 0.8 + 0.15 * np.sin(3.0 * p[..., 0])
        g = 0.33 + 0.1 * p[..., 1]
        b = 0.22 + 0.1 * np.cos(2.0 * p[..., 2])
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def box_albedo(pts):
    p = np.asarray(pts)
    r = 0.22 + 0.1 * p[..., 0]
    g = 0.5 + 0.12 * np.sin(2.0 * p[..., 1])
    b = 0.78 - 0.1 * p[..., 2]
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def scene_albedo(pts, edited=False):
    """Albedo by nearest body, defined everywhere (used off-surface too)."""
    p = np.asarray(pts)
    ds = np.linalg.norm(p - SPHERE_CENTER, axis=-1) - SPHERE_RADIUS
    q = np.abs(p - BOX_CENTER) - BOX_HALF
    db = np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
    use_sphere = ds <= db
    return np.where(use_sphere[..., None], sphere_albedo(p, edited=edited), box_albedo(p))


def scene_sdf(pts):
    p = np.asarray(pts)
    ds = np.linalg.norm(p - SPHERE_CENTER, axis=-1) - SPHERE_RADIUS
    q = np.abs(p - BOX_CENTER) - BOX_HALF
    db = np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
    return np.minimum(ds, db)


def _hit_sphere(o, d):
    oc = o - SPHERE_CENTER
    b = np.sum(oc * d, axis=1)
    c = np.sum(oc * oc, axis=1) - SPHERE_RADIUS**2
    disc = b * b - c
    ok = disc > 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = -b - sq
    t = np.where(ok & (t > 1e-6), t, np.inf)
    return t


def _hit_box(o, d):
    inv = 1.0 / np.where(np.abs(d) < 1e-12, 1e-12, d)
    t0 = (BOX_CENTER - BOX_HALF - o) * inv
    t1 = (BOX_CENTER + BOX_HALF - o) * inv
    tn = np.minimum(t0, t1).max(axis=1)
    tf = np.maximum(t0, t1).min(axis=1)
    ok = (tn <= tf) & (tf > 1e-6) & (tn > 1e-6)
    return np.where(ok, tn, np.inf)


def _box_normal(p):
    rel = (p - BOX_CENTER) / BOX_HALF
    ax = np.argmax(np.abs(rel), axis=1)
    n = np.zeros_like(p)
    n[np.arange(p.shape[0]), ax] = np.sign(rel[np.arange(p.shape[0]), ax])
    return n


def render_reference(camera, shading=None, edited=False):
    """Exact ray-traced view: returns (color, alpha, depth) arrays."""
    if shading is None:
        shading = ShadingSample()
    o, d = camera.rays()
    ts = _hit_sphere(o, d)
    tb = _hit_box(o, d)
    t = np.minimum(ts, tb)
    hit = np.isfinite(t)
    color = background(d).astype(np.float64)
    idx = np.nonzero(hit)[0]
    if idx.size:
        th = t[idx]
        p = o[idx] + th[:, None] * d[idx]
        on_sphere = ts[idx] <= tb[idx]
        albedo = np.where(on_sphere[:, None], sphere_albedo(p, edited=edited), box_albedo(p))
        ns = (p - SPHERE_CENTER) / SPHERE_RADIUS
        n = np.where(on_sphere[:, None], ns, _box_normal(p))
        radiance, _ = _shade(albedo, p, n, shading)
        color[idx] = radiance
    h, w = camera.height, camera.width
    alpha = hit.astype(np.float64)
    depth = np.where(hit, t, 0.0)
    return color.reshape(h, w, 3), alpha.reshape(h, w), depth.reshape(h, w)


def fixed_rig(n=8, width=64, height=64, elevation_deg=20.0, distance=1.75, focal=1.25):
    """Evenly spaced orbit cameras; azimuth bin k of n sits at k * 2pi / n."""
    elev = np.deg2rad(elevation_deg)
    return [
        orbit_camera(2.0 * np.pi * k / n, elev, distance, focal, width, height)
        for k in range(n)
    ]


def rig_targets(cameras, shading=None, edited=False):
    """Stack of reference renders, one per camera."""
    return np.stack([render_reference(c, shading=shading, edited=edited)[0] for c in cameras])


def rig_view_sampler(cameras, batch, shading=None):
    """View sampler cycling a fixed camera rig instead of random orbits.

    Iteration ``i``, slot ``b`` picks camera ``(i * batch + b) % len(cameras)``
    resized to the requested render resolution, always with the same shading,
    so every rig view is revisited on a fixed cadence.
    """
    shading = shading if shading is not None else ShadingSample()

    def sampler(seed, iteration, view, stage, width, height):
        cam = cameras[(iteration * batch + view) % len(cameras)]
        if cam.width != width or cam.height != height:
            cam = cam.resized(width, height)
        return cam, shading

    return sampler


def psnr(a, b, peak=1.0):
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)
