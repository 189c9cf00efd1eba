"""Differentiable volume rendering over the neural field.

Quadrature follows the standard emission-absorption model: with sample
spacing ``delta`` along a ray, transmittance ``T_i = exp(-sum_j<i sigma_j
delta)`` and weight ``w_i = T_i * (1 - exp(-sigma_i delta))``.  Foreground
composites over the learned environment color, ``color = fg + (1 - alpha) *
bg``.  The returned RenderOutput carries a one-shot gradient tape mapping
pixel gradients back to every parameter that contributed.
"""

import numpy as np

from . import _kernels
from .errors import DetachedTapeError
from .occupancy import sample_rays

ALPHA_GUARD = 1e-6


class RenderOutput:
    """Per-pixel color/alpha/hit-point plus a handle to pull gradients back."""

    def __init__(self, color, alpha, hit_coords, tape=None):
        self.color = color
        self.alpha = alpha
        self.hit_coords = hit_coords
        self._tape = tape
        self._consumed = False

    @property
    def has_tape(self):
        return self._tape is not None

    def detach(self):
        return RenderOutput(self.color, self.alpha, self.hit_coords, tape=None)

    def backward(self, dcolor, dalpha=None):
        """Accumulate parameter gradients for the given pixel cotangents."""
        if self._tape is None:
            raise DetachedTapeError("render was produced without a gradient tape")
        if self._consumed:
            raise DetachedTapeError("gradient tape already consumed")
        self._consumed = True
        dcolor = np.asarray(dcolor)
        if dcolor.shape != self.color.shape:
            raise ValueError(f"dcolor shape {dcolor.shape} != color shape {self.color.shape}")
        if dalpha is not None and np.asarray(dalpha).shape != self.alpha.shape:
            raise ValueError("dalpha shape mismatch")
        self._tape(dcolor, dalpha)


def _shade(albedo, pts, normals, shading):
    """Per-sample radiance; returns (radiance, saved) for the backward pass."""
    v = shading.whiteness_mix
    u = shading.texture_mix
    albedo_eff = albedo + v * (1.0 - albedo)
    if shading.needs_normals:
        to_light = shading.light_position - pts
        dist = np.linalg.norm(to_light, axis=1, keepdims=True)
        lhat = to_light / np.maximum(dist, 1e-12)
        cos = np.sum(normals * lhat, axis=1)
        cos_pos = np.maximum(cos, 0.0)
        mixfac = (1.0 - u) + u * (shading.ambient + shading.diffuse * cos_pos)
    else:
        lhat = None
        cos = None
        dist = None
        mixfac = (1.0 - u) + u * shading.ambient
        mixfac = np.full(albedo.shape[0], mixfac)
    radiance = albedo_eff * mixfac[:, None]
    return radiance, (albedo_eff, mixfac, lhat, cos, dist, normals)


def _shade_backward(drad, saved, shading, need_point_grad=False):
    """Returns (dalbedo, dnormal|None, dpts|None).

    ``dpts`` chains the light-direction dependence l_hat(p); it only matters
    when the sample positions themselves carry gradient (surface rendering).
    """
    albedo_eff, mixfac, lhat, cos, dist, normals = saved
    v = shading.whiteness_mix
    u = shading.texture_mix
    dalbedo_eff = drad * mixfac[:, None]
    dalbedo = dalbedo_eff * (1.0 - v)
    dnormal = None
    dpts = None
    if shading.needs_normals:
        dmix = np.sum(drad * albedo_eff, axis=1)
        dcos = dmix * (u * shading.diffuse)
        dcos = np.where(cos > 0.0, dcos, 0.0)
        dnormal = dcos[:, None] * lhat
        if need_point_grad:
            # cos = n . (L - p)/|L - p|  =>  dcos/dp = -(n - cos*l_hat)/dist
            dpts = dcos[:, None] * (-(normals - cos[:, None] * lhat) / dist)
    return dalbedo, dnormal, dpts


def render_volume(field, env, octree, camera, shading=None, max_samples=1024, rng=None, with_grad=True):
    """Render one view. Sampling uses midpoints unless an rng supplies jitter."""
    from .cameras import ShadingSample

    if shading is None:
        shading = ShadingSample()
    origins, dirs = camera.rays()
    nrays = origins.shape[0]
    h, w = camera.height, camera.width
    dtype = field.dtype

    tvals, counts, deltas = sample_rays(origins, dirs, octree, max_samples=max_samples, rng=rng)
    smax = int(counts.max()) if nrays else 0
    tvals = tvals[:, : max(smax, 1)]
    ray_idx, slot = np.nonzero(np.arange(tvals.shape[1])[None, :] < counts[:, None])
    pts = origins[ray_idx] + tvals[ray_idx, slot, None] * dirs[ray_idx]

    want_normal = shading.needs_normals
    sig, albedo, normal, fctx = field.forward(pts, want_normal=want_normal, need_ctx=with_grad)
    radiance, shade_saved = _shade(albedo, pts, normal, shading)

    sigma_d = np.zeros(tvals.shape, dtype=dtype)
    rad_d = np.zeros(tvals.shape + (3,), dtype=dtype)
    sigma_d[ray_idx, slot] = sig
    rad_d[ray_idx, slot] = radiance

    fg = np.zeros((nrays, 3), dtype=dtype)
    alpha = np.zeros(nrays, dtype=dtype)
    depth = np.zeros(nrays, dtype=dtype)
    _kernels.composite_fwd(sigma_d, rad_d, tvals.astype(dtype), deltas.astype(dtype), counts, fg, alpha, depth)

    bg, env_ctx = env.forward(dirs, need_ctx=with_grad)
    color = fg + (1.0 - alpha[:, None]) * bg
    exp_t = depth / np.maximum(alpha, ALPHA_GUARD)
    hit = origins + exp_t[:, None] * dirs

    tape = None
    if with_grad:

        def tape_fn(dcolor, dalpha_ext):
            dc = np.ascontiguousarray(dcolor.reshape(nrays, 3), dtype=dtype)
            da = np.zeros(nrays, dtype=dtype)
            if dalpha_ext is not None:
                da += np.asarray(dalpha_ext).reshape(nrays).astype(dtype)
            # compositing: color = fg + (1 - alpha) * bg
            env.backward(env_ctx, (1.0 - alpha[:, None]) * dc)
            da -= np.sum(dc * bg, axis=1)
            dsigma_d = np.zeros_like(sigma_d)
            drad_d = np.zeros_like(rad_d)
            _kernels.composite_bwd(sigma_d, rad_d, deltas.astype(dtype), counts, dc, da, dsigma_d, drad_d)
            dsig = dsigma_d[ray_idx, slot]
            drad = drad_d[ray_idx, slot]
            dalbedo, dnormal, _ = _shade_backward(drad, shade_saved, shading)
            field.backward(fctx, dsigma=dsig, dalbedo=dalbedo, dnormal=dnormal)

        tape = tape_fn

    return RenderOutput(
        color.reshape(h, w, 3),
        alpha.reshape(h, w),
        hit.reshape(h, w, 3),
        tape=tape,
    )


def opacity_loss(render, eps=1e-2):
    """Mean sqrt(alpha^2 + eps); returns (loss, dalpha) for the render's tape."""
    alpha = render.alpha
    root = np.sqrt(alpha.astype(np.float64) ** 2 + eps)
    loss = float(root.mean())
    dalpha = (alpha / (root * alpha.size)).astype(alpha.dtype)
    return loss, dalpha
