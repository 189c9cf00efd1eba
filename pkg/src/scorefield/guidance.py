"""Guidance priors and score distillation.

The distillation update treats the denoiser as a constant function of its
input: for a render ``x`` with parameters theta,

    grad_theta = E_{t, eps}[ w(t) * (eps_hat(x_t; y, t) - eps) * dx/dtheta ]

where ``x_t`` is the forward-diffused render.  The latent variant first maps
the render through a differentiable encoder and chains ``dz/dx``.  Denoisers
here are analytic Gaussian oracles: with prior ``x ~ N(x_star, s^2)`` and
``x_t = sqrt(ab) x + sigma eps``, the exact posterior mean is

    mu = (sqrt(ab) s^2 x_t + sigma^2 x_star) / (ab s^2 + sigma^2)

and the implied noise prediction is ``(x_t - sqrt(ab) mu) / sigma``.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


class DiffusionSchedule:
    """Cosine noise schedule, rescaled into [delta, 1 - delta] so alpha_bar
    stays strictly decreasing while hitting the clipped endpoints."""

    def __init__(self, delta=1e-4):
        if not 0.0 < delta < 0.5:
            raise ConfigError("schedule delta must lie in (0, 0.5)")
        self.delta = float(delta)

    def _check(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ConfigError(f"diffusion time outside [0, 1]: {t}")
        return t

    def alpha_bar(self, t):
        t = self._check(t)
        base = np.cos(0.5 * np.pi * t) ** 2
        return self.delta + (1.0 - 2.0 * self.delta) * base

    def sigma(self, t):
        return np.sqrt(1.0 - self.alpha_bar(t))

    def forward_process(self, x, t, eps):
        ab = self.alpha_bar(t)
        return np.sqrt(ab) * x + np.sqrt(1.0 - ab) * eps


_NULL = object()


@dataclass(frozen=True)
class ConditionSet:
    """Conditioning bundle: text token, optional image, optional low-res render."""

    text: object = None
    image: object = None
    x_low: object = None

    @classmethod
    def null(cls):
        return cls()

    @property
    def is_null(self):
        return self.text is None and self.image is None

    def text_only(self):
        return ConditionSet(text=self.text)

    def with_x_low(self, x_low):
        return replace(self, x_low=x_low)


class GuidanceModel:
    """Interface for denoisers: eps_hat = denoise(x_t, cond, t)."""

    schedule = None
    resolution = None  # (h, w) the model expects, or None for any
    latent = False
    needs_low_res = False

    def denoise(self, x_t, cond, t):
        raise NotImplementedError


class GaussianOraclePrior(GuidanceModel):
    """Condition-blind analytic denoiser around a single target image."""

    def __init__(self, x_star, s=0.0, schedule=None, needs_low_res=False):
        if s < 0.0:
            raise ConfigError("prior width s must be non-negative")
        self.x_star = np.asarray(x_star, dtype=np.float64)
        self.s = float(s)
        self.schedule = schedule or DiffusionSchedule()
        self.needs_low_res = needs_low_res

    @property
    def target_resolution(self):
        return self.x_star.shape[:2]

    def posterior_mean(self, x_t, t):
        ab = float(self.schedule.alpha_bar(t))
        sab = np.sqrt(ab)
        var = 1.0 - ab
        if self.s == 0.0:
            return np.broadcast_to(self.x_star, np.shape(x_t)).copy()
        s2 = self.s * self.s
        return (sab * s2 * x_t + var * self.x_star) / (ab * s2 + var)

    def denoise(self, x_t, cond, t):
        ab = float(self.schedule.alpha_bar(t))
        sab = np.sqrt(ab)
        sig = np.sqrt(1.0 - ab)
        return (x_t - sab * self.posterior_mean(x_t, t)) / sig


class ConditionedOraclePrior(GuidanceModel):
    """Oracle whose target depends on the condition; used to exercise CFG."""

    def __init__(self, targets, s=0.0, schedule=None):
        self.schedule = schedule or DiffusionSchedule()
        self._priors = {key: GaussianOraclePrior(x, s=s, schedule=self.schedule) for key, x in targets.items()}

    @staticmethod
    def key_for(cond):
        if cond is None or cond.is_null:
            return _NULL
        return (cond.text, cond.image is not None)

    def denoise(self, x_t, cond, t):
        key = self.key_for(cond)
        if key not in self._priors and key is not _NULL:
            raise KeyError(f"no oracle target for condition key {key}")
        if key is _NULL and _NULL not in self._priors:
            raise KeyError("no oracle target for the null condition")
        return self._priors[key].denoise(x_t, cond, t)

    @classmethod
    def null_key(cls):
        return _NULL


class MultiviewOraclePrior(GuidanceModel):
    """Azimuth-binned bank of Gaussian oracles around per-view targets.

    ``select_view(camera)`` binds the prior for the camera's azimuth bin; a
    bin without a target falls back to the nearest populated one (counted).
    """

    def __init__(self, targets, n_bins=None, s=0.0, schedule=None, needs_low_res=False):
        self.schedule = schedule or DiffusionSchedule()
        if isinstance(targets, dict):
            self._targets = {int(k): np.asarray(v, dtype=np.float64) for k, v in targets.items()}
            if n_bins is None:
                raise ConfigError("n_bins is required when targets are a sparse dict")
            self.n_bins = int(n_bins)
        else:
            arr = [np.asarray(v, dtype=np.float64) for v in targets]
            self._targets = dict(enumerate(arr))
            self.n_bins = n_bins or len(arr)
        if not self._targets:
            raise ConfigError("multiview prior needs at least one target")
        if any(k < 0 or k >= self.n_bins for k in self._targets):
            raise ConfigError("target bin index out of range")
        self.s = float(s)
        self.needs_low_res = needs_low_res
        self.fallback_count = 0

    @property
    def target_resolution(self):
        return next(iter(self._targets.values())).shape[:2]

    def bin_for(self, camera):
        az = np.arctan2(camera.position[1], camera.position[0]) % (2.0 * np.pi)
        return int(np.round(az / (2.0 * np.pi / self.n_bins))) % self.n_bins

    def target_for_bin(self, b):
        if b in self._targets:
            return self._targets[b]
        self.fallback_count += 1
        have = np.array(sorted(self._targets))
        dist = np.minimum((have - b) % self.n_bins, (b - have) % self.n_bins)
        near = int(have[np.argmin(dist)])
        log.warning("view bin %d has no target; falling back to bin %d", b, near)
        return self._targets[near]

    def target_for(self, camera):
        return self.target_for_bin(self.bin_for(camera))

    def select_view(self, camera):
        return GaussianOraclePrior(
            self.target_for(camera), s=self.s, schedule=self.schedule, needs_low_res=self.needs_low_res
        )

    def denoise(self, x_t, cond, t):
        raise RuntimeError("select_view(camera) first: the multiview prior is view-bound")

    def encoded(self, encoder):
        """Same bank with every target pushed through a latent encoder."""
        enc = {k: encoder.forward(v) for k, v in self._targets.items()}
        return MultiviewOraclePrior(
            enc, n_bins=self.n_bins, s=self.s, schedule=self.schedule, needs_low_res=self.needs_low_res
        )


def select_view(model, camera):
    """Bind a guidance model to one camera if it distinguishes views."""
    sel = getattr(model, "select_view", None)
    return sel(camera) if callable(sel) else model


@dataclass
class SDSConfig:
    t_min: float = 0.0
    t_max: float = 1.0
    weight: str = "uniform"  # or "sigma_sq"
    guidance_weight: float = 100.0
    omega_text: float = None
    omega_joint: float = None
    t_img: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.t_min < self.t_max <= 1.0:
            raise ConfigError(f"invalid t range [{self.t_min}, {self.t_max}]")
        if self.weight not in ("uniform", "sigma_sq"):
            raise ConfigError(f"unknown weight rule {self.weight!r}")
        if (self.omega_text is None) != (self.omega_joint is None):
            raise ConfigError("omega_text and omega_joint must be set together")
        if self.omega_text is not None:
            log.info(
                "extended guidance weights: text=%g joint=%g (image term active below t=%g)",
                self.omega_text,
                self.omega_joint,
                self.t_img,
            )

    @classmethod
    def coarse(cls, **kw):
        return cls(t_min=0.0, t_max=1.0, weight="uniform", **kw)

    @classmethod
    def fine(cls, t_max=0.5, **kw):
        return cls(t_min=0.02, t_max=t_max, weight="sigma_sq", **kw)

    def weight_at(self, t, schedule):
        if self.weight == "uniform":
            return 1.0
        return float(1.0 - schedule.alpha_bar(t))


def cfg_combine(model, x_t, cond, t, omega):
    """Classifier-free guidance: eps_null + omega * (eps_cond - eps_null)."""
    eps_null = model.denoise(x_t, ConditionSet.null(), t)
    if omega == 0.0:
        return eps_null
    eps_cond = model.denoise(x_t, cond, t)
    if omega == 1.0:
        return eps_cond
    return eps_null + omega * (eps_cond - eps_null)


def cfg_combine_extended(model, x_t, cond, t, omega_text, omega_joint, t_img=0.5):
    """Two-term guidance with a separately weighted joint (text+image) branch
    that only engages below ``t_img``; joint weight 0 reduces to cfg_combine."""
    if omega_joint != 0.0 and cond.image is None:
        raise ConfigError("joint guidance weight set but the condition has no image")
    eps_null = model.denoise(x_t, ConditionSet.null(), t)
    eps_text = model.denoise(x_t, cond.text_only(), t)
    out = eps_null + omega_text * (eps_text - eps_null)
    if omega_joint != 0.0 and t < t_img:
        eps_joint = model.denoise(x_t, cond, t)
        out = out + omega_joint * (eps_joint - eps_null)
    return out


def guided_denoise(model, x_t, cond, t, sds_cfg):
    if sds_cfg.omega_text is not None:
        return cfg_combine_extended(
            model, x_t, cond, t, sds_cfg.omega_text, sds_cfg.omega_joint, sds_cfg.t_img
        )
    return cfg_combine(model, x_t, cond, t, sds_cfg.guidance_weight)


class AveragePoolEncoder:
    """Exact area-average latent encoder with a constant Jacobian.

    Factor 8 maps a 512x512 render to the 64x64 latent grid; factor 1 is the
    identity, which makes the latent update equal the image-space update
    bit-for-bit when both draw the same noise.
    """

    def __init__(self, factor=8):
        if factor < 1:
            raise ConfigError("pool factor must be >= 1")
        self.factor = int(factor)

    @classmethod
    def for_resolution(cls, render_res, latent_res=64):
        if render_res % latent_res:
            raise ConfigError(f"render resolution {render_res} is not a multiple of latent {latent_res}")
        return cls(render_res // latent_res)

    def forward(self, x):
        f = self.factor
        if f == 1:
            return x
        h, w = x.shape[:2]
        if h % f or w % f:
            raise ConfigError(f"image {h}x{w} not divisible by pool factor {f}")
        return x.reshape(h // f, f, w // f, f, *x.shape[2:]).mean(axis=(1, 3))

    def backward(self, dz):
        f = self.factor
        if f == 1:
            return dz
        scale = 1.0 / (f * f)
        up = np.repeat(np.repeat(dz, f, axis=0), f, axis=1)
        return up * scale


def _check_resolution(model, shape):
    if model.resolution is not None and tuple(model.resolution) != tuple(shape[:2]):
        raise ConfigError(f"model expects {model.resolution}, render is {shape[:2]}")


def sds_gradient(render, model, cond, sds_cfg, rng, extra_alpha_grad=None):
    """One distillation step in image space; pushes gradients through the tape.

    Returns a stats dict ``{t, weight, residual_norm}``.
    """
    x = render.color.astype(np.float64)
    _check_resolution(model, x.shape)
    t = float(rng.uniform(sds_cfg.t_min, sds_cfg.t_max))
    eps = rng.standard_normal(x.shape)
    schedule = model.schedule
    x_t = schedule.forward_process(x, t, eps)
    eps_hat = guided_denoise(model, x_t, cond, t, sds_cfg)
    w = sds_cfg.weight_at(t, schedule)
    residual = eps_hat - eps
    render.backward((w * residual).astype(render.color.dtype), extra_alpha_grad)
    return {"t": t, "weight": w, "residual_norm": float(np.linalg.norm(residual))}


def sds_gradient_latent(render, encoder, model, cond, sds_cfg, rng, extra_alpha_grad=None):
    """Latent-space distillation: encode, diffuse, and chain dz/dx."""
    x = render.color.astype(np.float64)
    z = encoder.forward(x)
    _check_resolution(model, z.shape)
    t = float(rng.uniform(sds_cfg.t_min, sds_cfg.t_max))
    eps = rng.standard_normal(z.shape)
    schedule = model.schedule
    z_t = schedule.forward_process(z, t, eps)
    eps_hat = guided_denoise(model, z_t, cond, t, sds_cfg)
    w = sds_cfg.weight_at(t, schedule)
    residual = eps_hat - eps
    dx = encoder.backward(w * residual)
    render.backward(dx.astype(render.color.dtype), extra_alpha_grad)
    return {"t": t, "weight": w, "residual_norm": float(np.linalg.norm(residual))}
