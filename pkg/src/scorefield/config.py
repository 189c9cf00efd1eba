"""Run configuration: one flat, JSON-serializable record of every knob.

``paper()`` is the full-scale preset; ``desk()`` fits an interactive session
on a workstation; ``tiny()`` is for fast tests.  Camera and light sampling
ranges are fixed contracts of the cameras module and deliberately not
configurable here.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .errors import ConfigError


@dataclass
class RunConfig:
    seed: int = 0

    # neural field
    levels: int = 16
    table_size: int = 2**19
    feature_dim: int = 4
    base_resolution: int = 16
    max_resolution: int = 4096
    hidden: int = 32
    env_hidden: int = 16

    # occupancy
    occupancy_resolution: int = 256
    occupancy_interval: int = 10
    max_samples: int = 1024

    # optimization
    adam_lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-15
    opacity_weight: float = 1e-3
    smoothness_weight: float = 1e-2

    # stage (a): neural field distilled in image space
    coarse_iters: int = 5000
    coarse_res: int = 64
    coarse_batch: int = 32

    # stage (b): surface refinement distilled in latent space
    fine_iters: int = 3000
    fine_res: int = 512
    fine_batch: int = 32
    latent_res: int = 64
    tet_resolution: int = 96
    mesh_density_level: float = 1.0

    # editing: continue the field at mid resolution with pooled latents
    edit_iters: int = 1500
    edit_res: int = 128
    edit_latent_res: int = 64

    # guidance
    guidance_weight: float = 100.0
    omega_text: float = None
    omega_joint: float = None
    t_img: float = 0.5
    fine_t_max: float = 0.5

    # bookkeeping
    log_every: int = 10
    checkpoint_every: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        ints = (
            "seed levels table_size feature_dim base_resolution max_resolution hidden "
            "env_hidden occupancy_resolution occupancy_interval max_samples coarse_iters "
            "coarse_res coarse_batch fine_iters fine_res fine_batch latent_res "
            "tet_resolution edit_iters edit_res edit_latent_res log_every checkpoint_every"
        ).split()
        for name in ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            if name != "seed" and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.base_resolution > self.max_resolution:
            raise ConfigError("base_resolution exceeds max_resolution")
        if self.occupancy_resolution & (self.occupancy_resolution - 1):
            raise ConfigError("occupancy_resolution must be a power of two")
        if self.fine_res % self.latent_res:
            raise ConfigError("fine_res must be a multiple of latent_res")
        if self.edit_res % self.edit_latent_res:
            raise ConfigError("edit_res must be a multiple of edit_latent_res")
        if not 0.0 < self.fine_t_max <= 1.0:
            raise ConfigError("fine_t_max must lie in (0, 1]")
        for name in ("adam_lr", "opacity_weight", "smoothness_weight", "guidance_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        return self

    @classmethod
    def paper(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides):
        base = dict(
            levels=8,
            table_size=2**15,
            base_resolution=16,
            max_resolution=512,
            occupancy_resolution=128,
            max_samples=128,
            coarse_iters=1200,
            fine_iters=600,
            fine_res=256,
            latent_res=64,
            tet_resolution=48,
            edit_iters=600,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def rig8(cls, **overrides):
        """Budget for the fixed eight-camera reconstruction runs.

        Sized so a full coarse pass stays inside a desktop-CPU wall-clock
        budget while leaving enough capacity to fit the reference scene.
        """
        base = dict(
            levels=8,
            table_size=2**15,
            base_resolution=16,
            max_resolution=256,
            occupancy_resolution=64,
            max_samples=64,
            coarse_iters=500,
            coarse_res=64,
            coarse_batch=4,
            fine_iters=300,
            fine_res=256,
            latent_res=64,
            fine_batch=4,
            tet_resolution=48,
            edit_iters=150,
            edit_res=128,
            edit_latent_res=64,
            checkpoint_every=250,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def tiny(cls, **overrides):
        base = dict(
            levels=4,
            table_size=2**12,
            feature_dim=2,
            base_resolution=4,
            max_resolution=32,
            hidden=16,
            occupancy_resolution=16,
            max_samples=64,
            coarse_iters=20,
            coarse_res=24,
            coarse_batch=2,
            fine_iters=10,
            fine_res=48,
            latent_res=24,
            fine_batch=2,
            tet_resolution=12,
            edit_iters=10,
            edit_res=48,
            edit_latent_res=24,
            checkpoint_every=10,
        )
        base.update(overrides)
        return cls(**base)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def config_hash(self):
        canon = json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)
