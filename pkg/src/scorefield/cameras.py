"""Cameras, per-view augmentations, and Lambertian shading draws.

Conventions: world is z-up, cameras orbit the origin.  ``focal`` is relative
to a unit half-width sensor, so the horizontal field of view is
``2*atan(1/focal)``.  Pixel (0, 0) is the top-left corner; +x is right and
+y is up in camera space.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)

OBJECT_CORE_RADIUS = 1.0

DIST_RANGE = (1.5, 2.0)
FOCAL_COARSE = (0.7, 1.35)
FOCAL_FINE = (1.2, 1.8)
ELEV_RANGE_DEG = (-15.0, 60.0)
LIGHT_ANGLE_MAX = np.pi / 3
LIGHT_RADIUS = (0.8, 1.5)


@dataclass
class Camera:
    position: np.ndarray
    target: np.ndarray
    up: np.ndarray
    focal: float
    width: int
    height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.focal <= 0:
            raise ValueError("focal must be positive")
        if np.linalg.norm(self.position) < OBJECT_CORE_RADIUS:
            log.warning("camera inside the object-core sphere (radius %.1f)", OBJECT_CORE_RADIUS)

    def basis(self):
        fwd = self.target - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        nr = np.linalg.norm(right)
        if nr < 1e-9:
            raise ValueError("camera forward is parallel to up")
        right /= nr
        upv = np.cross(right, fwd)
        return right, upv, fwd

    def rays(self):
        """Per-pixel origins and unit directions, row-major, top row first."""
        right, upv, fwd = self.basis()
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0)
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height)
        gx, gy = np.meshgrid(xs, ys)
        d = (
            fwd[None, None, :] * self.focal
            + right[None, None, :] * gx[..., None]
            + upv[None, None, :] * gy[..., None]
        )
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(self.position, d.shape)
        return o.reshape(-1, 3), d.reshape(-1, 3)

    def project(self, pts):
        """World points -> (pixel x, pixel y, camera depth)."""
        right, upv, fwd = self.basis()
        rel = np.asarray(pts, dtype=np.float64) - self.position
        x = rel @ right
        y = rel @ upv
        z = rel @ fwd
        zsafe = np.where(np.abs(z) < 1e-12, 1e-12, z)
        sx = self.focal * x / zsafe
        sy = self.focal * y / zsafe
        px = (sx + 1.0) * 0.5 * self.width - 0.5
        py = (1.0 - sy) * 0.5 * self.height - 0.5
        return px, py, z

    def resized(self, width, height):
        return replace(self, width=width, height=height)


@dataclass
class ShadingSample:
    light_position: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 1.0]))
    ambient: float = 1.0
    diffuse: float = 0.0
    texture_mix: float = 0.0  # u: 0 = albedo only, 1 = fully shaded
    whiteness_mix: float = 0.0  # v: 0 = true albedo, 1 = white (textureless)

    def __post_init__(self):
        self.light_position = np.asarray(self.light_position, dtype=np.float64)
        for nm in ("ambient", "diffuse", "texture_mix", "whiteness_mix"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must lie in [0, 1], got {v}")

    @property
    def needs_normals(self):
        return self.texture_mix > 0.0 and self.diffuse > 0.0


def orbit_camera(azimuth, elevation, distance, focal, width, height):
    """Camera on the orbit sphere looking at the origin (angles in radians)."""
    pos = distance * np.array(
        [np.cos(elevation) * np.cos(azimuth), np.cos(elevation) * np.sin(azimuth), np.sin(elevation)]
    )
    return Camera(pos, np.zeros(3), np.array([0.0, 0.0, 1.0]), focal, width, height)


def sample_camera(rng, stage="coarse", width=64, height=64):
    """Draw one training view from the augmentation distribution."""
    dist = rng.uniform(*DIST_RANGE)
    focal = rng.uniform(*(FOCAL_COARSE if stage == "coarse" else FOCAL_FINE))
    azim = rng.uniform(0.0, 2.0 * np.pi)
    elev = np.deg2rad(rng.uniform(*ELEV_RANGE_DEG))
    return orbit_camera(azim, elev, dist, focal, width, height)


def sample_light(rng, camera):
    """Point light within pi/3 of the camera direction, radius U(0.8, 1.5)."""
    cam_dir = camera.position / np.linalg.norm(camera.position)
    psi = rng.uniform(0.0, LIGHT_ANGLE_MAX)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    # any unit vector orthogonal to cam_dir
    seed = np.array([1.0, 0.0, 0.0]) if abs(cam_dir[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(cam_dir, seed)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(cam_dir, t1)
    d = np.cos(psi) * cam_dir + np.sin(psi) * (np.cos(phi) * t1 + np.sin(phi) * t2)
    radius = rng.uniform(*LIGHT_RADIUS)
    return radius * d


def sample_shading(rng, camera):
    """Soft textureless / albedo-only augmentation draw."""
    ambient = rng.uniform(0.1, 0.5)
    return ShadingSample(
        light_position=sample_light(rng, camera),
        ambient=ambient,
        diffuse=1.0 - ambient,
        texture_mix=rng.uniform(0.0, 1.0),
        whiteness_mix=rng.uniform(0.0, 1.0),
    )
