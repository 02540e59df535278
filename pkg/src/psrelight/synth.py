"""Procedural ground-truth scenes.

Surfaces are defined analytically and normals come from the analytic
expression; the depth map is obtained by intersecting each pixel ray with the
same surface, so depth and normals agree up to floating point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .types import R_MIN, Camera, PointLight, SceneBundle


class Preset(enum.Enum):
    SPHERE = "sphere"
    BUMP_FIELD = "bump"
    TEXTURED_PLANE = "plane"


@dataclass(frozen=True)
class PresetSpec:
    preset: Preset = Preset.SPHERE
    resolution: int = 128
    seed: int = 0
    roughness_range: tuple[float, float] = (0.5, 0.5)
    albedo_mode: str = "constant"  # or "texture"
    center_depth: float = 1.0
    sphere_radius: float = 0.28
    bump_count: int = 7
    # drop silhouette pixels whose normal is within this cosine of grazing
    min_view_cos: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "preset", Preset(self.preset))
        lo, hi = self.roughness_range
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if not (R_MIN <= lo <= hi <= 1):
            raise ValueError(f"roughness range must satisfy {R_MIN} <= lo <= hi <= 1")
        if self.albedo_mode not in ("constant", "texture"):
            raise ValueError("albedo_mode must be 'constant' or 'texture'")
        if not self.center_depth > 0:
            raise ValueError("center_depth must be positive")


def _smooth_field(rng, xy, n_waves=4, freq=(4.0, 14.0)):
    """Sum of random plane waves, scaled to [0, 1]."""
    acc = np.zeros(xy.shape[:-1])
    for _ in range(n_waves):
        theta = rng.uniform(0, 2 * np.pi)
        f = rng.uniform(*freq)
        phase = rng.uniform(0, 2 * np.pi)
        k = f * np.array([np.cos(theta), np.sin(theta)])
        acc += np.sin(xy @ k + phase)
    return 0.5 + 0.5 * acc / n_waves


def _materials(spec: PresetSpec, rng, xy, mask):
    lo, hi = spec.roughness_range
    if lo == hi:
        rough = np.full(mask.shape, float(lo))
    else:
        rough = lo + (hi - lo) * _smooth_field(rng, xy)
    if spec.albedo_mode == "constant":
        albedo = np.broadcast_to(rng.uniform(0.3, 0.9, 3), mask.shape + (3,)).copy()
    else:
        albedo = np.stack([0.1 + 0.8 * _smooth_field(rng, xy) for _ in range(3)], axis=-1)
    albedo[~mask] = 0.0
    rough[~mask] = 0.0
    return albedo, rough


def _sphere(spec: PresetSpec, dirs):
    c = np.array([0.0, 0.0, -spec.center_depth])
    rho = spec.sphere_radius
    dc = dirs @ c
    disc = dc**2 - c @ c + rho**2
    hit = disc > 0
    t = np.where(hit, dc - np.sqrt(np.where(hit, disc, 0.0)), 0.0)
    P = dirs * t[..., None]
    n = np.where(hit[..., None], (P - c) / rho, 0.0)
    return t, n, hit


def _bumps(rng, spec: PresetSpec):
    k = spec.bump_count
    # bumps live in the visible part of the plane (about +-0.35 at 40 deg fov)
    centers = rng.uniform(-0.25, 0.25, (k, 2))
    widths = rng.uniform(0.05, 0.11, k)
    amps = rng.uniform(0.015, 0.045, k) * rng.choice([-1.0, 1.0], k)
    return centers, widths, amps


def _height(x, y, bumps):
    centers, widths, amps = bumps
    h = np.zeros_like(x)
    hx = np.zeros_like(x)
    hy = np.zeros_like(x)
    for (cx, cy), w, a in zip(centers, widths, amps):
        dx = x - cx
        dy = y - cy
        g = a * np.exp(-(dx * dx + dy * dy) / (2 * w * w))
        h += g
        hx -= g * dx / (w * w)
        hy -= g * dy / (w * w)
    return h, hx, hy


def _bump_field(spec: PresetSpec, dirs, bumps):
    c = spec.center_depth
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    t = c / -dz
    # Newton on t*dz + c - h(t*dx, t*dy) = 0; the slope term stays well below |dz|
    for _ in range(30):
        h, hx, hy = _height(t * dx, t * dy, bumps)
        f = t * dz + c - h
        df = dz - (hx * dx + hy * dy)
        t = t - f / df
    h, hx, hy = _height(t * dx, t * dy, bumps)
    n = np.stack([-hx, -hy, np.ones_like(hx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return t, n


def generate(spec: PresetSpec, camera: Camera | None = None) -> SceneBundle:
    """Build a ground-truth bundle for ``spec``; deterministic given ``spec.seed``."""
    camera = Camera.centered(spec.resolution) if camera is None else camera
    rng = np.random.Generator(np.random.Philox(spec.seed))
    dirs = camera.ray_directions()

    if spec.preset is Preset.SPHERE:
        depth, normal, mask = _sphere(spec, dirs)
    elif spec.preset is Preset.BUMP_FIELD:
        depth, normal = _bump_field(spec, dirs, _bumps(rng, spec))
        mask = np.ones(camera.shape, dtype=bool)
    else:
        depth = spec.center_depth / -dirs[..., 2]
        normal = np.broadcast_to([0.0, 0.0, 1.0], camera.shape + (3,)).copy()
        mask = np.ones(camera.shape, dtype=bool)

    mask &= np.einsum("...i,...i->...", normal, -dirs) >= spec.min_view_cos
    depth = np.where(mask, depth, 0.0)
    normal = np.where(mask[..., None], normal, 0.0)
    # texture coordinates: the ray's intersection with the z = -center plane
    xy = dirs[..., :2] * (spec.center_depth / -dirs[..., 2:3])
    albedo, rough = _materials(spec, rng, xy, mask)

    return SceneBundle(
        albedo=albedo,
        normal=normal,
        depth=depth,
        roughness=rough,
        mask=mask.astype(np.float64),
        camera=camera,
        lights=(PointLight([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),),
    )


def perturb_images(images, sigma_fraction: float, seed: int) -> list[np.ndarray]:
    """Add zero-mean Gaussian noise with sigma = ``sigma_fraction`` * global max; clamp at 0."""
    if sigma_fraction < 0:
        raise ValueError("sigma_fraction must be nonnegative")
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if sigma_fraction == 0:
        return [im.copy() for im in images]
    sigma = sigma_fraction * max(float(im.max()) for im in images)
    rng = np.random.Generator(np.random.Philox(seed))
    return [np.maximum(im + rng.normal(0.0, sigma, im.shape), 0.0) for im in images]
