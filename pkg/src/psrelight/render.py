"""Direct-illumination rendering, SH environment shading and relighting.

A point light contributes, per masked pixel,

    intensity / d^2 * f_brdf(n, l, v) * max(n.l, 0)

where ``d`` is the point-to-light distance (or the depth map value under
``Falloff.DEPTH_MAP``). Environment lights contribute diffuse SH irradiance
``A / pi * E(n)``. Several lights passed together are summed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .brdf import F0_DEFAULT, FresnelVariant, half_angle_cos, specular_lobe
from .types import EnvLight, Light, PointLight, SceneBundle, surface_points

MIN_LIGHT_DISTANCE = 1e-6

SCENE_CENTER = np.array([0.0, 0.0, -1.0])


class Falloff(enum.Enum):
    DISTANCE = "distance"
    DEPTH_MAP = "depth"


@dataclass(frozen=True)
class RenderConfig:
    cosine_term: bool = True
    falloff: Falloff = Falloff.DISTANCE
    clamp_negative: bool = True
    fresnel_f0: float = F0_DEFAULT
    fresnel_variant: FresnelVariant = FresnelVariant.WITHOUT_BASE_REFLECTANCE
    nh_exponent: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "falloff", Falloff(self.falloff))
        object.__setattr__(self, "fresnel_variant", FresnelVariant(self.fresnel_variant))

    @classmethod
    def lambertian(cls, **kw) -> "RenderConfig":
        """Config whose specular lobe is exactly zero (f0 = 1 with no base reflectance term)."""
        return cls(fresnel_f0=1.0, fresnel_variant=FresnelVariant.WITHOUT_BASE_REFLECTANCE, **kw)


@dataclass
class RenderStats:
    """Diagnostics accumulated by :func:`render_direct` when passed in."""

    coincident_pixels: int = 0


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


class PointShading(NamedTuple):
    value: np.ndarray  # (..., 3)
    d_albedo: np.ndarray | None  # (...,)  same for each channel: d value_c / d albedo_c
    d_roughness: np.ndarray | None  # (...,)  achromatic, multiply by irradiance_c
    d_normal: np.ndarray | None  # (..., 3) achromatic part, see point_shading


def point_shading(n, albedo, roughness, l, v, irradiance, config: RenderConfig, grad=False):
    """Radiance from one point light at many surface points.

    ``irradiance`` is the per-channel ``intensity / d^2``. With ``grad`` the
    partials are returned in factored form, since the specular lobe is
    achromatic::

        d value_c / d albedo_c = irradiance_c * d_albedo
        d value_c / d R        = irradiance_c * d_roughness
        d value_c / d n        = irradiance_c * (albedo_c / pi * cos' + d_normal)

    where ``cos'`` is ``l`` for lit points when the cosine term is on and zero
    otherwise.
    """
    nl = _dot(n, l)
    nv = _dot(n, v)
    lit = (nl > 0) & (nv > 0)
    h = l + v
    h = h / np.linalg.norm(h, axis=-1, keepdims=True)
    spec = specular_lobe(
        _dot(n, h), half_angle_cos(l, v, h), nl, nv, roughness,
        config.fresnel_f0, config.nh_exponent, config.fresnel_variant, grad,
    )
    S = spec.value if grad else spec
    cos = np.where(lit, nl, 0.0) if config.cosine_term else lit.astype(np.float64)
    diffuse = albedo / np.pi
    value = irradiance * (diffuse + S[..., None]) * cos[..., None]
    if not grad:
        return PointShading(value, None, None, None)
    dn_spec = spec.d_nh[..., None] * h + spec.d_nl[..., None] * l + spec.d_nv[..., None] * v
    d_normal = cos[..., None] * dn_spec
    if config.cosine_term:
        d_normal = d_normal + np.where(lit, S, 0.0)[..., None] * l
    return PointShading(value, cos / np.pi, cos * spec.d_roughness, d_normal)


# real SH normalization constants for bands 0..2
_Y0 = 0.5 / np.sqrt(np.pi)
_Y1 = np.sqrt(3.0 / (4.0 * np.pi))
_Y2 = 0.5 * np.sqrt(15.0 / np.pi)
_Y20 = 0.25 * np.sqrt(5.0 / np.pi)


def shade_sh(normal, coefficients, clamp_negative: bool = True) -> np.ndarray:
    """Diffuse irradiance from 9 SH coefficients per channel.

    ``coefficients`` has shape ``(3, 9)`` (or 27 values, channel-major).
    Returns shape ``normal.shape[:-1] + (3,)``.
    """
    n = np.asarray(normal, dtype=np.float64)
    c = np.asarray(coefficients, dtype=np.float64).reshape(3, 9)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    basis = np.stack(
        [
            np.full_like(x, _Y0),
            _Y1 * y,
            _Y1 * z,
            _Y1 * x,
            _Y2 * x * y,
            _Y2 * y * z,
            _Y20 * (3.0 * z * z - 1.0),
            _Y2 * x * z,
            0.5 * _Y2 * (x * x - y * y),
        ],
        axis=-1,
    )
    band_weight = np.array([np.pi] + [2.0 * np.pi / 3.0] * 3 + [np.pi / 4.0] * 5)
    E = (basis * band_weight) @ c.T
    return np.maximum(E, 0.0) if clamp_negative else E


def _render_point(bundle, light: PointLight, config, P, m, stats):
    to_light = light.position - P
    d = np.linalg.norm(to_light, axis=-1)
    close = d < MIN_LIGHT_DISTANCE
    if close.any():
        if stats is not None:
            stats.coincident_pixels += int(close.sum())
        d = np.maximum(d, MIN_LIGHT_DISTANCE)
        # direction is undefined at the light itself; fall back to the view ray
        to_light = np.where(close[:, None], -P, to_light)
        d_dir = np.linalg.norm(to_light, axis=-1)
    else:
        d_dir = d
    l = to_light / d_dir[:, None]
    v = -P / np.linalg.norm(P, axis=-1, keepdims=True)
    if config.falloff is Falloff.DEPTH_MAP:
        dist2 = bundle.depth[m] ** 2
    else:
        dist2 = d * d
    irr = light.intensity / dist2[:, None]
    return point_shading(
        bundle.normal[m], bundle.albedo[m], bundle.roughness[m], l, v, irr, config
    ).value


def render_direct(
    bundle: SceneBundle,
    light: Light | Sequence[Light],
    config: RenderConfig = RenderConfig(),
    stats: RenderStats | None = None,
) -> np.ndarray:
    """Render the direct component under one light or the sum of several."""
    lights = [light] if isinstance(light, (PointLight, EnvLight)) else list(light)
    out = np.zeros(bundle.shape + (3,))
    m = bundle.mask == 1
    if not m.any():
        return out
    P = surface_points(bundle.camera, np.where(m, bundle.depth, 1.0))[m]
    acc = np.zeros((int(m.sum()), 3))
    for lt in lights:
        if isinstance(lt, PointLight):
            acc += _render_point(bundle, lt, config, P, m, stats)
        elif isinstance(lt, EnvLight):
            E = shade_sh(bundle.normal[m], lt.coefficients, config.clamp_negative)
            acc += bundle.albedo[m] / np.pi * E
        else:
            raise TypeError(f"not a light: {lt!r}")
    out[m] = acc
    return out


def compose_global(direct, residual, clamp_negative: bool = True) -> np.ndarray:
    direct = np.asarray(direct)
    residual = np.asarray(residual)
    if direct.shape != residual.shape:
        raise ValueError(f"shape mismatch: direct {direct.shape} vs residual {residual.shape}")
    full = direct + residual
    return np.maximum(full, 0.0) if clamp_negative else full


def decompose_global(full, direct) -> np.ndarray:
    """Residual (indirect) image such that ``compose_global(direct, r) == full``."""
    full = np.asarray(full)
    direct = np.asarray(direct)
    if full.shape != direct.shape:
        raise ValueError(f"shape mismatch: full {full.shape} vs direct {direct.shape}")
    return full - direct


def relight_stack(
    bundle: SceneBundle, lights: Iterable[Light], config: RenderConfig = RenderConfig()
) -> list[np.ndarray]:
    lights = list(lights)
    if not lights:
        raise ValueError("relight_stack needs at least one light")
    return [render_direct(bundle, lt, config) for lt in lights]


def sample_frontal_hemisphere(count: int, radius: float, seed: int, center=SCENE_CENTER) -> list[np.ndarray]:
    """Area-uniform light positions on the camera-side hemisphere around ``center``.

    Uses the counter-based Philox generator, so a seed fixes the sequence on
    every platform.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random((count, 2))
    z = u[:, 0]
    phi = 2.0 * np.pi * u[:, 1]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    w = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    pos = np.asarray(center, dtype=np.float64) + radius * w
    return list(pos)


def hemisphere_lights(count: int, radius: float, seed: int, intensity=1.0) -> list[PointLight]:
    """Point lights at :func:`sample_frontal_hemisphere` positions."""
    return [PointLight(p, intensity) for p in sample_frontal_hemisphere(count, radius, seed)]
