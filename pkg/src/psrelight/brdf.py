"""Microfacet BRDF: diffuse ``A / pi`` plus an achromatic specular lobe.

    f = A / pi + D(n.h, R) F(v.h) G(n.l, n.v, R) / (4 (n.l) (n.v))

with distribution ``D = a^2 / (pi [(n.h)^s (a^2 - 1) + 1]^2)``, ``a = R^2``;
the base-2 exponential Fresnel approximation; and the Smith-Schlick geometry
term with ``k = (R + 1)^2 / 8``.

All functions broadcast over leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .types import R_MIN

EPS_DOT = 1e-4
F0_DEFAULT = 0.05

_FRESNEL_A = 5.55473
_FRESNEL_B = 6.8316


class FresnelVariant(enum.Enum):
    # (1 - f0) * 2^(...), no additive base term; f0 = 1 switches the lobe off
    WITHOUT_BASE_REFLECTANCE = "nobase"
    # f0 + (1 - f0) * 2^(...), the usual Schlick-style form
    WITH_BASE_REFLECTANCE = "base"


def microfacet_distribution(n_dot_h, roughness, s=2.0):
    x = np.clip(n_dot_h, 0.0, 1.0)
    a2 = np.asarray(roughness, dtype=np.float64) ** 4
    bracket = x**s * (a2 - 1.0) + 1.0
    return a2 / (np.pi * bracket * bracket)


def fresnel(v_dot_h, f0=F0_DEFAULT, variant=FresnelVariant.WITHOUT_BASE_REFLECTANCE):
    x = np.clip(v_dot_h, 0.0, 1.0)
    decay = np.exp2(-(_FRESNEL_A * x + _FRESNEL_B) * x)
    if FresnelVariant(variant) is FresnelVariant.WITHOUT_BASE_REFLECTANCE:
        return (1.0 - f0) * decay
    return f0 + (1.0 - f0) * decay


def _g1(x, k):
    return x / (x * (1.0 - k) + k)


def geometry_term(n_dot_l, n_dot_v, roughness):
    k = (np.asarray(roughness, dtype=np.float64) + 1.0) ** 2 / 8.0
    nl = np.clip(n_dot_l, EPS_DOT, 1.0)
    nv = np.clip(n_dot_v, EPS_DOT, 1.0)
    return _g1(nv, k) * _g1(nl, k)


@dataclass(frozen=True)
class BrdfParams:
    """Material at one or many surface points.

    ``albedo`` has a trailing RGB axis; ``roughness`` matches the leading axes.
    """

    albedo: np.ndarray
    roughness: np.ndarray
    fresnel_f0: float = F0_DEFAULT
    nh_exponent: float = 2.0
    fresnel_variant: FresnelVariant = FresnelVariant.WITHOUT_BASE_REFLECTANCE

    def __post_init__(self):
        alb = np.asarray(self.albedo, dtype=np.float64)
        r = np.asarray(self.roughness, dtype=np.float64)
        if alb.shape[-1:] != (3,):
            raise ValueError("albedo needs a trailing RGB axis")
        if np.any((alb < 0) | (alb > 1)):
            raise ValueError("albedo must lie in [0, 1]")
        if np.any((r < R_MIN) | (r > 1)):
            raise ValueError(f"roughness must lie in [{R_MIN}, 1]")
        if not 0 <= self.fresnel_f0 <= 1:
            raise ValueError("fresnel_f0 must lie in [0, 1]")
        if not self.nh_exponent >= 1:
            raise ValueError("nh_exponent must be >= 1")
        object.__setattr__(self, "albedo", alb)
        object.__setattr__(self, "roughness", r)
        object.__setattr__(self, "fresnel_variant", FresnelVariant(self.fresnel_variant))


@dataclass(frozen=True)
class ShadingGeometry:
    n: np.ndarray
    l: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("n", "l", "v"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape[-1:] != (3,):
                raise ValueError(f"{name} must have a trailing axis of length 3")
            if np.any(np.abs(np.linalg.norm(a, axis=-1) - 1.0) > 1e-6):
                raise ValueError(f"{name} must be unit length")
            object.__setattr__(self, name, a)
        if np.any(np.linalg.norm(self.l + self.v, axis=-1) == 0):
            raise ValueError("half vector undefined for l = -v")

    @property
    def h(self) -> np.ndarray:
        return _normalize(self.l + self.v)


def _normalize(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def half_angle_cos(l, v, h):
    # v.h and l.h agree analytically; averaging keeps l <-> v swaps bit-exact
    return 0.5 * (_dot(v, h) + _dot(l, h))


class SpecularTerms(NamedTuple):
    value: np.ndarray
    d_roughness: np.ndarray
    d_nh: np.ndarray
    d_nl: np.ndarray
    d_nv: np.ndarray


def specular_lobe(nh, vh, nl, nv, roughness, f0=F0_DEFAULT, s=2.0,
                  variant=FresnelVariant.WITHOUT_BASE_REFLECTANCE, grad=False):
    """Specular term from the four dot products, optionally with its partials.

    Partials are with respect to the raw (unclamped) dot products and vanish
    wherever a clamp is active.
    """
    R = np.asarray(roughness, dtype=np.float64)
    nh = np.asarray(nh, dtype=np.float64)
    nl = np.asarray(nl, dtype=np.float64)
    nv = np.asarray(nv, dtype=np.float64)

    x = np.clip(nh, 0.0, 1.0)
    a2 = R**4
    xs = x**s
    bracket = xs * (a2 - 1.0) + 1.0
    D = a2 / (np.pi * bracket**2)
    F = fresnel(vh, f0, variant)

    k = (R + 1.0) ** 2 / 8.0
    nlc = np.clip(nl, EPS_DOT, 1.0)
    nvc = np.clip(nv, EPS_DOT, 1.0)
    den_l = nlc * (1.0 - k) + k
    den_v = nvc * (1.0 - k) + k
    gl = nlc / den_l
    gv = nvc / den_v
    G = gl * gv
    inv4 = 1.0 / (4.0 * (nlc * nvc))
    S = D * F * G * inv4
    if not grad:
        return S

    dD_da2 = (bracket - 2.0 * a2 * xs) / (np.pi * bracket**3)
    dD_dR = dD_da2 * 4.0 * R**3
    dk_dR = (R + 1.0) / 4.0
    dgl_dk = -nlc * (1.0 - nlc) / den_l**2
    dgv_dk = -nvc * (1.0 - nvc) / den_v**2
    dG_dR = (dgl_dk * gv + gl * dgv_dk) * dk_dR
    dS_dR = F * inv4 * (dD_dR * G + D * dG_dR)

    with np.errstate(divide="ignore", invalid="ignore"):
        dxs = np.where(x > 0, s * x ** (s - 1.0), 0.0 if s > 1 else 1.0)
    dD_dx = -2.0 * a2 * dxs * (a2 - 1.0) / (np.pi * bracket**3)
    dS_dnh = np.where((nh >= 0) & (nh <= 1), dD_dx * F * G * inv4, 0.0)

    # S = D F gv * [nl / den_l] / (4 nl nv) = D F gv / (4 nv den_l)
    dS_dnl = np.where((nl > EPS_DOT) & (nl < 1), -S * (1.0 - k) / den_l, 0.0)
    dS_dnv = np.where((nv > EPS_DOT) & (nv < 1), -S * (1.0 - k) / den_v, 0.0)
    return SpecularTerms(S, dS_dR, dS_dnh, dS_dnl, dS_dnv)


def _terms(params: BrdfParams, geom: ShadingGeometry, grad: bool):
    n, l, v = geom.n, geom.l, geom.v
    nl = _dot(n, l)
    nv = _dot(n, v)
    if np.any(nl <= 0) or np.any(nv <= 0):
        raise ValueError("BRDF is only defined for n.l > 0 and n.v > 0")
    h = geom.h
    out = specular_lobe(
        _dot(n, h), half_angle_cos(l, v, h), nl, nv, params.roughness,
        params.fresnel_f0, params.nh_exponent, params.fresnel_variant, grad,
    )
    return out, h


def eval_brdf(params: BrdfParams, geom: ShadingGeometry) -> np.ndarray:
    """BRDF value per RGB channel, shape ``(..., 3)``."""
    spec, _ = _terms(params, geom, grad=False)
    return params.albedo / np.pi + spec[..., None]


class BrdfJacobian(NamedTuple):
    value: np.ndarray  # (..., 3)
    albedo: np.ndarray  # (..., 3, 3)  d channel / d albedo
    roughness: np.ndarray  # (..., 3)
    normal: np.ndarray  # (..., 3, 3)  d channel / d n (embedded, no renormalisation)


def eval_brdf_jacobian(params: BrdfParams, geom: ShadingGeometry) -> BrdfJacobian:
    t, h = _terms(params, geom, grad=True)
    value = params.albedo / np.pi + t.value[..., None]
    lead = value.shape[:-1]
    d_alb = np.broadcast_to(np.eye(3) / np.pi, lead + (3, 3)).copy()
    d_r = np.broadcast_to(t.d_roughness[..., None], lead + (3,)).copy()
    dn = t.d_nh[..., None] * h + t.d_nl[..., None] * geom.l + t.d_nv[..., None] * geom.v
    d_n = np.broadcast_to(dn[..., None, :], lead + (3, 3)).copy()
    return BrdfJacobian(value, d_alb, d_r, d_n)
