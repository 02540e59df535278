"""Microfacet rendering, relighting and calibrated near-field photometric stereo."""

from .brdf import (
    BrdfParams,
    FresnelVariant,
    ShadingGeometry,
    eval_brdf,
    eval_brdf_jacobian,
    fresnel,
    geometry_term,
    microfacet_distribution,
)
from .inverse import SolveConfig, SolveResult, lambertian_init, refine_lm, solve
from .metrics import (
    LossWeights,
    masked_mse,
    mean_angular_error,
    roughness_gradient_loss,
    ssim,
    total_loss,
)
from .render import (
    Falloff,
    RenderConfig,
    compose_global,
    decompose_global,
    hemisphere_lights,
    relight_stack,
    render_direct,
    sample_frontal_hemisphere,
    shade_sh,
)
from .synth import Preset, PresetSpec, generate, perturb_images
from .types import (
    R_MIN,
    Camera,
    EnvLight,
    PointLight,
    SceneBundle,
    SceneGeometry,
    project,
    unproject,
    validate_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "BrdfParams",
    "Camera",
    "EnvLight",
    "Falloff",
    "FresnelVariant",
    "LossWeights",
    "PointLight",
    "Preset",
    "PresetSpec",
    "R_MIN",
    "RenderConfig",
    "SceneBundle",
    "SceneGeometry",
    "ShadingGeometry",
    "SolveConfig",
    "SolveResult",
    "compose_global",
    "decompose_global",
    "eval_brdf",
    "eval_brdf_jacobian",
    "fresnel",
    "generate",
    "geometry_term",
    "hemisphere_lights",
    "lambertian_init",
    "masked_mse",
    "mean_angular_error",
    "microfacet_distribution",
    "perturb_images",
    "project",
    "refine_lm",
    "relight_stack",
    "render_direct",
    "roughness_gradient_loss",
    "sample_frontal_hemisphere",
    "shade_sh",
    "solve",
    "ssim",
    "total_loss",
    "unproject",
    "validate_bundle",
]
