"""Render a glossy sphere under a few lights and look at what the BRDF does.

Run: python3 demos/01_render_and_relight.py
"""
# %%
import numpy as np

from psrelight import (
    EnvLight,
    FresnelVariant,
    PointLight,
    Preset,
    PresetSpec,
    RenderConfig,
    compose_global,
    decompose_global,
    generate,
    hemisphere_lights,
    relight_stack,
    render_direct,
)

# a 96x96 sphere, 0.28 units in radius, centred one unit in front of the camera
scene = generate(PresetSpec(Preset.SPHERE, resolution=96, seed=1, roughness_range=(0.25, 0.25)))
print("pixels on the object:", int(scene.mask.sum()))

# %% co-located light: the highlight sits where the surface faces the camera
img = render_direct(scene, PointLight([0, 0, 0]))
v, u = np.unravel_index(img[..., 0].argmax(), img.shape[:2])
print("brightest pixel", (u, v), "principal point", (scene.camera.cx, scene.camera.cy))

# %% the specular lobe narrows as roughness drops. The default Fresnel term has no
# base reflectance, so head-on highlights are faint; the base variant is brighter
base = RenderConfig(fresnel_variant=FresnelVariant.WITH_BASE_REFLECTANCE)
for r in (0.2, 0.5, 0.9):
    s = scene.replace(roughness=np.where(scene.mask > 0, r, 0.0))
    peak = render_direct(s, PointLight([0, 0, 0])).max()
    peak_base = render_direct(s, PointLight([0, 0, 0]), base).max()
    print(f"roughness {r}: peak radiance {peak:.3f} (with base reflectance {peak_base:.3f})")

# %% switching the specular term off gives a Lambertian sphere
flat = render_direct(scene, PointLight([0, 0, 0]), RenderConfig.lambertian())
print("Lambertian peak", flat.max().round(4), "vs glossy", img.max().round(4))

# %% a soft sky from nine SH coefficients per channel, added to the point light
sky = np.zeros((3, 9))
sky[:, 0] = 0.6          # ambient
sky[:, 2] = [0.1, 0.2, 0.4]  # linear in n_z: brighter where the surface faces the camera, bluish
both = render_direct(scene, [PointLight([0.3, -0.3, 0.2]), EnvLight(sky)])
print("mean radiance with sky:", both[scene.mask > 0].mean(0).round(4))

# %% indirect light is data: split a 'measured' image into direct + residual and back
measured = both * 1.05 + 0.01 * scene.mask[..., None]
residual = decompose_global(measured, both)
assert np.array_equal(compose_global(both, residual, clamp_negative=False), measured)
print("residual range:", residual.min().round(4), residual.max().round(4))

# %% a relighting stack from lights spread over the front hemisphere
lights = hemisphere_lights(8, radius=2.0, seed=4)
stack = relight_stack(scene, lights)
for lt, im in zip(lights, stack):
    print(np.round(lt.position, 2), "mean", im[scene.mask > 0].mean().round(4))
