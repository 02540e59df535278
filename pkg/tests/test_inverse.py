import numpy as np
import pytest

from psrelight import (
    PointLight,
    Preset,
    PresetSpec,
    RenderConfig,
    SolveConfig,
    generate,
    hemisphere_lights,
    lambertian_init,
    mean_angular_error,
    perturb_images,
    refine_lm,
    relight_stack,
    solve,
)
from psrelight.inverse import FLAG_DEGENERATE, FLAG_NONFINITE

LAMB = RenderConfig.lambertian()
NEAR_LIGHTS = [PointLight(p) for p in ([0.05, 0, 0], [-0.05, 0, 0], [0, 0.05, 0], [0, -0.05, 0])]


def _stack(bundle, lights, cfg=RenderConfig()):
    return relight_stack(bundle, lights, cfg)


@pytest.fixture(scope="module")
def glossy():
    b = generate(PresetSpec(Preset.SPHERE, resolution=40, seed=3, roughness_range=(0.4, 0.4)))
    lights = hemisphere_lights(12, 2.0, 3)
    return b, lights, _stack(b, lights)


def test_lambertian_plane_four_lights():
    b = generate(PresetSpec(Preset.TEXTURED_PLANE, resolution=48, seed=1, albedo_mode="texture"))
    init = lambertian_init(_stack(b, NEAR_LIGHTS, LAMB), NEAR_LIGHTS, b.geometry, LAMB)
    assert not init.degenerate[b.mask == 1].any()
    assert mean_angular_error(init.normal, b.normal, b.mask) <= 0.01
    m = b.mask == 1
    assert np.abs(init.albedo[m] - b.albedo[m]).max() < 1e-9


def test_too_few_images(glossy):
    b, lights, imgs = glossy
    with pytest.raises(ValueError, match="at least 3"):
        solve(imgs[:1], lights[:1], b.geometry)
    with pytest.raises(ValueError):
        lambertian_init(imgs[:2], lights[:2], b.geometry)


def test_mismatched_lists(glossy):
    b, lights, imgs = glossy
    with pytest.raises(ValueError):
        solve(imgs[:4], lights[:5], b.geometry)


def test_zero_pixel_is_degenerate(glossy):
    b, lights, imgs = glossy
    c = b.camera
    u, v = int(c.cx), int(c.cy)
    zeroed = [im.copy() for im in imgs]
    for im in zeroed:
        im[v, u] = 0.0
    init = lambertian_init(zeroed, lights, b.geometry)
    assert init.degenerate[v, u]
    assert np.allclose(init.normal[v, u], [0, 0, 1]) and not init.albedo[v, u].any()
    res = solve(zeroed, lights, b.geometry)
    assert res.flags[v, u] & FLAG_DEGENERATE


def test_duplicate_lights_are_degenerate():
    b = generate(PresetSpec(Preset.TEXTURED_PLANE, resolution=16))
    lights = [PointLight([0.1, 0.1, 0.0])] * 4
    init = lambertian_init(_stack(b, lights, LAMB), lights, b.geometry, LAMB)
    assert init.degenerate[b.mask == 1].all()


def _check_ranges(res, mask):
    m = mask == 1
    assert np.all(np.abs(np.linalg.norm(res.normal[m], axis=-1) - 1) <= 1e-6)
    assert res.albedo.min() >= 0 and res.albedo.max() <= 1
    assert res.roughness[m].min() >= 0.01 and res.roughness[m].max() <= 1
    assert np.all(res.residual >= 0)


def test_glossy_roundtrip_small(glossy):
    b, lights, imgs = glossy
    res = solve(imgs, lights, b.geometry)
    m = b.mask == 1
    ang = np.degrees(np.arccos(np.clip(np.einsum("pi,pi->p", res.normal[m], b.normal[m]), -1, 1)))
    assert (ang <= 1.0).mean() >= 0.99
    assert np.median(np.abs(res.roughness[m] - b.roughness[m])) <= 0.05
    _check_ranges(res, b.mask)


def test_ground_truth_init_is_stationary(glossy):
    b, lights, imgs = glossy
    res = refine_lm((b.normal, b.albedo, b.roughness), imgs, lights, b.geometry)
    m = b.mask == 1
    assert np.abs(res.normal - b.normal)[m].max() <= 1e-8
    assert np.abs(res.albedo - b.albedo)[m].max() <= 1e-8
    assert np.abs(res.roughness - b.roughness)[m].max() <= 1e-8
    assert not res.iterations[m].any()


def test_refine_keeps_exact_lambertian_solution():
    b = generate(PresetSpec(Preset.SPHERE, resolution=48, seed=2))
    imgs = _stack(b, NEAR_LIGHTS, LAMB)
    init = lambertian_init(imgs, NEAR_LIGHTS, b.geometry, LAMB)
    cfg = SolveConfig(estimate_roughness=False, render=LAMB)
    res = refine_lm((init.normal, init.albedo), imgs, NEAR_LIGHTS, b.geometry, cfg, degenerate=init.degenerate)
    m = (b.mask == 1) & ~init.degenerate
    ang = np.degrees(np.arccos(np.clip(np.einsum("pi,pi->p", res.normal[m], init.normal[m]), -1, 1)))
    assert ang.max() <= 0.05


def test_cost_is_monotone(glossy):
    b, lights, imgs = glossy
    init = lambertian_init(imgs, lights, b.geometry)
    prev = None
    for k in (1, 2, 4, 8, 16):
        r = refine_lm((init.normal, init.albedo), imgs, lights, b.geometry,
                      SolveConfig(max_iterations=k), degenerate=init.degenerate).residual
        if prev is not None:
            assert np.all(r <= prev)
        prev = r


def test_permutation_invariance(glossy):
    b, lights, imgs = glossy
    perm = np.random.default_rng(0).permutation(len(lights))
    a = solve(imgs, lights, b.geometry)
    p = solve([imgs[k] for k in perm], [lights[k] for k in perm], b.geometry)
    for name in ("normal", "albedo", "roughness", "residual"):
        assert np.abs(getattr(a, name) - getattr(p, name)).max() <= 1e-10


def test_threads_match_serial(glossy):
    b, lights, imgs = glossy
    a = solve(imgs, lights, b.geometry, SolveConfig(chunk_size=97))
    t = solve(imgs, lights, b.geometry, SolveConfig(chunk_size=97, workers=3))
    for name in ("normal", "albedo", "roughness", "iterations", "flags"):
        assert np.array_equal(getattr(a, name), getattr(t, name))


def test_scaling_invariance(glossy):
    b, lights, imgs = glossy
    k = 3.7
    a = solve(imgs, lights, b.geometry)
    s = solve([k * im for im in imgs], [lt.scaled(k) for lt in lights], b.geometry)
    m = b.mask == 1
    for name in ("normal", "roughness", "albedo"):
        assert np.abs(getattr(a, name) - getattr(s, name))[m].max() <= 1e-6, name


def test_nonfinite_pixel_is_flagged(glossy):
    b, lights, imgs = glossy
    c = b.camera
    u, v = int(c.cx), int(c.cy)
    bad = [im.copy() for im in imgs]
    bad[0][v, u, 1] = np.inf
    init = lambertian_init(bad, lights, b.geometry)
    res = refine_lm((init.normal, init.albedo), bad, lights, b.geometry, degenerate=init.degenerate)
    assert res.flags[v, u] != 0
    _check_ranges(res, b.mask)
    others = (b.mask == 1).copy()
    others[v, u] = False
    assert not (res.flags[others] & FLAG_NONFINITE).any()


def noise_mae_curve(seed=0, res=40, count=16):
    b = generate(PresetSpec(Preset.BUMP_FIELD, resolution=res, seed=seed))
    lights = hemisphere_lights(count, 2.0, 50 + seed)
    clean = _stack(b, lights)
    out = []
    for sigma in (0.0, 0.005, 0.01):
        imgs = perturb_images(clean, sigma, 80 + seed)
        out.append(mean_angular_error(solve(imgs, lights, b.geometry).normal, b.normal, b.mask))
    return out


def test_noise_monotonicity():
    maes = noise_mae_curve()
    assert maes[0] <= maes[1] <= maes[2]


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolveConfig(roughness_init=0.0)


def test_env_lights_rejected(glossy):
    from psrelight import EnvLight

    b, lights, imgs = glossy
    with pytest.raises(TypeError):
        solve(imgs[:3], [EnvLight(np.zeros(27))] * 3, b.geometry)
