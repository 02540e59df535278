import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psrelight import (
    Camera,
    EnvLight,
    Falloff,
    PointLight,
    Preset,
    PresetSpec,
    RenderConfig,
    compose_global,
    decompose_global,
    generate,
    relight_stack,
    render_direct,
    sample_frontal_hemisphere,
    shade_sh,
)
from psrelight.render import RenderStats

from oracles import compose_roundtrip_mismatches

Y00 = 0.5 / np.sqrt(np.pi)


def _flat(res=33, albedo=1.0):
    b = generate(PresetSpec(Preset.TEXTURED_PLANE, resolution=res))
    return b.replace(albedo=np.where(b.mask[..., None] > 0, albedo, 0.0))


def test_colocated_lambertian_plane_center():
    b = _flat()
    img = render_direct(b, PointLight([0, 0, 0], [1, 1, 1]), RenderConfig.lambertian())
    c = b.camera
    assert np.allclose(img[int(c.cy), int(c.cx)], 1 / np.pi, rtol=1e-12)


def test_zero_intensity_gives_zero_image(sphere64):
    img = render_direct(sphere64, PointLight([0.3, 0, 0], [0, 0, 0]))
    assert not img.any()


def test_inverse_square_on_axis(plane32):
    cfg = RenderConfig(clamp_negative=False)
    c = plane32.camera
    u, v = int(c.cx), int(c.cy)
    # on-axis pixel is at (0, 0, -1); move the light along +z away from it
    near = render_direct(plane32, PointLight([0, 0, 0.0]), cfg)[v, u]
    far = render_direct(plane32, PointLight([0, 0, 1.0]), cfg)[v, u]
    assert np.array_equal(near, 4 * far)


@settings(max_examples=30, deadline=None)
@given(k=st.sampled_from([0.5, 2.0, 4.0, 0.25, 8.0]), x=st.floats(-0.5, 0.5))
def test_linear_in_intensity(k, x):
    b = _flat(24, 0.7)
    cfg = RenderConfig(clamp_negative=False)
    base = render_direct(b, PointLight([x, 0.1, 0.2], [0.3, 0.6, 0.9]), cfg)
    scaled = render_direct(b, PointLight([x, 0.1, 0.2], [0.3 * k, 0.6 * k, 0.9 * k]), cfg)
    assert np.array_equal(scaled, k * base)


def test_superposition_point_and_env(plane32):
    cfg = RenderConfig(clamp_negative=False)
    rng = np.random.default_rng(3)
    pt = PointLight([0.2, -0.1, 0.1], [0.8, 0.9, 1.0])
    env = EnvLight(rng.normal(size=27))
    both = render_direct(plane32, [pt, env], cfg)
    apart = render_direct(plane32, pt, cfg) + render_direct(plane32, env, cfg)
    assert np.array_equal(both, apart)


def test_masked_out_and_backfacing_are_zero(sphere64):
    img = render_direct(sphere64, PointLight([1.5, 0, -1.0]))
    assert not img[sphere64.mask == 0].any()
    from psrelight.types import surface_points

    P = surface_points(sphere64.camera, sphere64.depth)
    l = np.array([1.5, 0, -1.0]) - P
    nl = np.einsum("...i,...i->...", sphere64.normal, l)
    back = (sphere64.mask == 1) & (nl <= 0)
    assert back.any()
    assert not img[back].any()


def test_depth_falloff_equals_distance_on_axis():
    b = _flat(33, 0.5)
    lt = PointLight([0, 0, 0])
    a = render_direct(b, lt, RenderConfig(falloff=Falloff.DISTANCE))
    d = render_direct(b, lt, RenderConfig(falloff=Falloff.DEPTH_MAP))
    c = b.camera
    assert np.array_equal(a[int(c.cy), int(c.cx)], d[int(c.cy), int(c.cx)])


def test_cosine_term_off_keeps_backfacing_zero(sphere64):
    img = render_direct(sphere64, PointLight([1.5, 0, -1.0]), RenderConfig(cosine_term=False))
    assert np.all(img >= 0)
    assert not img[sphere64.mask == 0].any()


def test_coincident_light_is_counted():
    b = _flat(17)
    c = b.camera
    P = b.depth[int(c.cy), int(c.cx)] * np.array([0, 0, -1.0])
    stats = RenderStats()
    img = render_direct(b, PointLight(P), RenderConfig(), stats)
    assert stats.coincident_pixels == 1
    assert np.all(np.isfinite(img))


def test_deterministic(sphere64):
    lt = PointLight([0.3, -0.2, 0.4])
    assert np.array_equal(render_direct(sphere64, lt), render_direct(sphere64, lt))


# spherical harmonics


def test_sh_zero():
    assert np.array_equal(shade_sh(np.array([0, 0, 1.0]), np.zeros(27)), np.zeros(3))


@pytest.mark.parametrize("n", [[0, 0, 1.0], [1.0, 0, 0], [0, -0.6, 0.8]])
def test_sh_constant_band(n):
    c = np.zeros((3, 9))
    c[:, 0] = 1.0
    assert np.allclose(shade_sh(np.array(n), c), np.pi * Y00, rtol=1e-12)
    assert np.allclose(np.pi * Y00, 0.886227, atol=1e-6)


def test_sh_linear_band_is_odd():
    c = np.zeros((3, 9))
    c[:, 2] = 1.0  # Y_10, proportional to z
    up = shade_sh(np.array([0, 0, 1.0]), c, clamp_negative=False)
    down = shade_sh(np.array([0, 0, -1.0]), c, clamp_negative=False)
    assert np.allclose(up, -down) and np.all(up > 0)
    assert np.all(shade_sh(np.array([0, 0, -1.0]), c) == 0)


def test_sh_matches_quadrature():
    # irradiance E(n) = integral of L(w) max(n.w, 0) dw, with L a random SH9 radiance
    rng = np.random.default_rng(9)
    coef = rng.normal(size=(1, 9))
    n = np.array([0.3, -0.4, np.sqrt(1 - 0.25)])
    th, ph = np.meshgrid(np.linspace(0, np.pi, 801), np.linspace(0, 2 * np.pi, 1601), indexing="ij")
    w = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)
    x, y, z = w[..., 0], w[..., 1], w[..., 2]
    Y = np.stack([
        np.full_like(x, 0.282095), 0.488603 * y, 0.488603 * z, 0.488603 * x,
        1.092548 * x * y, 1.092548 * y * z, 0.315392 * (3 * z * z - 1), 1.092548 * x * z,
        0.546274 * (x * x - y * y),
    ], -1)
    L = Y @ coef[0]
    integrand = L * np.maximum(w @ n, 0) * np.sin(th)
    E = np.trapezoid(np.trapezoid(integrand, ph[0], axis=1), th[:, 0])
    got = shade_sh(n, np.repeat(coef, 3, axis=0), clamp_negative=False)[0]
    # the 9-term irradiance formula truncates the clamped-cosine kernel; bands l > 2
    # of max(n.w, 0) are zero for odd l and tiny for even l, so agreement is close
    assert abs(got - E) < 2e-3 * np.abs(coef).sum()


# composition


def test_compose_identities():
    d = np.full((4, 5, 3), 0.2)
    assert np.array_equal(compose_global(d, np.zeros_like(d)), d)
    assert np.allclose(compose_global(d, np.full_like(d, 0.1)), 0.3)
    assert not decompose_global(d, d).any()


def test_compose_shape_mismatch():
    with pytest.raises(ValueError):
        compose_global(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))
    with pytest.raises(ValueError):
        decompose_global(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_compose_clamps_by_default():
    assert compose_global(np.zeros((1, 1, 3)), -np.ones((1, 1, 3))).min() == 0


def test_compose_decompose_inverse_100_pairs():
    assert compose_roundtrip_mismatches() == 0


# stacks and hemisphere sampling


def test_relight_single_and_duplicates(sphere64):
    lt = PointLight([0.2, 0.1, 0.0])
    (one,) = relight_stack(sphere64, [lt])
    assert np.array_equal(one, render_direct(sphere64, lt))
    a, b = relight_stack(sphere64, [lt, lt])
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        relight_stack(sphere64, [])


def test_relight_argmax_tracks_ndotl():
    b = generate(PresetSpec(Preset.SPHERE, resolution=48, seed=2))
    cfg = RenderConfig.lambertian()
    pos = sample_frontal_hemisphere(32, 2.0, 4)
    imgs = np.stack(relight_stack(b, [PointLight(p) for p in pos], cfg))
    from psrelight.types import surface_points

    P = surface_points(b.camera, b.depth)
    m = b.mask == 1
    score = []
    for p in pos:
        L = p - P[m]
        d2 = np.einsum("pi,pi->p", L, L)
        score.append(np.einsum("pi,pi->p", b.normal[m], L) / d2**1.5)
    # Lambertian radiance is proportional to n.l / d^2, so the argmax must coincide
    assert np.array_equal(imgs[:, m, 0].argmax(0), np.argmax(score, 0))


def test_hemisphere_deterministic_and_on_hemisphere():
    a = sample_frontal_hemisphere(50, 2.0, 7)
    b = sample_frontal_hemisphere(50, 2.0, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = np.array([0, 0, -1.0])
    for p in a:
        assert p[2] - c[2] >= 0
        assert np.isclose(np.linalg.norm(p - c), 2.0, rtol=1e-12)


def test_hemisphere_mean_direction():
    c = np.array([0, 0, -1.0])
    pts = np.array(sample_frontal_hemisphere(10_000, 1.0, 0)) - c
    # centroid of the unit hemisphere surface lies at height 1/2 on the axis;
    # tolerance is 2% of the radius (per-axis sampling sigma here is ~0.006)
    mean = pts.mean(0)
    assert np.linalg.norm(mean - [0, 0, 0.5]) <= 0.02


@pytest.mark.parametrize("count, radius", [(0, 1.0), (3, 0.0)])
def test_hemisphere_bad_args(count, radius):
    with pytest.raises(ValueError):
        sample_frontal_hemisphere(count, radius, 0)


def test_off_axis_camera_renders():
    cam = Camera(focal=30.0, cx=10.0, cy=12.0, width=24, height=20)
    b = generate(PresetSpec(Preset.TEXTURED_PLANE, resolution=24), camera=cam)
    img = render_direct(b, PointLight([0, 0, 0]))
    assert img.shape == (20, 24, 3) and np.all(img[b.mask == 1] > 0)
