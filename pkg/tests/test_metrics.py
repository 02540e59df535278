
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from psrelight import LossWeights, masked_mse, mean_angular_error, roughness_gradient_loss, ssim, total_loss
from psrelight.metrics import EmptyMaskError

from oracles import brute_mae, brute_mse, ssim_reference_gap


def unit_field(rng, shape):
    n = rng.normal(size=shape + (3,))
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def test_mse_identities(rng):
    a = rng.random((9, 7, 3))
    m = (rng.random((9, 7)) > 0.4).astype(float)
    assert masked_mse(a, a, m) == 0
    one = np.zeros((3, 3))
    one[1, 1] = 1
    assert masked_mse(np.full((3, 3), 0.5), np.zeros((3, 3)), one) == 0.25


@pytest.mark.parametrize("channels", [None, 3])
def test_mse_matches_brute_force(rng, channels):
    shape = (13, 11) if channels is None else (13, 11, 3)
    a, b = rng.random(shape), rng.random(shape)
    m = (rng.random((13, 11)) > 0.3).astype(float)
    assert abs(masked_mse(a, b, m) - brute_mse(a, b, m)) <= 1e-12


def test_mse_symmetric_and_ignores_outside(rng):
    a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
    m = np.zeros((8, 8))
    m[2:6, 2:6] = 1
    assert masked_mse(a, b, m) == masked_mse(b, a, m)
    b2 = b.copy()
    b2[0, 0] += 5
    assert masked_mse(a, b2, m) == masked_mse(a, b, m)


def test_empty_mask_raises(rng):
    a = rng.random((4, 4))
    for fn in (masked_mse, roughness_gradient_loss):
        with pytest.raises(EmptyMaskError, match="zero"):
            fn(a, a, np.zeros((4, 4)))
    with pytest.raises(EmptyMaskError):
        mean_angular_error(unit_field(rng, (4, 4)), unit_field(rng, (4, 4)), np.zeros((4, 4)))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        masked_mse(np.zeros((3, 3)), np.zeros((3, 4)), np.ones((3, 3)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 5, 3), elements=st.floats(-10, 10)),
       arrays(np.float64, (6, 5, 3), elements=st.floats(-10, 10)),
       arrays(np.bool_, (6, 5)))
def test_mse_nonnegative_property(a, b, m):
    m = m.astype(float)
    if m.sum() == 0:
        return
    v = masked_mse(a, b, m)
    assert v >= 0
    agree = np.all((a == b)[m > 0])
    assert (v == 0) == agree


def test_rough_grad_identities(rng):
    m = np.ones((6, 6))
    assert roughness_gradient_loss(np.full((6, 6), 0.3), np.full((6, 6), 0.9), m) == 0
    r = rng.random((6, 6))
    assert roughness_gradient_loss(r + 0.25, r, m) == pytest.approx(0, abs=1e-28)


def test_rough_grad_ramp():
    # 4x4 ramp of slope 0.1 along x vs flat: x-differences are all 0.1, y are 0
    ramp = np.tile(np.arange(4) * 0.1, (4, 1))
    assert roughness_gradient_loss(ramp, np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.01, rel=1e-12)


def test_rough_grad_excludes_boundary():
    est = np.zeros((4, 4))
    est[:, 2:] = 100.0  # a jump only across the mask boundary
    m = np.zeros((4, 4))
    m[:, :2] = 1
    assert roughness_gradient_loss(est, np.zeros((4, 4)), m) == 0


def test_total_loss():
    assert total_loss({}) == 0
    assert total_loss({"normal": 1.0}) == 2.0
    ones = dict.fromkeys(["albedo", "normal", "depth", "roughness", "reconstruction", "relighting"], 1.0)
    assert total_loss(ones) == 7.0
    with pytest.raises(KeyError):
        total_loss({"specular": 1.0})
    with pytest.raises(ValueError):
        total_loss({"albedo": -1.0})
    with pytest.raises(ValueError):
        LossWeights(albedo=-1)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.sampled_from(["albedo", "normal", "depth", "roughness", "reconstruction",
                                         "relighting"]), st.floats(0, 100)),
       st.sampled_from(["albedo", "normal", "depth"]), st.floats(0, 10))
def test_total_loss_linear(losses, key, extra):
    w = LossWeights()
    bumped = dict(losses)
    bumped[key] = bumped.get(key, 0.0) + extra
    assert total_loss(bumped, w) - total_loss(losses, w) == pytest.approx(getattr(w, key) * extra, abs=1e-9)


def test_mae_identities(rng):
    n = unit_field(rng, (10, 10))
    m = np.ones((10, 10))
    assert mean_angular_error(n, n, m) == pytest.approx(0, abs=1e-6)
    assert mean_angular_error(n, -n, m) == pytest.approx(180, abs=1e-6)
    # rotate by 90 degrees about the x axis
    z = np.zeros((10, 10, 3))
    z[..., 2] = 1
    y = np.zeros((10, 10, 3))
    y[..., 1] = 1
    assert mean_angular_error(y, z, m) == 90


def test_mae_matches_brute_force(rng):
    a, b = unit_field(rng, (12, 9)), unit_field(rng, (12, 9))
    m = (rng.random((12, 9)) > 0.5).astype(float)
    assert abs(mean_angular_error(a, b, m) - brute_mae(a, b, m)) <= 1e-9


def test_mae_pixel_permutation(rng):
    a, b = unit_field(rng, (8, 8)), unit_field(rng, (8, 8))
    perm = rng.permutation(64)
    pa = a.reshape(64, 3)[perm].reshape(8, 8, 3)
    pb = b.reshape(64, 3)[perm].reshape(8, 8, 3)
    m = np.ones((8, 8))
    assert mean_angular_error(pa, pb, m) == pytest.approx(mean_angular_error(a, b, m), rel=1e-12)


def test_ssim_identities(rng):
    x = rng.random((32, 32, 3))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    for c in (0.0, 0.3, 1.0):
        assert ssim(np.full((16, 16, 3), c), np.full((16, 16, 3), c)) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetric_bounded(rng):
    x, y = rng.random((24, 24, 3)), rng.random((24, 24, 3))
    assert ssim(x, y) == ssim(y, x)
    assert -1 <= ssim(x, -y + 1) <= 1


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def test_ssim_matches_scikit_image():
    gap, value = ssim_reference_gap()
    assert 0.3 < value < 0.99
    assert gap <= 1e-4
