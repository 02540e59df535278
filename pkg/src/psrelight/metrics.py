"""Masked L2 losses, mean angular error and SSIM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.ndimage import correlate1d


class EmptyMaskError(ValueError):
    """The mask selects no pixels, so the mask-normalized loss divides by zero."""


@dataclass(frozen=True)
class LossWeights:
    albedo: float = 1.0
    normal: float = 2.0
    depth: float = 1.0
    roughness: float = 1.0
    reconstruction: float = 1.0
    relighting: float = 1.0

    def __post_init__(self):
        for k, w in self.__dict__.items():
            if w < 0:
                raise ValueError(f"weight {k} must be nonnegative")


def _mask(mask, shape):
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match map shape {shape[:2]}")
    total = m.sum()
    if total == 0:
        raise EmptyMaskError(
            "mask is empty: the loss is normalized by the number of masked pixels, which is zero"
        )
    return m, total


def masked_mse(estimate, truth, mask) -> float:
    """Squared error summed over channels of masked pixels, divided by the masked pixel count."""
    est = np.asarray(estimate, dtype=np.float64)
    gt = np.asarray(truth, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {gt.shape}")
    m, total = _mask(mask, est.shape)
    diff = est - gt
    if diff.ndim == 3:
        m = m[..., None]
    return float(np.sum((diff * m) ** 2) / total)


def _forward_diffs(a, m):
    gx = a[:, 1:] - a[:, :-1]
    gy = a[1:, :] - a[:-1, :]
    vx = (m[:, 1:] > 0) & (m[:, :-1] > 0)
    vy = (m[1:, :] > 0) & (m[:-1, :] > 0)
    return gx, gy, vx, vy


def roughness_gradient_loss(estimate, truth, mask) -> float:
    """L2 loss between forward-difference gradients of two scalar maps.

    Differences are used only where both pixels are masked in. Each direction
    is averaged over its valid differences and the two are summed, so a ramp of
    slope ``s`` against a flat map scores ``s**2``.
    """
    est = np.asarray(estimate, dtype=np.float64)
    gt = np.asarray(truth, dtype=np.float64)
    if est.shape != gt.shape or est.ndim != 2:
        raise ValueError("roughness maps must be 2-D and of equal shape")
    m, _ = _mask(mask, est.shape)
    ex, ey, vx, vy = _forward_diffs(est, m)
    tx, ty, _, _ = _forward_diffs(gt, m)
    loss = 0.0
    for de, dt, valid in ((ex, tx, vx), (ey, ty, vy)):
        if valid.any():
            loss += float(np.sum(((de - dt) * valid) ** 2) / valid.sum())
    return loss


_COMPONENTS = ("albedo", "normal", "depth", "roughness", "reconstruction", "relighting")


def total_loss(losses: Mapping[str, float], weights: LossWeights = LossWeights()) -> float:
    """Weighted sum of the six component losses; missing components count as zero."""
    unknown = set(losses) - set(_COMPONENTS)
    if unknown:
        raise KeyError(f"unknown loss components: {sorted(unknown)}")
    total = 0.0
    for name in _COMPONENTS:
        v = float(losses.get(name, 0.0))
        if v < 0:
            raise ValueError(f"loss component {name} is negative")
        total += getattr(weights, name) * v
    return total


def mean_angular_error(estimate, truth, mask) -> float:
    """Mean angle in degrees between two normal maps over masked pixels.

    The angle is taken as ``atan2(|a x b|, a . b)``; it equals the arccos of
    the clamped dot product for unit inputs but stays accurate near 0 and 180
    degrees, so float32-stored maps compared with themselves give exactly 0.
    """
    est = np.asarray(estimate, dtype=np.float64)
    gt = np.asarray(truth, dtype=np.float64)
    if est.shape != gt.shape or est.shape[-1:] != (3,):
        raise ValueError("normal maps must be (H, W, 3) and of equal shape")
    m, _ = _mask(mask, est.shape)
    sel = m > 0
    a, b = est[sel], gt[sel]
    sin = np.linalg.norm(np.cross(a, b), axis=-1)
    cos = np.einsum("pi,pi->p", a, b)
    return float(np.degrees(np.arctan2(sin, cos)).mean())


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-(x * x) / (2 * sigma * sigma))
    return w / w.sum()


def _ssim_channel(x, y, win, c1, c2):
    def blur(a):
        return correlate1d(correlate1d(a, win, axis=0, mode="reflect"), win, axis=1, mode="reflect")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(estimate, truth, data_range: float = 1.0, win_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with a Gaussian window, averaged over channels.

    The border where the window does not fit (``win_size // 2`` pixels) is
    excluded from the mean.
    """
    x = np.asarray(estimate, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < win_size or x.shape[1] < win_size:
        raise ValueError(f"images must be at least {win_size}x{win_size} for SSIM")
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    win = gaussian_window(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    pad = win_size // 2
    vals = []
    for c in range(x.shape[-1]):
        s = _ssim_channel(x[..., c], y[..., c], win, c1, c2)
        vals.append(s[pad:-pad, pad:-pad].mean())
    return float(np.mean(vals))
