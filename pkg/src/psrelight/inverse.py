"""Calibrated near-field photometric stereo.

Per masked pixel, recover normal, RGB albedo and roughness from images under
known point lights. A linear Lambertian fit gives the starting point; a
Levenberg-Marquardt refinement then fits the full microfacet forward model
used by :mod:`psrelight.render`. Pixels are independent, so the work is done
in vectorized batches and optionally spread over threads.
"""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .render import Falloff, RenderConfig, point_shading
from .types import R_MIN, PointLight, surface_points

log = logging.getLogger(__name__)

FLAG_DEGENERATE = 1
FLAG_NONFINITE = 2

MAX_CONDITION = 1e6
MIN_B_NORM = 1e-9
_MAX_DAMPING = 1e16
THREADS_ENV = "PSRELIGHT_THREADS"


@dataclass(frozen=True)
class SolveConfig:
    max_iterations: int = 50
    cost_tolerance: float = 1e-10
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    roughness_init: float = 0.5
    estimate_roughness: bool = True
    render: RenderConfig = field(default_factory=RenderConfig)
    chunk_size: int = 4096
    workers: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("cost_tolerance", "initial_damping", "damping_up", "damping_down", "roughness_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not R_MIN <= self.roughness_init <= 1:
            raise ValueError(f"roughness_init must lie in [{R_MIN}, 1]")


@dataclass(frozen=True)
class SolveResult:
    normal: np.ndarray
    albedo: np.ndarray
    roughness: np.ndarray
    residual: np.ndarray  # RMS residual per pixel
    iterations: np.ndarray  # accepted LM steps per pixel
    flags: np.ndarray  # bitmask of FLAG_DEGENERATE | FLAG_NONFINITE


class LambertianInit(NamedTuple):
    normal: np.ndarray
    albedo: np.ndarray
    degenerate: np.ndarray


def _n_workers(config: SolveConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _canonical_order(images, lights) -> np.ndarray:
    """Order observations by light parameters so reductions do not depend on input order."""
    keys = []
    for im, lt in zip(images, lights):
        digest = hashlib.sha256(np.ascontiguousarray(im, dtype=np.float64).tobytes()).hexdigest()
        keys.append((tuple(lt.position.tolist()), tuple(lt.intensity.tolist()), digest))
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=int)


class _Observations(NamedTuple):
    idx: tuple  # (rows, cols) of masked pixels
    I: np.ndarray  # (M, J, 3)
    l: np.ndarray  # (M, J, 3)
    v: np.ndarray  # (M, 3)
    irr: np.ndarray  # (M, J, 3) intensity / distance^2
    dist2: np.ndarray  # (M, J)
    intensity: np.ndarray  # (J, 3)


def _observe(images, lights, geometry, render_cfg: RenderConfig) -> _Observations:
    images = [np.asarray(im, dtype=np.float64) for im in images]
    lights = list(lights)
    if len(images) != len(lights):
        raise ValueError(f"{len(images)} images but {len(lights)} lights")
    if len(images) < 3:
        raise ValueError(f"photometric stereo needs at least 3 images, got {len(images)}")
    for lt in lights:
        if not isinstance(lt, PointLight):
            raise TypeError("the solver only supports point lights")
    shape = geometry.mask.shape
    for k, im in enumerate(images):
        if im.shape != shape + (3,):
            raise ValueError(f"image {k} has shape {im.shape}, expected {shape + (3,)}")

    order = _canonical_order(images, lights)
    images = [images[k] for k in order]
    lights = [lights[k] for k in order]

    m = geometry.mask == 1
    idx = np.nonzero(m)
    depth = np.where(m, geometry.depth, 1.0)
    P = surface_points(geometry.camera, depth)[idx]
    v = -P / np.linalg.norm(P, axis=-1, keepdims=True)
    pos = np.stack([lt.position for lt in lights])
    intensity = np.stack([lt.intensity for lt in lights])
    to_light = pos[None, :, :] - P[:, None, :]
    d2 = np.maximum(np.einsum("mjk,mjk->mj", to_light, to_light), 1e-12)
    l = to_light / np.sqrt(d2)[..., None]
    if render_cfg.falloff is Falloff.DEPTH_MAP:
        dist2 = np.broadcast_to(geometry.depth[idx][:, None] ** 2, d2.shape).copy()
    else:
        dist2 = d2
    irr = intensity[None, :, :] / dist2[..., None]
    I = np.stack([im[idx] for im in images], axis=1)
    return _Observations(idx, I, l, v, irr, dist2, intensity)


def _lambertian_core(obs: _Observations):
    M, J, _ = obs.I.shape
    y = obs.I * obs.dist2[..., None] / np.maximum(obs.intensity, 1e-12)[None]
    y_gray = y.mean(axis=-1)
    # zero readings are treated as shadowed and left out of the linear fit
    w = (obs.I.mean(axis=-1) > 0).astype(np.float64)
    A = w[..., None] * obs.l
    rhs = w * y_gray
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = s[:, 0] / s[:, 2]
        coef = np.einsum("mjk,mj->mk", U, rhs) / s
    b = np.pi * np.einsum("mkd,mk->md", Vt, coef)
    bn = np.linalg.norm(b, axis=-1)
    degenerate = ~(cond <= MAX_CONDITION) | ~(bn >= MIN_B_NORM) | (w.sum(axis=1) < 3)

    with np.errstate(divide="ignore", invalid="ignore"):
        n = b / bn[:, None]
    n = np.where(degenerate[:, None], obs.v, n)
    flip = np.einsum("md,md->m", n, obs.v) < 0
    n[flip] *= -1.0

    shade = w * np.maximum(np.einsum("md,mjd->mj", n, obs.l), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        albedo = np.pi * np.einsum("mjc,mj->mc", y, shade) / np.sum(shade * shade, axis=1)[:, None]
    albedo = np.clip(np.nan_to_num(albedo, nan=0.0), 0.0, 1.0)
    albedo[degenerate] = 0.0
    return n, albedo, degenerate


def _scatter(shape, idx, values, fill=0.0):
    out = np.full(shape + values.shape[1:], fill, dtype=np.float64)
    out[idx] = values
    return out


def lambertian_init(images, lights, geometry, render: RenderConfig = RenderConfig()) -> LambertianInit:
    """Linear least-squares normals and albedo, assuming a Lambertian surface.

    Solves ``I_j d_j^2 / intensity_j = (1/pi) b . l_j`` per pixel on the
    channel-averaged images, with ``b = albedo * n``, then refits albedo per
    channel along the recovered normal. Pixels whose light matrix is
    ill-conditioned (or where ``|b|`` vanishes) fall back to the view
    direction and zero albedo, and are marked in ``degenerate``.
    """
    obs = _observe(images, lights, geometry, render)
    n, a, deg = _lambertian_core(obs)
    shape = geometry.mask.shape
    return LambertianInit(
        _scatter(shape, obs.idx, n),
        _scatter(shape, obs.idx, a),
        _scatter(shape, obs.idx, deg.astype(np.float64)) > 0,
    )


def _tangent_basis(n):
    helper = np.where(np.abs(n[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = helper - np.einsum("pd,pd->p", helper, n)[:, None] * n
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(n, t1)
    return np.stack([t1, t2], axis=-1)  # (P, 3, 2)


class _Problem:
    """Residuals and Jacobians for a batch of pixels."""

    def __init__(self, I, l, v, irr, cfg: RenderConfig, fit_roughness: bool):
        self.I, self.l, self.v, self.irr = I, l, v, irr
        self.cfg = cfg
        self.K = 6 if fit_roughness else 5

    def take(self, sel):
        p = _Problem.__new__(_Problem)
        p.I, p.l, p.v, p.irr = self.I[sel], self.l[sel], self.v[sel], self.irr[sel]
        p.cfg, p.K = self.cfg, self.K
        return p

    def residual(self, n, A, R):
        sh = point_shading(n[:, None], A[:, None], R[:, None], self.l, self.v[:, None], self.irr, self.cfg)
        return (sh.value - self.I).reshape(len(n), -1)

    def jacobian(self, n, A, R):
        P, J, _ = self.I.shape
        sh = point_shading(
            n[:, None], A[:, None], R[:, None], self.l, self.v[:, None], self.irr, self.cfg, grad=True
        )
        r = (sh.value - self.I).reshape(P, -1)
        T = _tangent_basis(n)
        irr = self.irr
        # d value_c / d n = irr_c * (A_c / pi * cos' + d_normal)
        if self.cfg.cosine_term:
            cos_grad = np.where((sh.d_albedo > 0)[..., None], self.l, 0.0)
        else:
            cos_grad = np.zeros_like(self.l)
        dn = irr[..., None] * (
            A[:, None, :, None] / np.pi * cos_grad[:, :, None, :] + sh.d_normal[:, :, None, :]
        )
        Jm = np.zeros((P, J, 3, self.K))
        Jm[..., 0:2] = np.einsum("pjcd,pdk->pjck", dn, T)
        for c in range(3):
            Jm[:, :, c, 2 + c] = irr[..., c] * sh.d_albedo
        if self.K == 6:
            Jm[..., 5] = irr * sh.d_roughness[..., None]
        return r, Jm.reshape(P, J * 3, self.K), T


def _lm_batch(prob: _Problem, n, A, R, cfg: SolveConfig):
    P = len(n)
    n, A, R = n.copy(), A.copy(), R.copy()
    iters = np.zeros(P, dtype=np.int64)
    flags = np.zeros(P, dtype=np.int64)
    lam = np.full(P, cfg.initial_damping)

    r, Jm, T = prob.jacobian(n, A, R)
    cost = 0.5 * np.sum(r * r, axis=1)
    # a fit whose RMS residual is within cost_tolerance of the signal RMS is exact;
    # further steps would only trade rounding noise
    floor = cfg.cost_tolerance**2 * 0.5 * np.sum(prob.I.reshape(P, -1) ** 2, axis=1)
    finite = np.isfinite(cost) & np.all(np.isfinite(Jm), axis=(1, 2))
    flags[~finite] |= FLAG_NONFINITE
    active = finite & (cost > floor)

    for _ in range(cfg.max_iterations):
        ids = np.nonzero(active)[0]
        if ids.size == 0:
            break
        Ja, ra = Jm[ids], r[ids]
        H = np.einsum("pik,pil->pkl", Ja, Ja)
        g = np.einsum("pik,pi->pk", Ja, ra)
        # isotropic damping scaled by the largest curvature: invariant to a common
        # intensity scale, and far better than Marquardt's diag(H) in the curved
        # valleys a sharp specular lobe creates
        dmax = np.einsum("pkk->pk", H).max(axis=1)
        stuck = ~(dmax > 0)
        Hd = H + (lam[ids] * dmax)[:, None, None] * np.eye(prob.K)
        Hd[stuck] = np.eye(prob.K)
        try:
            step = -np.linalg.solve(Hd, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([-np.linalg.lstsq(h, gg, rcond=None)[0] for h, gg in zip(Hd, g)])
        step[stuck] = 0.0

        n_new = n[ids] + np.einsum("pdk,pk->pd", T[ids], step[:, :2])
        n_new /= np.linalg.norm(n_new, axis=-1, keepdims=True)
        A_new = np.clip(A[ids] + step[:, 2:5], 0.0, 1.0)
        R_new = R[ids]
        if prob.K == 6:
            R_new = np.clip(R_new + step[:, 5], R_MIN, 1.0)
        sub = prob.take(ids)
        r_new = sub.residual(n_new, A_new, R_new)
        cost_new = 0.5 * np.sum(r_new * r_new, axis=1)
        better = np.isfinite(cost_new) & (cost_new < cost[ids]) & ~stuck

        acc = ids[better]
        rej = ids[~better]
        if acc.size:
            rel = (cost[acc] - cost_new[better]) / cost[acc]
            n[acc], A[acc], R[acc] = n_new[better], A_new[better], R_new[better]
            cost[acc] = cost_new[better]
            iters[acc] += 1
            lam[acc] *= cfg.damping_down
            r_a, J_a, T_a = prob.take(acc).jacobian(n[acc], A[acc], R[acc])
            ok = np.all(np.isfinite(J_a), axis=(1, 2))
            r[acc], Jm[acc], T[acc] = r_a, J_a, T_a
            done = (rel < cfg.cost_tolerance) | (cost[acc] <= floor[acc]) | ~ok
            active[acc[done]] = False
        if rej.size:
            lam[rej] *= cfg.damping_up
            active[rej[(lam[rej] > _MAX_DAMPING) | stuck[~better]]] = False
    return n, A, R, cost, iters, flags


def _prepare_init(init, shape, roughness_default):
    if len(init) == 2:
        normal, albedo = init
        rough = roughness_default
    else:
        normal, albedo, rough = init[:3]
    normal = np.asarray(normal, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    rough = np.broadcast_to(np.asarray(rough, dtype=np.float64), shape)
    return normal, albedo, rough


def refine_lm(init, images, lights, geometry, config: SolveConfig = SolveConfig(),
              degenerate=None) -> SolveResult:
    """Levenberg-Marquardt refinement of ``init = (normal, albedo[, roughness])``.

    Each pixel has parameters ``(2-dof normal chart, albedo rgb, roughness)``;
    the normal chart is re-centred after every accepted step. Albedo and
    roughness are projected to their valid ranges before a candidate step is
    scored, and only cost-decreasing steps are accepted.
    ``degenerate`` (bool map) marks pixels that keep their initial values.
    """
    obs = _observe(images, lights, geometry, config.render)
    shape = geometry.mask.shape
    normal, albedo, rough = _prepare_init(init, shape, config.roughness_init)
    n0 = normal[obs.idx]
    n0 = n0 / np.linalg.norm(n0, axis=-1, keepdims=True)
    A0 = np.clip(albedo[obs.idx], 0.0, 1.0)
    R0 = np.clip(rough[obs.idx], R_MIN, 1.0)
    deg = np.zeros(len(n0), bool) if degenerate is None else np.asarray(degenerate)[obs.idx].astype(bool)

    prob = _Problem(obs.I, obs.l, obs.v, obs.irr, config.render, config.estimate_roughness)
    M = len(n0)
    n, A, R = n0.copy(), A0.copy(), R0.copy()
    cost = np.zeros(M)
    iters = np.zeros(M, dtype=np.int64)
    flags = np.where(deg, FLAG_DEGENERATE, 0).astype(np.int64)

    todo = np.nonzero(~deg)[0]
    chunks = [todo[i : i + config.chunk_size] for i in range(0, todo.size, config.chunk_size)]

    def run(ids):
        return ids, _lm_batch(prob.take(ids), n0[ids], A0[ids], R0[ids], config)

    workers = _n_workers(config)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    for ids, (nb, Ab, Rb, cb, ib, fb) in results:
        n[ids], A[ids], R[ids], cost[ids], iters[ids] = nb, Ab, Rb, cb, ib
        flags[ids] |= fb
    if deg.any():
        cost[deg] = 0.5 * np.sum(prob.take(deg).residual(n[deg], A[deg], R[deg]) ** 2, axis=1)
    bad = (flags & FLAG_NONFINITE) > 0
    n[bad], A[bad], R[bad] = n0[bad], A0[bad], R0[bad]

    rms = np.sqrt(2.0 * np.nan_to_num(cost, nan=0.0, posinf=0.0) / obs.I[0].size)
    log.debug("refine_lm: %d pixels, mean accepted steps %.1f", M, iters.mean() if M else 0.0)
    return SolveResult(
        normal=_scatter(shape, obs.idx, n),
        albedo=_scatter(shape, obs.idx, A),
        roughness=_scatter(shape, obs.idx, R),
        residual=_scatter(shape, obs.idx, rms),
        iterations=_scatter(shape, obs.idx, iters.astype(np.float64)),
        flags=_scatter(shape, obs.idx, flags.astype(np.float64)).astype(np.int64),
    )


def solve(images: Sequence[np.ndarray], lights: Sequence[PointLight], geometry,
          config: SolveConfig = SolveConfig()) -> SolveResult:
    """Lambertian initialization followed by LM refinement."""
    init = lambertian_init(images, lights, geometry, config.render)
    return refine_lm((init.normal, init.albedo), images, lights, geometry, config, degenerate=init.degenerate)
