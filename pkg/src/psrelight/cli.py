"""Command-line pipeline: gen -> render/relight -> solve -> eval.

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
Set PSRELIGHT_THREADS to spread the solver over several threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io, metrics
from .inverse import FLAG_DEGENERATE, FLAG_NONFINITE, SolveConfig, solve
from .render import Falloff, RenderConfig, hemisphere_lights, render_direct
from .synth import Preset, PresetSpec, generate
from .types import EnvLight, PointLight

log = logging.getLogger("psrelight")


class UsageError(Exception):
    pass


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}")
    return vals


def _write_report(path, command, args, metric_map, t0, seed=None):
    report = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "metrics": metric_map,
        "seed": seed,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    if path is not None:
        io.atomic_write_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    width = max((len(k) for k in metric_map), default=6)
    print(f"{'metric':<{width}}  value")
    for k, v in metric_map.items():
        print(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    return report


def _require_scene(path: str):
    if not (Path(path) / io.BUNDLE_MANIFEST).is_file():
        raise UsageError(f"scene directory {path} has no {io.BUNDLE_MANIFEST}")
    return io.read_bundle(path)


def _render_config(args) -> RenderConfig:
    return RenderConfig(
        cosine_term=not getattr(args, "no_cosine", False),
        falloff=Falloff(getattr(args, "falloff", "distance")),
    )


def cmd_gen(args) -> int:
    if args.res < 16:
        raise UsageError("--res must be at least 16")
    spec = PresetSpec(Preset(args.preset), resolution=args.res, seed=args.seed)
    bundle = generate(spec)
    io.write_bundle(args.out, bundle, notes=f"preset={args.preset} res={args.res} seed={args.seed}")
    log.info("gen: wrote %s %dx%d scene to %s", args.preset, args.res, args.res, args.out)
    return 0


def _load_env(path) -> EnvLight:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
        if isinstance(obj, dict):
            obj = obj.get("coefficients")
        vals = np.asarray(obj, dtype=np.float64).ravel()
    except (json.JSONDecodeError, TypeError, ValueError):
        try:
            vals = np.asarray(text.replace(",", " ").split(), dtype=np.float64)
        except ValueError:
            raise UsageError(f"--env-coeffs: cannot parse {path}") from None
    try:
        return EnvLight(vals)
    except ValueError as e:
        raise UsageError(f"--env-coeffs: {e}") from None


def cmd_render(args) -> int:
    bundle = _require_scene(args.scene)
    lights = []
    if args.light_index is not None:
        if not 0 <= args.light_index < len(bundle.lights):
            raise UsageError(f"--light-index {args.light_index} out of range (scene has {len(bundle.lights)} lights)")
        lights.append(bundle.lights[args.light_index])
    elif args.light_pos is not None:
        pos = _floats(args.light_pos, 3, "--light-pos")
        inten = _floats(args.intensity, 3, "--intensity")
        try:
            lights.append(PointLight(pos, inten))
        except ValueError as e:
            raise UsageError(str(e)) from None
    if args.env_coeffs:
        lights.append(_load_env(args.env_coeffs))
    if not lights:
        raise UsageError("give --light-index, --light-pos or --env-coeffs")
    img = render_direct(bundle, lights, _render_config(args))
    io.write_map(args.out, img)
    log.info("render: wrote %s", args.out)
    return 0


def _parse_hemisphere(spec: str):
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] != "hemisphere":
        raise UsageError(f"--lights must look like hemisphere:COUNT:RADIUS:SEED, got {spec!r}")
    try:
        count, radius, seed = int(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise UsageError(f"--lights: bad numbers in {spec!r}") from None
    if count < 1 or not radius > 0:
        raise UsageError("--lights: COUNT must be >= 1 and RADIUS > 0")
    return hemisphere_lights(count, radius, seed), seed


def cmd_relight(args) -> int:
    bundle = _require_scene(args.scene)
    seed = None
    if args.lights:
        lights, seed = _parse_hemisphere(args.lights)
    else:
        lights = io.read_lights(args.lights_file)
    cfg = _render_config(args)
    images = [render_direct(bundle, lt, cfg) for lt in lights]
    io.write_stack(args.out_dir, images, lights, camera=bundle.camera,
                   notes=f"relit from {args.scene}" + (f" seed={seed}" if seed is not None else ""))
    log.info("relight: wrote %d images to %s", len(images), args.out_dir)
    return 0


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    scene = _require_scene(args.geometry)
    if not (Path(args.images_dir) / io.STACK_MANIFEST).is_file():
        raise UsageError(f"{args.images_dir} has no {io.STACK_MANIFEST}")
    images, lights = io.read_stack(args.images_dir)
    if len(images) < 3:
        raise UsageError(f"solve needs at least 3 images, found {len(images)}")
    if not all(isinstance(lt, PointLight) for lt in lights):
        raise UsageError("solve supports point lights only")
    cfg = SolveConfig(estimate_roughness=not args.no_roughness, max_iterations=args.max_iter)
    log.info("solve: %d images, %d masked pixels", len(images), int((scene.mask == 1).sum()))
    result = solve(images, lights, scene.geometry, cfg)
    io.write_solve_result(args.out, result)

    m = scene.mask == 1
    mm = {
        "images": len(images),
        "masked_pixels": int(m.sum()),
        "mean_residual": float(result.residual[m].mean()) if m.any() else 0.0,
        "mean_iterations": float(result.iterations[m].mean()) if m.any() else 0.0,
        "degenerate_pixels": int(((result.flags & FLAG_DEGENERATE) > 0)[m].sum()),
        "nonfinite_pixels": int(((result.flags & FLAG_NONFINITE) > 0)[m].sum()),
    }
    if m.any():
        mm["normal_mae_deg_vs_scene"] = metrics.mean_angular_error(result.normal, scene.normal, scene.mask)
        mm["roughness_median_abs_err_vs_scene"] = float(np.median(np.abs(result.roughness - scene.roughness)[m]))
    _write_report(Path(args.out) / "report.json", "solve", args, mm, t0)
    return 0


_DIR_FILES = {"mae": "normal.pfm", "rough-grad": "roughness.pfm"}
_MSE_MAPS = ("albedo", "normal", "roughness", "depth")


def _resolve(path: str, name: str):
    p = Path(path)
    return io.read_map(p / name) if p.is_dir() else io.read_map(p)


def _ssim_pairs(est: Path, gt: Path):
    if est.is_dir() and gt.is_dir():
        if (est / io.STACK_MANIFEST).is_file() and (gt / io.STACK_MANIFEST).is_file():
            ei, _ = io.read_stack(est)
            gi, _ = io.read_stack(gt)
            if len(ei) != len(gi):
                raise ValueError(f"stacks differ in length: {len(ei)} vs {len(gi)}")
            return list(zip(ei, gi))
        return [(io.read_map(est / "albedo.pfm"), io.read_map(gt / "albedo.pfm"))]
    return [(io.read_map(est), io.read_map(gt))]


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(wanted) - {"mae", "ssim", "mse", "rough-grad"}
    if unknown:
        raise UsageError(f"unknown metrics: {sorted(unknown)}")
    mask = io.read_map(args.mask)
    if mask.ndim != 2:
        raise ValueError(f"{args.mask}: mask must be single-channel")
    est, gt = Path(args.est), Path(args.gt)
    out = {}
    for name in wanted:
        if name == "mae":
            out["mae_deg"] = metrics.mean_angular_error(_resolve(args.est, "normal.pfm"), _resolve(args.gt, "normal.pfm"), mask)
        elif name == "rough-grad":
            out["rough_grad"] = metrics.roughness_gradient_loss(
                _resolve(args.est, "roughness.pfm"), _resolve(args.gt, "roughness.pfm"), mask
            )
        elif name == "ssim":
            pairs = _ssim_pairs(est, gt)
            out["ssim"] = float(np.mean([metrics.ssim(a, b) for a, b in pairs]))
        elif name == "mse":
            if est.is_dir() and gt.is_dir():
                for mp in _MSE_MAPS:
                    if (est / f"{mp}.pfm").is_file() and (gt / f"{mp}.pfm").is_file():
                        out[f"mse_{mp}"] = metrics.masked_mse(
                            io.read_map(est / f"{mp}.pfm"), io.read_map(gt / f"{mp}.pfm"), mask
                        )
            else:
                out["mse"] = metrics.masked_mse(io.read_map(est), io.read_map(gt), mask)
    _write_report(args.out, "eval", args, out, t0)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psrelight", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scene bundle")
    g.add_argument("--preset", choices=[x.value for x in Preset], required=True)
    g.add_argument("--res", type=int, default=128)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("render", help="render one image of a scene")
    r.add_argument("--scene", required=True)
    which = r.add_mutually_exclusive_group()
    which.add_argument("--light-index", type=int)
    which.add_argument("--light-pos")
    r.add_argument("--intensity", default="1,1,1")
    r.add_argument("--env-coeffs")
    r.add_argument("--no-cosine", action="store_true")
    r.add_argument("--falloff", choices=[f.value for f in Falloff], default="distance")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)

    rl = sub.add_parser("relight", help="render a stack under many point lights")
    rl.add_argument("--scene", required=True)
    src = rl.add_mutually_exclusive_group(required=True)
    src.add_argument("--lights")
    src.add_argument("--lights-file")
    rl.add_argument("--out-dir", required=True)
    rl.set_defaults(func=cmd_relight)

    s = sub.add_parser("solve", help="photometric stereo on an image stack")
    s.add_argument("--images-dir", required=True)
    s.add_argument("--geometry", required=True)
    s.add_argument("--no-roughness", action="store_true")
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="compare estimates with ground truth")
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--mask", required=True)
    e.add_argument("--metrics", default="mae,ssim,mse,rough-grad")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "max_iter", 1) < 1:
        parser.error("--max-iter must be >= 1")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"psrelight: error: {e}", file=sys.stderr)
        return 2
    except metrics.EmptyMaskError as e:
        print(f"psrelight: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, TypeError) as e:
        print(f"psrelight: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
