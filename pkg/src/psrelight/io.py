"""PFM maps, scene bundles, light stacks and solver outputs on disk.

Bundle directory layout::

    manifest.json  albedo.pfm  normal.pfm  depth.pfm  roughness.pfm  mask.pfm

Stack directory layout (relit images plus the lights that made them)::

    stack.json  img_000.pfm  img_001.pfm  ...

Both JSON files carry ``schema_version``; unknown keys are ignored on read.
"""

from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .types import Camera, Light, SceneBundle, light_from_dict, light_to_dict, validate_bundle

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAP_NAMES = ("albedo", "normal", "depth", "roughness", "mask")
STACK_MANIFEST = "stack.json"
BUNDLE_MANIFEST = "manifest.json"


class PFMError(ValueError):
    def __init__(self, msg: str, offset: int, path=None):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{msg} (byte offset {offset})")
        self.offset = offset
        self.path = path


class BundleError(ValueError):
    pass


def encode_pfm(data) -> bytes:
    a = np.asarray(data)
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) maps, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("refusing to write non-finite values to PFM")
    h, w = a.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    payload = np.ascontiguousarray(np.flipud(a), dtype="<f4").tobytes()
    return header + payload


def decode_pfm(buf: bytes, path=None) -> np.ndarray:
    pos = 0

    def token():
        nonlocal pos
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PFMError("truncated header", start, path)
        return buf[start:pos], start

    tag, off = token()
    if tag not in (b"PF", b"Pf"):
        raise PFMError(f"bad magic {tag[:8]!r}, expected PF or Pf", off, path)
    channels = 3 if tag == b"PF" else 1
    dims = []
    for what in ("width", "height"):
        tok, off = token()
        try:
            val = int(tok)
        except ValueError:
            raise PFMError(f"malformed {what} {tok[:16]!r}", off, path) from None
        if val < 1:
            raise PFMError(f"{what} must be positive, got {val}", off, path)
        dims.append(val)
    tok, off = token()
    try:
        scale = float(tok)
    except ValueError:
        raise PFMError(f"malformed scale {tok[:16]!r}", off, path) from None
    if scale == 0 or not math.isfinite(scale):
        raise PFMError(f"scale must be a nonzero finite number, got {scale}", off, path)
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise PFMError("missing whitespace after scale", pos, path)
    pos += 1

    w, h = dims
    count = w * h * channels
    need = 4 * count
    if len(buf) - pos < need:
        raise PFMError(f"truncated payload: need {need} bytes, found {len(buf) - pos}", len(buf), path)
    dtype = "<f4" if scale < 0 else ">f4"
    a = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(np.float32)
    bad = np.flatnonzero(~np.isfinite(a))
    if bad.size:
        raise PFMError("non-finite value in payload", pos + 4 * int(bad[0]), path)
    a = a.reshape((h, w, 3) if channels == 3 else (h, w))
    return np.flipud(a).copy()


def write_map(path, data) -> None:
    Path(path).write_bytes(encode_pfm(data))


def read_map(path) -> np.ndarray:
    """Read a PFM file as float32, top row first."""
    return decode_pfm(Path(path).read_bytes(), path=str(path))


def read_png_map(path) -> np.ndarray:
    """8-bit PNG to float64 in [0, 1]. Lossy; for convenience only."""
    from PIL import Image

    with Image.open(path) as im:
        a = np.asarray(im)
    if a.dtype != np.uint8:
        raise ValueError(f"{path}: expected an 8-bit image, got {a.dtype}")
    a = a.astype(np.float64) / 255.0
    if a.ndim == 3:
        a = a[..., :3]
    return a


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path: Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise BundleError(f"missing manifest {path}") from None
    except json.JSONDecodeError as e:
        raise BundleError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}") from None
    if not isinstance(obj, dict):
        raise BundleError(f"{path}: manifest must be a JSON object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise BundleError(f"{path}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    return obj


def _lights_from(obj: dict, path) -> list[Light]:
    raw = obj.get("lights")
    if not isinstance(raw, list) or not raw:
        raise BundleError(f"{path}: manifest needs a nonempty 'lights' list")
    try:
        return [light_from_dict(d) for d in raw]
    except (KeyError, TypeError, ValueError) as e:
        raise BundleError(f"{path}: bad light entry: {e}") from None


def write_bundle(directory, bundle: SceneBundle, notes: str = "") -> None:
    if not bundle.lights:
        raise BundleError("a bundle manifest needs at least one light")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {name: f"{name}.pfm" for name in MAP_NAMES}
    for name, fname in files.items():
        write_map(d / fname, getattr(bundle, name))
    _dump_json(
        d / BUNDLE_MANIFEST,
        {
            "schema_version": SCHEMA_VERSION,
            "camera": bundle.camera.to_dict(),
            "lights": [light_to_dict(lt) for lt in bundle.lights],
            "maps": files,
            "notes": notes,
        },
    )


def read_bundle(directory) -> SceneBundle:
    """Load a bundle; invariant violations are logged as warnings, not raised."""
    d = Path(directory)
    man = _load_json(d / BUNDLE_MANIFEST)
    try:
        camera = Camera.from_dict(man["camera"])
    except (KeyError, TypeError, ValueError) as e:
        raise BundleError(f"{d / BUNDLE_MANIFEST}: bad camera: {e}") from None
    lights = _lights_from(man, d / BUNDLE_MANIFEST)
    files = man.get("maps") or {}
    maps = {}
    for name in MAP_NAMES:
        fname = files.get(name, f"{name}.pfm")
        path = d / fname
        if not path.is_file():
            raise BundleError(f"missing map file {path}")
        maps[name] = read_map(path)
    for name, arr in maps.items():
        if arr.shape[:2] != camera.shape:
            raise BundleError(f"{name} map is {arr.shape[1]}x{arr.shape[0]}, camera is {camera.width}x{camera.height}")
    for name in ("albedo", "normal"):
        if maps[name].ndim != 3:
            raise BundleError(f"{name} map must have 3 channels")
    for name in ("depth", "roughness", "mask"):
        if maps[name].ndim != 2:
            raise BundleError(f"{name} map must have 1 channel")
    bundle = SceneBundle(camera=camera, lights=tuple(lights), **maps)
    violations = validate_bundle(bundle)
    if violations:
        log.warning("%s: %d invariant violations, first: %s", d, len(violations), violations[0])
    return bundle


def write_stack(directory, images: Sequence[np.ndarray], lights: Sequence[Light],
                camera: Camera | None = None, notes: str = "") -> list[str]:
    if len(images) != len(lights):
        raise ValueError("need one light per image")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = [f"img_{k:03d}.pfm" for k in range(len(images))]
    for name, im in zip(names, images):
        write_map(d / name, im)
    man = {
        "schema_version": SCHEMA_VERSION,
        "lights": [light_to_dict(lt) for lt in lights],
        "images": names,
        "notes": notes,
    }
    if camera is not None:
        man["camera"] = camera.to_dict()
    _dump_json(d / STACK_MANIFEST, man)
    return names


def read_stack(directory) -> tuple[list[np.ndarray], list[Light]]:
    d = Path(directory)
    man = _load_json(d / STACK_MANIFEST)
    lights = _lights_from(man, d / STACK_MANIFEST)
    names = man.get("images")
    if not isinstance(names, list) or len(names) != len(lights):
        raise BundleError(f"{d / STACK_MANIFEST}: 'images' must list one file per light")
    images = []
    for name in names:
        path = d / name
        if not path.is_file():
            raise BundleError(f"missing image file {path}")
        images.append(read_map(path))
    return images, lights


def read_lights(path) -> list[Light]:
    """Lights from any manifest (bundle or stack) carrying a 'lights' list."""
    return _lights_from(_load_json(Path(path)), path)


def write_solve_result(directory, result) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("normal", "albedo", "roughness", "residual", "iterations"):
        write_map(d / f"{name}.pfm", getattr(result, name))
    write_map(d / "flags.pfm", result.flags.astype(np.float64))


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)
