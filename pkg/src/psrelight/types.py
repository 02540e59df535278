"""Value types and the camera-centric coordinate convention.

Maps are plain numpy arrays indexed ``[row, col]`` (top-left origin, y down):

* colour maps (albedo, images): ``(H, W, 3)`` float
* scalar maps (depth, roughness, mask): ``(H, W)`` float
* normal maps: ``(H, W, 3)`` unit vectors

The camera sits at the origin looking down ``-z`` with ``+x`` right and ``+y``
down, so an object straight ahead at unit distance is at ``(0, 0, -1)``.
Depth is the radial distance from the camera centre to the surface point.
Normals are stored camera-facing: ``dot(n, -P) >= 0`` for surface point ``P``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

R_MIN = 0.01

_UNIT_TOL = 1e-6


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Camera:
    """Perspective pinhole camera with its centre at the origin."""

    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError(f"focal length must be positive, got {self.focal}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (0 <= self.cx <= self.width - 1 and 0 <= self.cy <= self.height - 1):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    @classmethod
    def centered(cls, width: int, height: int | None = None, fov_deg: float = 40.0) -> "Camera":
        """Camera with the principal point on pixel ``(width // 2, height // 2)``.

        ``fov_deg`` is the horizontal field of view.
        """
        height = width if height is None else height
        focal = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
        return cls(float(focal), float(width // 2), float(height // 2), int(width), int(height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def ray_directions(self) -> np.ndarray:
        """Unit ray direction through every pixel centre, shape ``(H, W, 3)``."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        return _ray(self, u, v)

    def to_dict(self) -> dict:
        return {
            "focal": self.focal,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(float(d["focal"]), float(d["cx"]), float(d["cy"]), int(d["width"]), int(d["height"]))


def _ray(camera: Camera, u, v):
    d = np.stack(
        np.broadcast_arrays(
            np.asarray(u, dtype=np.float64) - camera.cx,
            np.asarray(v, dtype=np.float64) - camera.cy,
            np.full(np.shape(u), -camera.focal),
        ),
        axis=-1,
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def unproject(camera: Camera, pixel, depth) -> np.ndarray:
    """Surface point at radial distance ``depth`` along the ray through ``pixel``.

    ``pixel`` is ``(u, v)`` (column, row); both arguments broadcast, so whole
    grids can be unprojected at once.
    """
    u, v = pixel
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("depth must be strictly positive")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any((u < 0) | (u > camera.width - 1) | (v < 0) | (v > camera.height - 1)):
        raise ValueError("pixel outside the image")
    return _ray(camera, u, v) * depth[..., None]


def project(camera: Camera, point) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates ``(u, v)`` of camera-frame points (``z < 0``)."""
    p = np.asarray(point, dtype=np.float64)
    if np.any(p[..., 2] >= 0):
        raise ValueError("points must lie in front of the camera (z < 0)")
    s = camera.focal / -p[..., 2]
    return camera.cx + s * p[..., 0], camera.cy + s * p[..., 1]


def surface_points(camera: Camera, depth: np.ndarray) -> np.ndarray:
    """Unproject a whole depth map without the positivity check (background may be 0)."""
    return camera.ray_directions() * np.asarray(depth, dtype=np.float64)[..., None]


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        pos = _frozen(self.position)
        inten = _frozen(np.broadcast_to(np.asarray(self.intensity, dtype=np.float64), (3,)))
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError(f"light position must be a finite 3-vector, got {self.position!r}")
        if not np.all(np.isfinite(inten)) or np.any(inten < 0):
            raise ValueError(f"light intensity must be finite and nonnegative, got {self.intensity!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "intensity", inten)

    def scaled(self, k: float) -> "PointLight":
        return PointLight(self.position, self.intensity * k)

    def __eq__(self, other):
        return (
            isinstance(other, PointLight)
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.intensity, other.intensity)
        )

    def __hash__(self):
        return hash((self.position.tobytes(), self.intensity.tobytes()))


@dataclass(frozen=True)
class EnvLight:
    """Second-order spherical-harmonic environment.

    ``coefficients`` has shape ``(3, 9)``: one row per colour channel, bands in
    order (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
    A flat sequence of 27 values is read channel by channel.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.size != 27:
            raise ValueError(f"expected 27 SH coefficients, got {c.size}")
        c = _frozen(c.reshape(3, 9))
        if not np.all(np.isfinite(c)):
            raise ValueError("SH coefficients must be finite")
        object.__setattr__(self, "coefficients", c)

    def __eq__(self, other):
        return isinstance(other, EnvLight) and np.array_equal(self.coefficients, other.coefficients)

    def __hash__(self):
        return hash(self.coefficients.tobytes())


Light = Union[PointLight, EnvLight]


def light_to_dict(light: Light) -> dict:
    if isinstance(light, PointLight):
        return {
            "type": "point",
            "position": light.position.tolist(),
            "intensity": light.intensity.tolist(),
        }
    return {"type": "env", "coefficients": light.coefficients.ravel().tolist()}


def light_from_dict(d: dict) -> Light:
    kind = d.get("type")
    if kind == "point":
        return PointLight(d["position"], d.get("intensity", [1.0, 1.0, 1.0]))
    if kind == "env":
        return EnvLight(d["coefficients"])
    raise ValueError(f"unknown light type {kind!r}")


@dataclass(frozen=True)
class SceneGeometry:
    """What the inverse solver needs to know about a scene besides the images."""

    depth: np.ndarray
    mask: np.ndarray
    camera: Camera


@dataclass(frozen=True)
class SceneBundle:
    albedo: np.ndarray
    normal: np.ndarray
    depth: np.ndarray
    roughness: np.ndarray
    mask: np.ndarray
    camera: Camera
    lights: tuple = ()

    def __post_init__(self):
        for name in ("albedo", "normal", "depth", "roughness", "mask"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "lights", tuple(self.lights))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def geometry(self) -> SceneGeometry:
        return SceneGeometry(self.depth, self.mask, self.camera)

    def replace(self, **changes) -> "SceneBundle":
        fields = {
            k: getattr(self, k)
            for k in ("albedo", "normal", "depth", "roughness", "mask", "camera", "lights")
        }
        fields.update(changes)
        return SceneBundle(**fields)


@dataclass(frozen=True)
class Violation:
    map: str
    pixel: tuple[int, int] | None  # (u, v) = (column, row)
    rule: str

    def __str__(self):
        where = "" if self.pixel is None else f" at pixel {self.pixel}"
        return f"{self.map}{where}: {self.rule}"


def _pixels(bad: np.ndarray) -> list[tuple[int, int]]:
    return [(int(c), int(r)) for r, c in np.argwhere(bad)]


def validate_bundle(bundle: SceneBundle) -> list[Violation]:
    """Check every map against its role's invariants. Returns ``[]`` when valid."""
    out: list[Violation] = []
    cam = bundle.camera
    hw = (cam.height, cam.width)
    expected = {
        "albedo": hw + (3,),
        "normal": hw + (3,),
        "depth": hw,
        "roughness": hw,
        "mask": hw,
    }
    shape_ok = True
    for name, shp in expected.items():
        got = getattr(bundle, name).shape
        if got != shp:
            out.append(Violation(name, None, f"shape {got} does not match camera, expected {shp}"))
            shape_ok = False
    if not shape_ok:
        return out

    for name in expected:
        arr = getattr(bundle, name)
        bad = ~np.isfinite(arr)
        if arr.ndim == 3:
            bad = bad.any(axis=-1)
        out += [Violation(name, p, "non-finite value") for p in _pixels(bad)]

    mask = bundle.mask
    out += [Violation("mask", p, "mask value not in {0, 1}") for p in _pixels(~np.isin(mask, (0.0, 1.0)))]
    m = mask == 1

    with np.errstate(invalid="ignore"):
        alb = bundle.albedo
        bad = ((alb < 0) | (alb > 1)).any(axis=-1)
        out += [Violation("albedo", p, "albedo channel outside [0, 1]") for p in _pixels(bad)]

        r = bundle.roughness
        bad = m & ((r < R_MIN) | (r > 1))
        out += [Violation("roughness", p, f"roughness outside [{R_MIN}, 1]") for p in _pixels(bad)]

        depth = bundle.depth
        bad = m & ~(depth > 0)
        out += [Violation("depth", p, "depth not positive under mask") for p in _pixels(bad)]

        n = bundle.normal
        norm = np.linalg.norm(n, axis=-1)
        bad = m & ~(np.abs(norm - 1) <= _UNIT_TOL)
        out += [Violation("normal", p, f"normal norm deviates from 1 by more than {_UNIT_TOL}") for p in _pixels(bad)]

        view = -cam.ray_directions()
        bad = m & ~(np.einsum("...i,...i->...", n, view) >= -_UNIT_TOL)
        out += [Violation("normal", p, "normal faces away from the camera") for p in _pixels(bad)]
    return out

