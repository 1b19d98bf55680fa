"""Closed-form planar scenes with exact depth, flow and occlusion ground truth.

A scene is a list of textured planar layers seen by a pinhole camera with
its principal point at the image centre. Each layer moves rigidly between
t1 and t2. Non-background layers are bounded patches given by an extent in
2D plane coordinates; the last layer is the unbounded background.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import SceneError
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
    FlowField,
    depth_to_disparity,
    pixel_grid,
)
from .kitti_io import ObjectMap

_EPS = 1e-9


@dataclass(frozen=True)
class PlaneLayer:
    """Plane ``normal . P = distance`` in the t1 camera frame.

    Motion maps a t1 point to ``R (P - pivot) + pivot + translation`` with
    ``R`` given as a rotation vector (radians). ``extent`` is
    ``(s_min, s_max, t_min, t_max)`` in the plane's own 2D coordinates, or
    ``None`` for an unbounded plane. Layers with ``is_object`` set are the
    foreground of the object map; everything else counts as background.
    """

    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    distance: float = 10.0
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pivot: tuple[float, float, float] = (0.0, 0.0, 0.0)
    extent: tuple[float, float, float, float] | None = None
    color: tuple[float, float, float] = (0.5, 0.5, 0.5)
    texture_scale: float = 0.5
    texture_amplitude: float = 0.25
    name: str = ""
    is_object: bool = False

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if n.shape != (3,) or not np.isfinite(norm) or norm == 0:
            raise SceneError(f"layer {self.name!r}: normal must be a non-zero 3-vector")
        object.__setattr__(self, "normal", tuple(n / norm))
        object.__setattr__(self, "distance", float(self.distance) / norm)
        if self.extent is not None:
            s0, s1, t0, t1 = map(float, self.extent)
            if not (s0 < s1 and t0 < t1):
                raise SceneError(f"layer {self.name!r}: empty extent {self.extent}")
        if self.texture_scale <= 0:
            raise SceneError(f"layer {self.name!r}: texture_scale must be positive")

    @property
    def is_static(self) -> bool:
        return not (np.any(self.rotation) or np.any(self.translation))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_rotvec(np.asarray(self.rotation, dtype=np.float64)).as_matrix()

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal in-plane axes; (X, Y) for a fronto-parallel plane."""
        n = np.asarray(self.normal)
        helper = np.array([0.0, 0.0, 1.0]) if abs(n[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(helper, n)
        e1 /= np.linalg.norm(e1)
        return e1, np.cross(n, e1)

    def move(self, points: np.ndarray) -> np.ndarray:
        pivot = np.asarray(self.pivot)
        return (points - pivot) @ self.rotation_matrix.T + pivot + np.asarray(self.translation)

    def unmove(self, points: np.ndarray) -> np.ndarray:
        pivot = np.asarray(self.pivot)
        return (points - pivot - np.asarray(self.translation)) @ self.rotation_matrix + pivot

    def plane_at(self, time: int) -> tuple[np.ndarray, float]:
        n = np.asarray(self.normal)
        if time == 0:
            return n, self.distance
        pivot = np.asarray(self.pivot)
        n2 = self.rotation_matrix @ n
        return n2, self.distance - n @ pivot + n2 @ (pivot + np.asarray(self.translation))


@dataclass(frozen=True)
class SynthScene:
    camera: CameraIntrinsics
    width: int
    height: int
    layers: tuple[PlaneLayer, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise SceneError(f"image size must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise SceneError("background layer required")
        if self.layers[-1].extent is not None:
            raise SceneError("background layer required: the last layer must be unbounded")

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0


@dataclass(frozen=True, eq=False)
class RenderedScene:
    image_1: np.ndarray
    image_2: np.ndarray
    depth_1: DepthMap
    depth_2: DepthMap
    flow: FlowField
    occlusion: np.ndarray
    out_of_view: np.ndarray
    depth_2_registered: np.ndarray
    objects: ObjectMap
    camera: CameraIntrinsics

    @property
    def disparity_1(self):
        return depth_to_disparity(self.depth_1, self.camera)

    @property
    def disparity_2(self):
        return depth_to_disparity(self.depth_2, self.camera)

    @property
    def disparity_2_registered(self):
        return DisparityMap(self.camera.fb / self.depth_2_registered)


def _rays(scene: SynthScene, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    cx, cy = scene.principal_point
    f = scene.camera.focal_length_px
    return np.stack([(x - cx) / f, (y - cy) / f, np.ones_like(x)], axis=-1)


def _intersect(layer: PlaneLayer, rays: np.ndarray, time: int):
    """Depth of the ray/plane hit and whether it lies on the layer patch.

    Returns ``(z, hit, material)`` where ``material`` holds the t1 position
    of the hit point (used for extents and textures).
    """
    n, dist = layer.plane_at(time)
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(np.abs(denom) > _EPS, dist / denom, np.nan)
    points = rays * z[..., None]
    material = points if time == 0 else layer.unmove(points)
    inside = np.isfinite(z)
    if layer.extent is not None:
        e1, e2 = layer.basis()
        s = material @ e1
        t = material @ e2
        s0, s1, t0, t1 = layer.extent
        inside &= (s >= s0) & (s <= s1) & (t >= t0) & (t <= t1)
    if np.any(inside & ~(z > 0)):
        raise SceneError(f"layer {layer.name!r} is behind the camera at t{time + 1}")
    return np.where(inside, z, np.inf), inside, material


def _hash_noise(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice values in [0, 1) from integer coordinates."""
    with np.errstate(over="ignore"):
        h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)) ^ (
            iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        )
        h ^= np.uint64(seed & 0xFFFFFFFF) * np.uint64(0x165667B19E3779F9)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _value_noise(s: np.ndarray, t: np.ndarray, seed: int) -> np.ndarray:
    s0, t0 = np.floor(s), np.floor(t)
    fs, ft = s - s0, t - t0
    fs = fs * fs * (3 - 2 * fs)
    ft = ft * ft * (3 - 2 * ft)
    i0 = s0.astype(np.int64)
    j0 = t0.astype(np.int64)
    v00 = _hash_noise(i0, j0, seed)
    v10 = _hash_noise(i0 + 1, j0, seed)
    v01 = _hash_noise(i0, j0 + 1, seed)
    v11 = _hash_noise(i0 + 1, j0 + 1, seed)
    return (v00 * (1 - fs) + v10 * fs) * (1 - ft) + (v01 * (1 - fs) + v11 * fs) * ft


def _texture(layer: PlaneLayer, index: int, material: np.ndarray, seed: int) -> np.ndarray:
    e1, e2 = layer.basis()
    s = material @ e1 / layer.texture_scale
    t = material @ e2 / layer.texture_scale
    noise = np.zeros(s.shape)
    for octave, amp in enumerate((0.6, 0.3, 0.1)):
        k = 2.0**octave
        noise += amp * _value_noise(s * k, t * k, seed * 7919 + index * 104729 + octave)
    color = np.asarray(layer.color, dtype=np.float64)
    return np.clip(color + layer.texture_amplitude * (noise[..., None] - 0.5), 0.0, 1.0)


def _render_time(scene: SynthScene, rays: np.ndarray, time: int):
    depth = np.full(rays.shape[:2], np.inf)
    owner = np.full(rays.shape[:2], -1, dtype=np.int64)
    image = np.zeros(rays.shape[:2] + (3,))
    materials = []
    for k, layer in enumerate(scene.layers):
        z, _, material = _intersect(layer, rays, time)
        closer = z < depth
        depth = np.where(closer, z, depth)
        owner = np.where(closer, k, owner)
        materials.append(material)
    if np.any(owner < 0) or not np.all(np.isfinite(depth)):
        raise SceneError(f"background layer does not cover the image at t{time + 1}")
    for k, layer in enumerate(scene.layers):
        sel = owner == k
        if sel.any():
            image[sel] = _texture(layer, k, materials[k][sel], scene.seed)
    return depth, owner, image


def render(scene: SynthScene) -> RenderedScene:
    """Render both frames, the flow and the occlusion ground truth.

    A t1 point is out of view when its t2 projection leaves
    ``[0, W-1] x [0, H-1]`` and occluded when, inside the view, another
    layer is strictly closer along the ray through that projection.
    """
    x, y = pixel_grid(scene.shape)
    rays = _rays(scene, x, y)
    depth_1, owner_1, image_1 = _render_time(scene, rays, 0)
    depth_2, _, image_2 = _render_time(scene, rays, 1)

    f = scene.camera.focal_length_px
    cx, cy = scene.principal_point
    points_1 = rays * depth_1[..., None]
    points_2 = np.zeros_like(points_1)
    for k, layer in enumerate(scene.layers):
        sel = owner_1 == k
        points_2[sel] = layer.move(points_1[sel])
    z2 = points_2[..., 2]
    if np.any(z2 <= 0):
        raise SceneError("a visible point moves behind the camera")
    x2 = f * points_2[..., 0] / z2 + cx
    y2 = f * points_2[..., 1] / z2 + cy
    # motionless layers map every pixel onto itself; skip the projection round-off
    for k, layer in enumerate(scene.layers):
        if layer.is_static:
            sel = owner_1 == k
            x2[sel], y2[sel], z2[sel] = x[sel], y[sel], depth_1[sel]
    flow = FlowField(x2 - x, y2 - y, np.ones(scene.shape, dtype=bool))

    h, w = scene.shape
    out_of_view = ~((x2 >= 0) & (x2 <= w - 1) & (y2 >= 0) & (y2 <= h - 1))
    rays_2 = _rays(scene, x2, y2)
    occlusion = np.zeros(scene.shape, dtype=bool)
    for k, layer in enumerate(scene.layers):
        z, _, _ = _intersect(layer, rays_2, 1)
        occlusion |= (owner_1 != k) & (z < z2 * (1 - 1e-9))
    occlusion &= ~out_of_view

    labels = np.zeros(scene.shape, dtype=np.int64)
    object_ids = [k for k, layer in enumerate(scene.layers) if layer.is_object]
    for label, k in enumerate(object_ids, 1):
        labels[owner_1 == k] = label
    return RenderedScene(
        image_1=image_1,
        image_2=image_2,
        depth_1=DepthMap(depth_1, depth_cap=None),
        depth_2=DepthMap(depth_2, depth_cap=None),
        flow=flow,
        occlusion=occlusion,
        out_of_view=out_of_view,
        depth_2_registered=z2,
        objects=ObjectMap(labels),
        camera=scene.camera,
    )


def perturb(flow: FlowField, noise_px: float, seed: int) -> FlowField:
    """Add uniform noise in ``[-noise_px, noise_px]`` to both flow components."""
    if not noise_px >= 0:
        raise ValueError(f"noise_px must be non-negative, got {noise_px}")
    rng = np.random.default_rng(seed)
    du = rng.uniform(-noise_px, noise_px, flow.shape)
    dv = rng.uniform(-noise_px, noise_px, flow.shape)
    return FlowField(flow.u + du, flow.v + dv, flow.valid)


KITTI_CAMERA = CameraIntrinsics(721.5377, 0.5327)
KITTI_SIZE = (1242, 375)


def fronto_parallel(depth, tx=0.0, ty=0.0, tz=0.0, extent=None, **kwargs) -> PlaneLayer:
    return PlaneLayer(
        normal=(0.0, 0.0, 1.0), distance=depth, translation=(tx, ty, tz), extent=extent, **kwargs
    )


def two_layer_scene(
    fg_flow: float = 30.0,
    bg_flow: float = 5.0,
    width: int = 1242,
    height: int = 375,
    seed: int = 0,
) -> SynthScene:
    """A fronto-parallel box translating horizontally over a far wall.

    Flows are integral whenever ``fg_flow``/``bg_flow`` are, so the rounding
    in occlusion detection is exact; the occluded band next to the box is
    ``fg_flow - bg_flow`` pixels wide.
    """
    f = 720.0
    cam = CameraIntrinsics(f, 0.54)
    z_bg, z_fg = 36.0, 12.0
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    # box edges on half-pixel positions so that no pixel centre sits on an edge
    x0, x1 = np.floor(cx - width / 4) + 0.5, np.floor(cx + width / 4) + 0.5
    y0, y1 = np.floor(cy - height / 4) + 0.5, np.floor(cy + height / 4) + 0.5
    extent = tuple(float(v) * z_fg / f for v in (x0 - cx, x1 - cx, y0 - cy, y1 - cy))
    layers = (
        fronto_parallel(
            z_fg, tx=fg_flow * z_fg / f, extent=extent,
            color=(0.8, 0.3, 0.2), name="box", is_object=True,
        ),
        fronto_parallel(z_bg, tx=bg_flow * z_bg / f, color=(0.3, 0.5, 0.7), name="wall"),
    )
    return SynthScene(cam, width, height, layers, seed)


def kitti_like_scene(seed: int = 0, ego_forward: float = 1.0) -> SynthScene:
    """Forward-driving camera: road, two facades, a far wall and two cars."""
    ego = (0.0, 0.0, -ego_forward)
    w, h = KITTI_SIZE
    layers = (
        PlaneLayer((0, 0, 1), 9.0, translation=(0.3, 0.0, -0.3), extent=(-3.6, -0.4, -0.2, 1.65),
                   color=(0.7, 0.1, 0.1), name="car_oncoming", is_object=True),
        PlaneLayer((0, 0, 1), 16.0, translation=(0.0, 0.0, -0.4), extent=(1.6, 3.5, 0.1, 1.65),
                   color=(0.2, 0.2, 0.7), name="car_ahead", is_object=True),
        PlaneLayer((0, 1, 0), 1.65, translation=ego, extent=(-12.0, 12.0, 2.0, 80.0),
                   color=(0.35, 0.35, 0.35), texture_scale=0.3, name="road"),
        PlaneLayer((1, 0, 0), -9.0, translation=ego, extent=(-80.0, -3.0, -12.0, 1.65),
                   color=(0.6, 0.5, 0.3), texture_scale=0.8, name="facade_left"),
        PlaneLayer((1, 0, 0), 10.0, translation=ego, extent=(-80.0, -3.0, -12.0, 1.65),
                   color=(0.5, 0.6, 0.4), texture_scale=0.8, name="facade_right"),
        PlaneLayer((0, 0, 1), 60.0, translation=ego, color=(0.6, 0.75, 0.9),
                   texture_scale=2.0, name="far"),
    )
    return SynthScene(KITTI_CAMERA, w, h, layers, seed)
