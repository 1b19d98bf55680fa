"""Readers and writers for the KITTI devkit PNG formats and calibration files.

Disparity and depth maps are 16-bit grayscale PNGs storing ``round(x * 256)``
with 0 marking invalid pixels. Flow fields are 16-bit RGB PNGs storing
``round(u * 64) + 2**15``, ``round(v * 64) + 2**15`` and a validity flag.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .exceptions import DomainError, FormatError, RangeError, ShapeError
from .geometry import (
    DEFAULT_DEPTH_CAP,
    CameraIntrinsics,
    DepthMap,
    DisparityMap,
    FlowField,
)

DISP_SCALE = 256.0
FLOW_SCALE = 64.0
FLOW_OFFSET = 2**15

OCCLUDED_LABEL = 1
OUT_OF_VIEW_LABEL = 2

_PNG_PARAMS = [cv2.IMWRITE_PNG_COMPRESSION, 6]


@dataclass(frozen=True, eq=False)
class ObjectMap:
    """Integer label image; 0 is background, >0 a foreground object instance."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 2:
            raise ShapeError(f"object map must be 2D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise FormatError("object labels must be integers")
        labels = labels.astype(np.int64)
        if (labels < 0).any():
            raise FormatError("object labels must be non-negative")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def background(cls, shape: tuple[int, int]) -> "ObjectMap":
        return cls(np.zeros(shape, dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def foreground(self) -> np.ndarray:
        return self.labels > 0


@dataclass(frozen=True)
class CalibrationRecord:
    camera: CameraIntrinsics
    width: int | None = None
    height: int | None = None

    @property
    def focal_length_px(self) -> float:
        return self.camera.focal_length_px

    @property
    def baseline_m(self) -> float:
        return self.camera.baseline_m


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _read_raw(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FormatError(f"{path}: file not found")
    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise FormatError(f"{path}: not a readable image file")
    return image


def _write_raw(path, image: np.ndarray) -> None:
    path = os.fspath(path)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(path, image, _PNG_PARAMS):
        raise FormatError(f"{path}: could not write image")


def _read_gray16(path) -> np.ndarray:
    raw = _read_raw(path)
    if raw.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image, got {raw.shape[2]} channels")
    if raw.dtype != np.uint16:
        raise FormatError(f"{path}: expected 16-bit samples, got {raw.dtype}")
    return raw


def _encode_positive(values: np.ndarray, valid: np.ndarray, what: str) -> np.ndarray:
    scaled = np.where(valid, values, 0.0) * DISP_SCALE
    stored = np.floor(scaled + 0.5)  # values are positive: half-up == half-away
    out_of_range = valid & ~((stored >= 1) & (stored <= 65535))
    if out_of_range.any():
        row, col = np.argwhere(out_of_range)[0]
        raise RangeError(
            f"{what} {values[row, col]!r} at pixel (x={col}, y={row}) is outside the "
            f"encodable range [1/256, 65535/256]"
        )
    return np.where(valid, stored, 0).astype(np.uint16)


def read_disparity_png(path) -> DisparityMap:
    raw = _read_gray16(path)
    valid = raw > 0
    return DisparityMap(raw.astype(np.float64) / DISP_SCALE, valid)


def write_disparity_png(disp: DisparityMap, path) -> None:
    _write_raw(path, _encode_positive(disp.values, disp.valid, "disparity"))


def read_depth_png(path, depth_cap: float | None = DEFAULT_DEPTH_CAP) -> DepthMap:
    """KITTI depth PNG (meters * 256, 0 = invalid); clamps at ``depth_cap``."""
    raw = _read_gray16(path)
    return DepthMap(raw.astype(np.float64) / DISP_SCALE, raw > 0, depth_cap=depth_cap)


def write_depth_png(depth: DepthMap, path) -> None:
    _write_raw(path, _encode_positive(depth.values, depth.valid, "depth"))


def read_flow_png(path) -> FlowField:
    raw = _read_raw(path)
    if raw.ndim != 3 or raw.shape[2] != 3:
        channels = 1 if raw.ndim == 2 else raw.shape[2]
        raise FormatError(f"{path}: expected a 3-channel flow image, got {channels} channel(s)")
    if raw.dtype != np.uint16:
        raise FormatError(f"{path}: expected 16-bit samples, got {raw.dtype}")
    rgb = raw[..., ::-1].astype(np.float64)
    u = (rgb[..., 0] - FLOW_OFFSET) / FLOW_SCALE
    v = (rgb[..., 1] - FLOW_OFFSET) / FLOW_SCALE
    return FlowField(u, v, raw[..., 0] == 1)


def write_flow_png(flow: FlowField, path) -> None:
    """Write a KITTI flow PNG.

    Displacements are stored for every pixel (also invalid ones, so that a
    decoded file re-encodes byte-identically); non-finite or unencodable
    values at invalid pixels are written as zero displacement.
    """
    channels = []
    for name, comp in (("u", flow.u), ("v", flow.v)):
        stored = round_half_away(np.where(np.isfinite(comp), comp, 0.0) * FLOW_SCALE) + FLOW_OFFSET
        in_range = (stored >= 0) & (stored <= 65535)
        bad = flow.valid & ~in_range
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise RangeError(
                f"flow {name}={comp[row, col]!r} at pixel (x={col}, y={row}) is outside "
                f"the encodable range [-512, 511.984375]"
            )
        channels.append(np.where(in_range, stored, FLOW_OFFSET).astype(np.uint16))
    channels.append(flow.valid.astype(np.uint16))
    _write_raw(path, np.stack(channels[::-1], axis=-1))


def read_object_map(path) -> ObjectMap:
    raw = _read_raw(path)
    if raw.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel label image")
    if raw.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"{path}: expected 8- or 16-bit labels, got {raw.dtype}")
    return ObjectMap(raw)


def write_object_map(obj: ObjectMap, path) -> None:
    labels = obj.labels
    if labels.max(initial=0) > 65535:
        raise RangeError("object labels exceed 16 bits")
    dtype = np.uint8 if labels.max(initial=0) < 256 else np.uint16
    _write_raw(path, labels.astype(dtype))


def write_mask_png(occluded: np.ndarray, out_of_view: np.ndarray, path) -> None:
    """Debug label image: occluded = 1, out-of-view = 2, else 0."""
    labels = np.zeros(np.shape(occluded), dtype=np.uint8)
    labels[np.asarray(occluded, dtype=bool)] = OCCLUDED_LABEL
    labels[np.asarray(out_of_view, dtype=bool)] = OUT_OF_VIEW_LABEL
    _write_raw(path, labels)


def read_mask_png(path) -> tuple[np.ndarray, np.ndarray]:
    labels = read_object_map(path).labels
    return labels == OCCLUDED_LABEL, labels == OUT_OF_VIEW_LABEL


def read_image(path) -> np.ndarray:
    """8- or 16-bit grayscale/colour image as float64 RGB (or gray) in [0, 1]."""
    raw = _read_raw(path)
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported sample type {raw.dtype}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[..., :3]
        raw = raw[..., ::-1]
    return raw.astype(np.float64) / scale


def write_image(image: np.ndarray, path) -> None:
    """Write a float image in [0, 1] as 8-bit PNG (RGB or gray)."""
    image = np.asarray(image, dtype=np.float64)
    data = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if data.ndim == 3:
        data = np.ascontiguousarray(data[..., ::-1])
    _write_raw(path, data)


_KEY_VALUE = re.compile(r"^\s*([A-Za-z_][\w.\- ]*?)\s*[:=]\s*(.*?)\s*$")

_FOCAL_KEYS = ("f", "focal", "focal_length", "focal_length_px", "fx")
_BASELINE_KEYS = ("b", "baseline", "baseline_m")
_PROJECTION_PAIRS = (
    ("P_rect_02", "P_rect_03"),
    ("P2", "P3"),
    ("P_rect_00", "P_rect_01"),
    ("P0", "P1"),
)


def _parse_numbers(text: str, key: str, path) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise FormatError(f"{path}: entry {key!r} is not numeric: {text!r}") from None


def read_calibration(path) -> CalibrationRecord:
    """Parse focal length and baseline from a ``key: value`` calibration file.

    Explicit ``f``/``baseline`` entries win. Otherwise a pair of rectified
    projection matrices (e.g. ``P_rect_02``/``P_rect_03`` or ``P2``/``P3``)
    gives ``f = P[0, 0]`` and ``B = |P_right[0, 3] - P_left[0, 3]| / f``.
    Image size comes from ``width``/``height`` or ``S_rect_02`` if present.
    """
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: cannot read calibration ({exc})") from None

    entries: dict[str, str] = {}
    for line in lines:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        match = _KEY_VALUE.match(line)
        if match is None:
            raise FormatError(f"{path}: malformed line {line!r}")
        entries[match.group(1).strip()] = match.group(2)
    lowered = {k.lower(): k for k in entries}

    def scalar(keys):
        for key in keys:
            if key in lowered:
                nums = _parse_numbers(entries[lowered[key]], key, path)
                if len(nums) != 1:
                    raise FormatError(f"{path}: entry {key!r} must hold one number")
                return nums[0]
        return None

    focal = scalar(_FOCAL_KEYS)
    baseline = scalar(_BASELINE_KEYS)
    for left, right in _PROJECTION_PAIRS:
        if left not in entries:
            continue
        p_left = _parse_numbers(entries[left], left, path)
        if len(p_left) != 12:
            raise FormatError(f"{path}: {left} must hold 12 numbers, got {len(p_left)}")
        if focal is None:
            focal = p_left[0]
        if baseline is None and right in entries:
            p_right = _parse_numbers(entries[right], right, path)
            if len(p_right) != 12:
                raise FormatError(f"{path}: {right} must hold 12 numbers, got {len(p_right)}")
            if focal == 0:
                raise DomainError(f"{path}: focal length must be positive, got 0")
            baseline = abs(p_right[3] - p_left[3]) / focal
        break

    missing = [name for name, val in (("focal length", focal), ("baseline", baseline)) if val is None]
    if missing:
        raise FormatError(f"{path}: {' and '.join(missing)} not found")

    width = scalar(("width",))
    height = scalar(("height",))
    if (width is None or height is None) and "S_rect_02" in entries:
        size = _parse_numbers(entries["S_rect_02"], "S_rect_02", path)
        if len(size) == 2:
            width, height = size
    return CalibrationRecord(
        CameraIntrinsics(focal, baseline),
        None if width is None else int(width),
        None if height is None else int(height),
    )


def write_calibration(record: CalibrationRecord, path) -> None:
    lines = [
        f"focal_length: {record.focal_length_px!r}",
        f"baseline: {record.baseline_m!r}",
    ]
    if record.width is not None and record.height is not None:
        lines += [f"width: {record.width}", f"height: {record.height}"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
