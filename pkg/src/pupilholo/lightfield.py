"""4D light fields and the incoherent photographic projection.

A light field is stored as a grid of view images. View ``(i, j)`` is the
radiance seen through a pinhole at pupil-plane position ``q_ij``. Refocusing
to defocus ``z`` translates every view by ``(z / f) * q`` on the detector and
averages the views whose centers lie inside the pupil disc.

Depth convention: a scene point at depth ``z0`` appears in view ``q`` at
``-(z0 / f) * q`` relative to its central position, so refocusing with
``z = z0`` re-aligns it. Larger depth means closer to the viewer.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import cv2
import numpy as np

from .errors import (EmptyApertureError, InconsistentResolutionError,
                     MetadataError, MissingViewError)
from .optics import OpticalConfig, PupilState

META_NAME = "meta.json"
_META_KEYS = {"grid", "eyebox_mm", "image_pattern", "gamma"}


@dataclass(frozen=True, eq=False)
class LightField:
    """Views ``(Vy, Vx, rows, cols, channels)`` with pupil coordinates ``(Vy, Vx, 2)``.

    ``view_coords[..., 0]`` is the horizontal (x) pupil position, ``[..., 1]``
    the vertical one, both in meters.
    """

    views: np.ndarray
    view_coords: np.ndarray
    eyebox: Tuple[float, float]

    def __post_init__(self):
        views = np.asarray(self.views)
        if views.ndim == 4:
            views = views[..., None]
        if views.ndim != 5:
            raise ValueError("views must have shape (Vy, Vx, rows, cols[, channels])")
        if np.any(views < 0):
            raise ValueError("light-field intensities must be non-negative")
        views.setflags(write=False)
        coords = np.asarray(self.view_coords, dtype=np.float64)
        if coords.shape != views.shape[:2] + (2,):
            raise ValueError("view_coords must have shape (Vy, Vx, 2)")
        coords.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "view_coords", coords)
        object.__setattr__(self, "eyebox", (float(self.eyebox[0]), float(self.eyebox[1])))

    @classmethod
    def regular(cls, views, eyebox: Tuple[float, float]) -> "LightField":
        """Build a light field whose views span ``eyebox = (h, w)`` uniformly."""
        views = np.asarray(views)
        return cls(views, regular_view_coords(views.shape[:2], eyebox), eyebox)

    @property
    def grid(self) -> Tuple[int, int]:
        return self.views.shape[:2]

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.views.shape[2:4]

    @property
    def n_channels(self) -> int:
        return self.views.shape[4]

    def downsample(self, factor: int) -> "LightField":
        """Box-average every view by an integer factor per axis."""
        if factor == 1:
            return self
        vy, vx, h, w, c = self.views.shape
        if h % factor or w % factor:
            raise ValueError(f"resolution {h}x{w} not divisible by {factor}")
        small = self.views.reshape(vy, vx, h // factor, factor, w // factor, factor, c).mean(axis=(3, 5))
        return LightField(small, self.view_coords, self.eyebox)


@dataclass(frozen=True, eq=False)
class TargetImage:
    intensity: np.ndarray
    pupil: PupilState
    channel: int


def regular_view_coords(grid: Sequence[int], eyebox: Tuple[float, float]) -> np.ndarray:
    """Pupil positions of a ``grid`` of views spanning ``eyebox`` edge to edge."""
    vy, vx = grid

    def axis(n, width):
        if n == 1:
            return np.zeros(1)
        return (np.arange(n) - (n - 1) / 2.0) * (width / (n - 1))

    ys, xs = np.meshgrid(axis(vy, eyebox[0]), axis(vx, eyebox[1]), indexing="ij")
    return np.stack([xs, ys], axis=-1)


def views_in_pupil(L: LightField, pupil: PupilState) -> np.ndarray:
    """Boolean ``(Vy, Vx)`` selection of views strictly inside the pupil disc."""
    dq = L.view_coords - np.asarray(pupil.shift)
    return np.hypot(dq[..., 0], dq[..., 1]) < pupil.d / 2.0


def shift_bilinear(img: np.ndarray, dy: float, dx: float, wrap: bool = False) -> np.ndarray:
    """Translate ``img`` content by ``(dy, dx)`` pixels: ``out(r) = img(r - d)``.

    Bilinear interpolation; outside samples are zero unless ``wrap``.
    """
    out = _shift_axis(img, dx, axis=1, wrap=wrap)
    return _shift_axis(out, dy, axis=0, wrap=wrap)


def _shift_axis(img, d, axis, wrap):
    i = math.floor(d)
    frac = d - i
    a = _shift_int(img, i, axis, wrap)
    if frac == 0.0:
        return a
    b = _shift_int(img, i + 1, axis, wrap)
    return (1.0 - frac) * a + frac * b


def _shift_int(img, k, axis, wrap):
    if wrap:
        return np.roll(img, k, axis=axis)
    n = img.shape[axis]
    out = np.zeros_like(img)
    if abs(k) >= n:
        return out
    src = [slice(None)] * img.ndim
    dst = [slice(None)] * img.ndim
    if k >= 0:
        src[axis] = slice(0, n - k)
        dst[axis] = slice(k, n)
    else:
        src[axis] = slice(-k, n)
        dst[axis] = slice(0, n + k)
    out[tuple(dst)] = img[tuple(src)]
    return out


def _shift_weight_1d(n, d):
    return _shift_axis(np.ones(n), d, axis=0, wrap=False)


def project_lightfield(L: LightField, pupil: PupilState, channel: int, config: OpticalConfig,
                       detector_pitch: Optional[float] = None) -> TargetImage:
    """Synthetic photograph of ``L`` through ``pupil``.

    Every view whose center lies inside the pupil is translated by
    ``(z / f) * q_k`` and the translated views are averaged. Pixels near the
    border are normalized by the bilinear coverage of the views that reach
    them, so edges are not darkened.
    """
    if not 0 <= channel < L.n_channels:
        raise IndexError(f"channel {channel} out of range")
    pitch = config.detector_pitch if detector_pitch is None else detector_pitch
    inside = views_in_pupil(L, pupil)
    if not inside.any():
        raise EmptyApertureError(pupil)

    h, w = L.resolution
    acc = np.zeros((h, w))
    cover = np.zeros((h, w))
    scale = pupil.z / config.focal_length / pitch
    for iy, ix in zip(*np.nonzero(inside)):
        qx, qy = L.view_coords[iy, ix]
        dy, dx = scale * qy, scale * qx
        acc += shift_bilinear(L.views[iy, ix, :, :, channel].astype(np.float64), dy, dx)
        cover += np.outer(_shift_weight_1d(h, dy), _shift_weight_1d(w, dx))
    out = np.divide(acc, cover, out=np.zeros_like(acc), where=cover > 1e-12)
    return TargetImage(out, pupil, channel)


# --- directory format ---------------------------------------------------------

def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1 / 2.4) - 0.055)


def read_png(path: str) -> np.ndarray:
    """Read an 8- or 16-bit PNG as floats in [0, 1], channels last (RGB order)."""
    img = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"cannot read image {path}")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise OSError(f"unsupported PNG sample type {img.dtype} in {path}")
    if img.ndim == 3:
        img = img[..., :3][..., ::-1] if img.shape[2] >= 3 else img
    else:
        img = img[..., None]
    return img.astype(np.float64) / scale


def write_png(path: str, img: np.ndarray, bits: int = 8) -> None:
    """Write floats in [0, 1] (2D or channels-last RGB) as an 8/16-bit PNG."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        data = np.round(img * 255.0).astype(np.uint8)
    elif bits == 16:
        data = np.round(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError("bits must be 8 or 16")
    if data.ndim == 3:
        data = data[..., 0] if data.shape[2] == 1 else data[..., ::-1]
    if not cv2.imwrite(path, np.ascontiguousarray(data)):
        raise OSError(f"cannot write {path}")


def load_lightfield(path: str, gamma: Optional[str] = None) -> LightField:
    """Load a light-field directory (``meta.json`` plus one PNG per view).

    ``gamma`` overrides the metadata's decoding (``"srgb"`` or ``"linear"``).
    """
    meta_path = os.path.join(path, META_NAME)
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise MetadataError(f"missing {META_NAME} in {path}") from None
    except json.JSONDecodeError as exc:
        raise MetadataError(f"malformed {meta_path}: {exc}") from None
    if not isinstance(meta, dict):
        raise MetadataError(f"{meta_path}: expected an object")
    unknown = set(meta) - _META_KEYS
    if unknown:
        raise MetadataError(f"{meta_path}: unknown keys {sorted(unknown)}")
    try:
        vy, vx = (int(v) for v in meta["grid"])
        eyebox = tuple(float(v) * 1e-3 for v in meta["eyebox_mm"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MetadataError(f"{meta_path}: need grid [Vy, Vx] and eyebox_mm [h, w] ({exc})") from None
    if vy < 1 or vx < 1 or len(eyebox) != 2 or min(eyebox) <= 0:
        raise MetadataError(f"{meta_path}: invalid grid or eyebox")
    pattern = meta.get("image_pattern", "view_{row}_{col}.png")
    gamma = gamma or meta.get("gamma", "srgb")
    if gamma not in ("srgb", "linear"):
        raise MetadataError(f"{meta_path}: gamma must be 'srgb' or 'linear'")

    missing = []
    for row in range(vy):
        for col in range(vx):
            file = os.path.join(path, pattern.format(row=row, col=col))
            if not os.path.isfile(file):
                missing.append(((row, col), file))
    if missing:
        raise MissingViewError(*missing[0])

    views = None
    for row in range(vy):
        for col in range(vx):
            img = read_png(os.path.join(path, pattern.format(row=row, col=col)))
            if gamma == "srgb":
                img = srgb_to_linear(img)
            if views is None:
                views = np.empty((vy, vx) + img.shape)
            elif img.shape != views.shape[2:]:
                raise InconsistentResolutionError(
                    f"view ({row}, {col}) has shape {img.shape}, expected {views.shape[2:]}")
            views[row, col] = img
    return LightField.regular(views, eyebox)


def save_lightfield(L: LightField, path: str, bits: int = 16, gamma: str = "linear") -> None:
    """Write ``L`` in the directory format read by :func:`load_lightfield`."""
    os.makedirs(path, exist_ok=True)
    pattern = "view_{row}_{col}.png"
    meta = {"grid": list(L.grid), "eyebox_mm": [e * 1e3 for e in L.eyebox],
            "image_pattern": pattern, "gamma": gamma}
    with open(os.path.join(path, META_NAME), "w") as fh:
        json.dump(meta, fh, indent=2)
    for row in range(L.grid[0]):
        for col in range(L.grid[1]):
            img = L.views[row, col]
            if gamma == "srgb":
                img = linear_to_srgb(img)
            write_png(os.path.join(path, pattern.format(row=row, col=col)), img, bits=bits)
