"""Procedural multi-plane scenes rendered into light fields.

A scene is a dict (usually parsed from JSON)::

    {
      "grid": [5, 5],                 # views per axis
      "resolution": [256, 256],       # optional, defaults to the SLM resolution
      "eyebox_mm": [22, 22],          # optional, defaults to the smallest eyebox
      "background": 0.0,
      "planes": [
        {"depth_mm": 0, "texture": "checker:32", "mask": "full", "color": [1, 1, 1]},
        {"depth_mm": 4, "texture": "noise:3:6", "mask": {"rect": [64, 64, 192, 128]}}
      ],
      "points": [{"depth_mm": 10, "position_px": [128, 128], "intensity": 1.0}]
    }

Texture ids: ``checker:<square px>``, ``stripes:<period px>[:vertical]``,
``noise:<seed>[:<blur px>]``, ``constant:<value>`` or a PNG path. Masks:
``"full"``, ``{"rect": [r0, c0, r1, c1]}``, ``{"disc": [row, col, radius]}`` or
a PNG path (alpha from luminance).

Textures are periodic over the image and wrap when shifted; masks do not.
Items are composited back to front in order of increasing depth.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .lightfield import LightField, read_png, regular_view_coords, shift_bilinear
from .optics import OpticalConfig

_PLANE_KEYS = {"depth_mm", "texture", "mask", "color"}
_POINT_KEYS = {"depth_mm", "position_px", "intensity"}
_SCENE_KEYS = {"grid", "resolution", "eyebox_mm", "background", "planes", "points", "channels"}


def make_texture(spec, shape) -> np.ndarray:
    h, w = shape
    if not isinstance(spec, str):
        raise ConfigError(f"texture must be a string, got {spec!r}", "texture")
    name, _, args = spec.partition(":")
    args = [a for a in args.split(":") if a]
    rows, cols = np.mgrid[0:h, 0:w]
    if name == "checker":
        size = int(args[0]) if args else 16
        return (((rows // size) + (cols // size)) % 2).astype(np.float64) * 0.8 + 0.2
    if name == "stripes":
        period = float(args[0]) if args else 16.0
        coord = rows if len(args) > 1 and args[1] == "vertical" else cols
        return 0.5 + 0.4 * np.cos(2 * np.pi * coord / period)
    if name == "noise":
        seed = int(args[0]) if args else 0
        blur = float(args[1]) if len(args) > 1 else 4.0
        rng = np.random.default_rng(seed)
        tex = ndimage.gaussian_filter(rng.random((h, w)), blur, mode="wrap")
        tex -= tex.min()
        peak = tex.max()
        return 0.15 + 0.85 * (tex / peak if peak > 0 else tex)
    if name == "constant":
        return np.full((h, w), float(args[0]) if args else 1.0)
    img = read_png(spec)
    if img.shape[:2] != (h, w):
        raise ConfigError(f"texture {spec} has shape {img.shape[:2]}, expected {(h, w)}", "texture")
    return img.mean(axis=2)


def make_mask(spec, shape) -> np.ndarray:
    h, w = shape
    if spec is None or spec == "full":
        return np.ones((h, w))
    if isinstance(spec, dict):
        rows, cols = np.mgrid[0:h, 0:w]
        if "rect" in spec:
            r0, c0, r1, c1 = spec["rect"]
            return ((rows >= r0) & (rows < r1) & (cols >= c0) & (cols < c1)).astype(np.float64)
        if "disc" in spec:
            r, c, rad = spec["disc"]
            return (np.hypot(rows - r, cols - c) < rad).astype(np.float64)
        raise ConfigError(f"unknown mask {spec!r}", "mask")
    if isinstance(spec, str):
        img = read_png(spec)
        if img.shape[:2] != (h, w):
            raise ConfigError(f"mask {spec} has shape {img.shape[:2]}, expected {(h, w)}", "mask")
        return img.mean(axis=2)
    raise ConfigError(f"unknown mask {spec!r}", "mask")


def _splat(shape, row, col):
    out = np.zeros(shape)
    r0, c0 = math.floor(row), math.floor(col)
    fr, fc = row - r0, col - c0
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            r, c = r0 + dr, c0 + dc
            if 0 <= r < shape[0] and 0 <= c < shape[1] and wr * wc > 0:
                out[r, c] += wr * wc
    return out


def synthesize_test_scene(scene: dict, config: OpticalConfig,
                          detector_pitch: float | None = None) -> LightField:
    """Render a light field of textured fronto-parallel planes and point sources."""
    unknown = set(scene) - _SCENE_KEYS
    if unknown:
        raise ConfigError(f"unknown scene keys {sorted(unknown)}", "scene")
    pitch = config.detector_pitch if detector_pitch is None else detector_pitch
    f = config.focal_length
    grid = tuple(int(v) for v in scene.get("grid", (5, 5)))
    shape = tuple(int(v) for v in scene.get("resolution", config.slm_resolution))
    n_ch = int(scene.get("channels", config.n_channels))
    if "eyebox_mm" in scene:
        eyebox = tuple(float(v) * 1e-3 for v in scene["eyebox_mm"])
    else:
        eyebox = (config.min_eyebox, config.min_eyebox)
    background = float(scene.get("background", 0.0))
    if background < 0:
        raise ConfigError("negative background intensity", "scene.background")

    items = []
    for k, plane in enumerate(scene.get("planes", [])):
        bad = set(plane) - _PLANE_KEYS
        if bad:
            raise ConfigError(f"unknown keys {sorted(bad)}", f"scene.planes[{k}]")
        color = np.broadcast_to(np.asarray(plane.get("color", 1.0), dtype=np.float64), (n_ch,))
        tex = make_texture(plane.get("texture", "constant:1"), shape)
        mask = make_mask(plane.get("mask", "full"), shape)
        if np.any(tex < 0) or np.any(color < 0):
            raise ConfigError("negative plane intensity", f"scene.planes[{k}]")
        items.append((float(plane["depth_mm"]) * 1e-3, "plane", (tex, mask, color)))
    for k, point in enumerate(scene.get("points", [])):
        bad = set(point) - _POINT_KEYS
        if bad:
            raise ConfigError(f"unknown keys {sorted(bad)}", f"scene.points[{k}]")
        value = np.broadcast_to(np.asarray(point.get("intensity", 1.0), dtype=np.float64), (n_ch,))
        if np.any(value < 0):
            raise ConfigError("negative point intensity", f"scene.points[{k}]")
        pos = tuple(float(v) for v in point["position_px"])
        items.append((float(point["depth_mm"]) * 1e-3, "point", (pos, value)))
    # stable sort keeps listing order for equal depths
    items.sort(key=lambda item: item[0])

    coords = regular_view_coords(grid, eyebox)
    views = np.empty(grid + shape + (n_ch,))
    for iy in range(grid[0]):
        for ix in range(grid[1]):
            qx, qy = coords[iy, ix]
            img = np.full(shape + (n_ch,), background)
            for depth, kind, data in items:
                dy = -depth / f * qy / pitch
                dx = -depth / f * qx / pitch
                if kind == "plane":
                    tex, mask, color = data
                    t = shift_bilinear(tex, dy, dx, wrap=True)
                    a = shift_bilinear(mask, dy, dx)[..., None]
                    img = img * (1.0 - a) + a * t[..., None] * color
                else:
                    (row, col), value = data
                    img += _splat(shape, row + dy, col + dx)[..., None] * value
            views[iy, ix] = img
    return LightField(views, coords, eyebox)
