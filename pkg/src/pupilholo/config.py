"""Run configuration: strict JSON parsing with unit-suffixed keys.

Keys carry their unit (``_mm``, ``_um``, ``_nm``). Values are plain numbers
in that unit or strings with an explicit suffix such as ``"800um"``. The
string ``"full"`` stands for the smallest eyebox wherever a diameter is
expected. Unknown keys are rejected with their dotted path.
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass
from typing import Any, Dict, Optional

from .errors import ConfigError, MissingArtifactError
from .farfield import FarFieldConfig
from .optics import OpticalConfig, PupilRanges
from .optimizer import OptimizerSettings
from .supervision import HW_PRESET, SupervisionPolicy, preset_ranges

_UNITS = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(m|mm|um|µm|nm)?\s*$")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "optics": {
        "wavelengths_nm": [440.0],
        "slm_pitch_um": 8.0,
        "resolution": [256, 256],
        "focal_length_mm": 400.0,
        "detector_pitch_um": None,
        "z_min_mm": None,
        "z_max_mm": None,
        "d_min_mm": None,
        "d_max_mm": None,
        "shift_max_mm": None,
    },
    "policy": {
        "policy": "slfh",
        "batch": 4,
        "seed": 0,
        "layers": 5,
        "grid": [8, 8],
        "fixed_d_mm": None,
        "fixed_z_mm": None,
        "preset": "paper-hw",
        "band_limit": None,
    },
    "optimizer": {
        "iterations": 500,
        "lr": 2e-2,
        "betas": [0.9, 0.999],
        "eps": 1e-8,
        "frames": 8,
        "loss_domain": "amplitude",
        "precision": "single",
    },
    "mode": "nearfield",
    "farfield": {"hologram_resolution": None, "tile": 64, "retina_window": None},
    "io": {"lightfield": None, "scene": None, "output": "runs"},
    "seeds": {"train": 0, "eval": 1},
}


_OPTICS_KEYS = {"wavelengths": "wavelengths_nm", "slm_pitch": "slm_pitch_um",
                "focal_length": "focal_length_mm", "detector_pitch": "detector_pitch_um",
                "slm_resolution": "resolution"}


def parse_length(value, unit: str, key: str = None, allow_full: bool = False) -> Optional[float]:
    """Convert ``value`` given in ``unit`` (or with its own suffix) to meters.

    ``"full"`` is returned unchanged when ``allow_full`` is set.
    """
    if value is None:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"expected a length, got {value!r}", key)
    if isinstance(value, (int, float)):
        return float(value) * _UNITS[unit]
    if isinstance(value, str):
        if allow_full and value.strip().lower() == "full":
            return "full"
        m = _QUANTITY.match(value)
        if m:
            return float(m.group(1)) * _UNITS[m.group(2) or unit]
    raise ConfigError(f"cannot parse length {value!r}", key)


def parse_shift(text: str, key: str = "s"):
    """``"8mm,0"`` -> ``(0.008, 0.0)``; bare numbers are millimeters."""
    parts = [p for p in str(text).split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}", key)
    return tuple(parse_length(p.strip(), "mm", key) for p in parts)


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"expected an object, got {type(given).__name__}", path or None)
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        full = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError("unknown key", full)
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, full)
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    """Fully resolved run description.

    ``raw`` keeps the materialized JSON (every default filled in); ``optics``
    is a :class:`FarFieldConfig` in far-field mode.
    """

    raw: Dict[str, Any]
    optics: OpticalConfig
    policy: SupervisionPolicy
    settings: OptimizerSettings
    iterations: int
    mode: str
    base_dir: str = "."

    @property
    def ranges(self) -> PupilRanges:
        return self.policy.ranges

    @property
    def train_seed(self) -> int:
        return int(self.raw["seeds"]["train"])

    @property
    def eval_seed(self) -> int:
        return int(self.raw["seeds"]["eval"])

    @property
    def lightfield_path(self) -> Optional[str]:
        p = self.raw["io"]["lightfield"]
        return None if p is None else self._resolve(p)

    @property
    def scene(self):
        return self.raw["io"]["scene"]

    @property
    def output(self) -> str:
        return self._resolve(self.raw["io"]["output"])

    def _resolve(self, p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    def load_lightfield(self):
        from .lightfield import load_lightfield
        from .scenes import synthesize_test_scene

        if self.lightfield_path is not None:
            return load_lightfield(self.lightfield_path)
        pitch = None
        if isinstance(self.optics, FarFieldConfig):
            pitch = self.optics.image_pitch(0)
        return synthesize_test_scene(self.scene, self.optics, pitch)


def _int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", key)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}", key)
    return int(value)


def _pair(value, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value, value]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"expected [rows, cols], got {value!r}", key)
    return (_int(value[0], key, 1), _int(value[1], key, 1))


def build_config(data: Dict[str, Any], base_dir: str = ".") -> RunConfig:
    """Validate a config dict and materialize every default."""
    raw = _merge(DEFAULTS, data, "")
    o, pol, opt, ff, io = raw["optics"], raw["policy"], raw["optimizer"], raw["farfield"], raw["io"]

    if raw["mode"] not in ("nearfield", "farfield"):
        raise ConfigError(f"expected 'nearfield' or 'farfield', got {raw['mode']!r}", "mode")
    wl = o["wavelengths_nm"]
    if not isinstance(wl, (list, tuple)):
        wl = [wl]
    wavelengths = tuple(parse_length(w, "nm", "optics.wavelengths_nm") for w in wl)
    pitch = parse_length(o["slm_pitch_um"], "um", "optics.slm_pitch_um")
    f = parse_length(o["focal_length_mm"], "mm", "optics.focal_length_mm")
    det = parse_length(o["detector_pitch_um"], "um", "optics.detector_pitch_um")
    res = _pair(o["resolution"], "optics.resolution")
    try:
        if raw["mode"] == "farfield":
            if ff["hologram_resolution"] is not None:
                res = _pair(ff["hologram_resolution"], "farfield.hologram_resolution")
            window = ff["retina_window"]
            optics = FarFieldConfig(wavelengths, pitch, res, f, None, _int(ff["tile"], "farfield.tile", 2),
                                    None if window is None else _pair(window, "farfield.retina_window"))
        else:
            optics = OpticalConfig(wavelengths, pitch, res, f, det)
    except ConfigError as err:
        key = _OPTICS_KEYS.get(err.key, err.key)
        if key in ("tile", "retina_window", "hologram_resolution"):
            key = "farfield." + key
        elif key and "." not in key:
            key = "optics." + key
        raise ConfigError(err.message, key) from None

    w = optics.min_eyebox
    base = preset_ranges(pol["preset"], optics) if pol["preset"] is not None else PupilRanges(**HW_PRESET)

    def rng_value(name, fallback):
        v = parse_length(o[name], "mm", f"optics.{name}", allow_full=name.startswith("d_"))
        if v == "full":
            return w
        return fallback if v is None else v

    try:
        ranges = PupilRanges(rng_value("z_min_mm", base.z_min), rng_value("z_max_mm", base.z_max),
                             rng_value("d_min_mm", base.d_min), rng_value("d_max_mm", base.d_max),
                             parse_length(o["shift_max_mm"], "mm", "optics.shift_max_mm"))
    except ConfigError as err:
        key = "shift_max" if err.key == "r_max" else err.key
        raise ConfigError(err.message, f"optics.{key}_mm" if key else "optics") from None

    fixed_d = parse_length(pol["fixed_d_mm"], "mm", "policy.fixed_d_mm", allow_full=True)
    if fixed_d == "full":
        fixed_d = w
    fixed_z = parse_length(pol["fixed_z_mm"], "mm", "policy.fixed_z_mm")
    grid = _pair(pol["grid"], "policy.grid")
    try:
        policy = SupervisionPolicy(pol["policy"], ranges, _int(pol["batch"], "policy.batch", 1),
                                   _int(pol["seed"], "policy.seed"), _int(pol["layers"], "policy.layers", 1),
                                   grid, fixed_d, fixed_z, pol["band_limit"])
    except ConfigError as err:
        key = err.key if (err.key or "").startswith("policy.") else f"policy.{err.key}"
        raise ConfigError(err.message, key) from None

    betas = opt["betas"]
    if not isinstance(betas, (list, tuple)) or len(betas) != 2:
        raise ConfigError("expected [beta1, beta2]", "optimizer.betas")
    try:
        settings = OptimizerSettings(float(opt["lr"]), float(betas[0]), float(betas[1]),
                                     float(opt["eps"]), _int(opt["frames"], "optimizer.frames", 1),
                                     opt["loss_domain"], opt["precision"])
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err), "optimizer") from None
    iterations = _int(opt["iterations"], "optimizer.iterations", 1)
    _int(raw["seeds"]["train"], "seeds.train")
    _int(raw["seeds"]["eval"], "seeds.eval")

    if (io["lightfield"] is None) == (io["scene"] is None):
        raise ConfigError("give exactly one of 'lightfield' and 'scene'", "io")
    if io["lightfield"] is not None:
        p = io["lightfield"] if os.path.isabs(io["lightfield"]) else os.path.join(base_dir, io["lightfield"])
        if not os.path.isdir(p):
            raise ConfigError(f"light field directory {p} does not exist", "io.lightfield")
        io["lightfield"] = os.path.abspath(p)
    if not isinstance(io["output"], str):
        raise ConfigError("expected a path", "io.output")

    # materialize resolved values so the frozen copy is self-contained
    o["z_min_mm"], o["z_max_mm"] = ranges.z_min * 1e3, ranges.z_max * 1e3
    o["d_min_mm"], o["d_max_mm"] = ranges.d_min * 1e3, ranges.d_max * 1e3
    o["shift_max_mm"] = None if ranges.r_max is None else ranges.r_max * 1e3
    o["wavelengths_nm"] = [x * 1e9 for x in wavelengths]
    o["slm_pitch_um"] = pitch * 1e6
    o["focal_length_mm"] = f * 1e3
    o["detector_pitch_um"] = optics.detector_pitch * 1e6
    o["resolution"] = list(optics.slm_resolution)
    pol["grid"] = list(grid)
    pol["fixed_d_mm"] = None if fixed_d is None else fixed_d * 1e3
    pol["fixed_z_mm"] = None if fixed_z is None else fixed_z * 1e3
    opt["betas"] = [float(betas[0]), float(betas[1])]
    if raw["mode"] == "farfield":
        ff["hologram_resolution"] = list(optics.slm_resolution)
    return RunConfig(raw, optics, policy, settings, iterations, raw["mode"], base_dir)


def load_config(path: str) -> RunConfig:
    """Read and validate a JSON run configuration.

    Relative paths inside the file resolve against the file's directory.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MissingArtifactError(f"config file {path} not found") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err}", None) from None
    return build_config(data, os.path.dirname(os.path.abspath(path)))
