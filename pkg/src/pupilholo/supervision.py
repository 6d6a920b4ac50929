"""Pupil-state sampling policies and their light-field targets.

Three policies share one code path:

* ``slfh`` draws fresh random pupils every iteration,
* ``lf2fs`` uses centered full-eyebox pupils at ``N`` equally spaced defocus
  values (a focal stack rendered from the light field),
* ``stft`` uses a fixed grid of shifted pupils of one diameter and defocus.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .lightfield import LightField, TargetImage, project_lightfield
from .optics import OpticalConfig, PupilRanges, PupilState

log = logging.getLogger(__name__)

KINDS = ("slfh", "lf2fs", "stft")
HW_PRESET = dict(z_min=0.0, z_max=15e-3, d_min=2e-3, d_max=20e-3)
BASELINE_BAND_LIMIT = 0.9


@dataclass(frozen=True)
class SupervisionPolicy:
    """How pupil states are chosen during optimization.

    ``stft_d`` defaults to a quarter of the smallest eyebox and ``stft_z`` to
    ``ranges.z_min``. ``band_limit`` is the fraction of the SLM band the
    forward model supervises; frequencies beyond it are no-care. ``None``
    means the whole band for slfh and :data:`BASELINE_BAND_LIMIT` for the
    fixed-pupil baselines.
    """

    kind: str
    ranges: PupilRanges
    batch_size: int = 4
    rng_seed: int = 0
    lf2fs_layers: int = 5
    stft_grid: Tuple[int, int] = (8, 8)
    stft_d: Optional[float] = None
    stft_z: Optional[float] = None
    band_limit: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown policy {self.kind!r}; expected one of {KINDS}", "policy")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "batch")
        if self.kind == "lf2fs" and self.lf2fs_layers < 1:
            raise ConfigError("must be >= 1", "layers")
        if self.kind == "stft" and min(self.stft_grid) < 1:
            raise ConfigError("grid must be at least 1x1", "grid")
        if self.band_limit is not None and not 0 < self.band_limit <= 1.5:
            raise ConfigError("must lie in (0, 1.5]", "band_limit")

    @property
    def is_fixed(self) -> bool:
        return self.kind != "slfh"

    @property
    def effective_band_limit(self) -> Optional[float]:
        if self.band_limit is not None or self.kind == "slfh":
            return self.band_limit
        return BASELINE_BAND_LIMIT


@dataclass(frozen=True, eq=False)
class SupervisionSample:
    pupil: PupilState
    targets: Tuple[TargetImage, ...]


def preset_ranges(name: str, config: OpticalConfig) -> PupilRanges:
    """Pupil ranges of a named preset.

    ``paper-hw``: defocus 0 to 15 mm, diameter 2 to 20 mm.
    ``paper-sim``: same defocus, diameter 10 % to 40 % of the smallest eyebox.
    """
    if name == "paper-hw":
        return PupilRanges(**HW_PRESET)
    if name == "paper-sim":
        w = config.min_eyebox
        return PupilRanges(HW_PRESET["z_min"], HW_PRESET["z_max"], 0.1 * w, 0.4 * w)
    raise ConfigError(f"unknown preset {name!r}", "preset")


def batch_seed(seed: int, iteration: int) -> int:
    """Integer seed of the random stream used for one slfh iteration."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(iteration)])
    return int(ss.generate_state(1, np.uint64)[0])


def check_policy(policy: SupervisionPolicy, config: OpticalConfig) -> None:
    w = config.min_eyebox
    r = policy.ranges
    if policy.kind == "slfh":
        if r.d_min > w:
            raise ConfigError(f"d_min {r.d_min:g} m exceeds the eyebox {w:g} m; "
                              "every pupil would leave it", "d_min")
        if r.r_max is not None and r.r_max + r.d_max / 2 > w / 2 * (1 + 1e-9):
            log.warning("shift_max %.4g m lets large pupils leave the %.4g m eyebox", r.r_max, w)
    elif policy.kind == "stft":
        d = stft_diameter(policy, config)
        if d > w * (1 + 1e-9):
            raise ConfigError(f"stft diameter {d:g} m exceeds the eyebox {w:g} m", "fixed_d_mm")


def stft_diameter(policy: SupervisionPolicy, config: OpticalConfig) -> float:
    return policy.stft_d if policy.stft_d is not None else config.min_eyebox / 4.0


def lf2fs_pupils(policy: SupervisionPolicy, config: OpticalConfig) -> List[PupilState]:
    r = policy.ranges
    zs = np.linspace(r.z_min, r.z_max, policy.lf2fs_layers)
    return [PupilState((0.0, 0.0), float(z), config.min_eyebox) for z in zs]


def stft_pupils(policy: SupervisionPolicy, config: OpticalConfig) -> List[PupilState]:
    w = config.min_eyebox
    d = stft_diameter(policy, config)
    z = policy.stft_z if policy.stft_z is not None else policy.ranges.z_min
    half = max(w - d, 0.0) / 2.0
    ny, nx = policy.stft_grid
    ys = np.linspace(-half, half, ny) if ny > 1 else np.zeros(1)
    xs = np.linspace(-half, half, nx) if nx > 1 else np.zeros(1)
    return [PupilState((float(x), float(y)), float(z), d) for y in ys for x in xs]


def random_pupils(ranges: PupilRanges, n: int, rng: np.random.Generator,
                  eyebox: float) -> List[PupilState]:
    """``n`` independent uniform draws of diameter, defocus and shift."""
    d = rng.uniform(ranges.d_min, ranges.d_max, size=n)
    z = rng.uniform(ranges.z_min, ranges.z_max, size=n)
    unit = rng.uniform(-1.0, 1.0, size=(n, 2))
    out = []
    for k in range(n):
        r = ranges.shift_bound(d[k], eyebox)
        out.append(PupilState((unit[k, 0] * r, unit[k, 1] * r), z[k], d[k]))
    return out


def sample_pupils(policy: SupervisionPolicy, iteration: int, config: OpticalConfig) -> List[PupilState]:
    check_policy(policy, config)
    if policy.kind == "lf2fs":
        return lf2fs_pupils(policy, config)
    if policy.kind == "stft":
        return stft_pupils(policy, config)
    rng = np.random.default_rng(batch_seed(policy.rng_seed, iteration))
    return random_pupils(policy.ranges, policy.batch_size, rng, config.min_eyebox)


def render_targets(L: LightField, pupils, config: OpticalConfig,
                   detector_pitch=None) -> List[SupervisionSample]:
    samples = []
    for p in pupils:
        targets = tuple(project_lightfield(L, p, c, config, _pitch(detector_pitch, c))
                        for c in range(config.n_channels))
        samples.append(SupervisionSample(p, targets))
    return samples


def _pitch(detector_pitch, channel):
    if detector_pitch is None or np.isscalar(detector_pitch):
        return detector_pitch
    return detector_pitch[channel]


def sample_batch(policy: SupervisionPolicy, L: LightField, iteration: int,
                 config: OpticalConfig, detector_pitch=None) -> List[SupervisionSample]:
    """Pupils for ``iteration`` paired with their light-field targets.

    ``detector_pitch`` may be a scalar or one value per channel.
    """
    if L.n_channels < config.n_channels:
        raise ConfigError(f"light field has {L.n_channels} channels, "
                          f"config needs {config.n_channels}", "wavelengths_nm")
    return render_targets(L, sample_pupils(policy, iteration, config), config, detector_pitch)

