"""Display geometry, pupil states and frequency-domain pupil masks.

All lengths are meters. Frequency coordinates are cycles per meter on the
SLM plane; a frequency ``q`` maps to the pupil-plane position ``wavelength *
focal_length * q`` of the viewing relay.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, EmptyPupilError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OpticalConfig:
    """Wavelengths, SLM sampling and eyepiece focal length of a display."""

    wavelengths: Tuple[float, ...]
    slm_pitch: float
    slm_resolution: Tuple[int, int]
    focal_length: float
    detector_pitch: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        object.__setattr__(self, "slm_resolution", tuple(int(n) for n in self.slm_resolution))
        if not self.wavelengths:
            raise ConfigError("at least one wavelength is required", "wavelengths")
        if any(w <= 0 for w in self.wavelengths):
            raise ConfigError("wavelengths must be positive", "wavelengths")
        if self.slm_pitch <= 0:
            raise ConfigError("must be positive", "slm_pitch")
        if self.focal_length <= 0:
            raise ConfigError("must be positive", "focal_length")
        if len(self.slm_resolution) != 2 or min(self.slm_resolution) < 1:
            raise ConfigError("expected (rows, cols) >= 1", "slm_resolution")
        if self.detector_pitch is None:
            object.__setattr__(self, "detector_pitch", float(self.slm_pitch))
        elif self.detector_pitch <= 0:
            raise ConfigError("must be positive", "detector_pitch")

    @property
    def n_channels(self) -> int:
        return len(self.wavelengths)

    def eyebox_width(self, channel: int = 0) -> float:
        return eyebox_width(self, channel)

    @property
    def min_eyebox(self) -> float:
        return min(self.eyebox_width(c) for c in range(self.n_channels))


@dataclass(frozen=True)
class PupilState:
    """Viewer aperture: lateral shift ``(x, y)``, defocus ``z`` and diameter ``d``.

    ``x`` runs along image columns and ``y`` along image rows.
    """

    shift: Tuple[float, float]
    z: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "shift", (float(self.shift[0]), float(self.shift[1])))
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "d", float(self.d))
        if not self.d > 0:
            raise ConfigError(f"pupil diameter must be positive, got {self.d}", "d")

    @classmethod
    def centered(cls, z: float, d: float) -> "PupilState":
        return cls((0.0, 0.0), z, d)

    def __str__(self):
        sx, sy = self.shift
        return (f"PupilState(s=({sx * 1e3:.4g}, {sy * 1e3:.4g}) mm, "
                f"z={self.z * 1e3:.4g} mm, d={self.d * 1e3:.4g} mm)")


@dataclass(frozen=True)
class PupilRanges:
    """Sampling bounds for pupil states.

    ``r_max`` bounds each shift component. ``None`` keeps every sampled
    pupil inside the smallest eyebox: ``r_max = (w_min - d) / 2`` per draw.
    """

    z_min: float
    z_max: float
    d_min: float
    d_max: float
    r_max: Optional[float] = None

    def __post_init__(self):
        if self.z_min > self.z_max:
            raise ConfigError("z_min must not exceed z_max", "z_min")
        if not 0 < self.d_min <= self.d_max:
            raise ConfigError("need 0 < d_min <= d_max", "d_min")
        if self.r_max is not None and self.r_max < 0:
            raise ConfigError("must be non-negative", "r_max")

    def shift_bound(self, d: float, eyebox: float) -> float:
        if self.r_max is not None:
            return self.r_max
        return max((eyebox - d) / 2.0, 0.0)


def eyebox_width(config: OpticalConfig, channel: int = 0) -> float:
    """Eyebox width ``wavelength * focal_length / slm_pitch`` of one color channel."""
    if not 0 <= channel < config.n_channels:
        raise IndexError(f"channel {channel} out of range for {config.n_channels} wavelengths")
    return config.wavelengths[channel] * config.focal_length / config.slm_pitch


def defocus_alpha(z: float, f: float) -> float:
    """Refocus parameter ``f / (z + f)``."""
    if z + f == 0:
        raise ValueError("degenerate defocus: z == -f")
    return f / (z + f)


def frequency_grid(shape: Sequence[int], pitch: float, centered: bool = False):
    """Spatial-frequency coordinates ``(qy, qx)`` of an FFT grid.

    Native FFT ordering by default; ``centered=True`` puts DC in the middle,
    i.e. ``q in [-1/(2 pitch), 1/(2 pitch))``.
    """
    ny, nx = shape
    fy = np.fft.fftfreq(ny, d=pitch)
    fx = np.fft.fftfreq(nx, d=pitch)
    if centered:
        fy = np.fft.fftshift(fy)
        fx = np.fft.fftshift(fx)
    return np.meshgrid(fy, fx, indexing="ij")


def pupil_mask(q_grid, pupil: PupilState, wavelength: float, f: float,
               edge_width: float = 0.0) -> np.ndarray:
    """Circular pupil of ``pupil`` expressed on a frequency grid.

    The disc is centered at ``s / (wavelength f)`` with radius
    ``d / (2 wavelength f)``. ``edge_width`` (in frequency cells) switches on a
    raised-cosine rolloff straddling the hard edge.

    Raises
    ------
    EmptyPupilError
        If no grid sample falls inside the disc.
    """
    qy, qx = q_grid
    scale = wavelength * f
    cx, cy = pupil.shift[0] / scale, pupil.shift[1] / scale
    radius = pupil.d / (2.0 * scale)
    rho = np.hypot(qx - cx, qy - cy)

    if edge_width > 0:
        dq = _step(qx[0, :])
        half = 0.5 * edge_width * dq
        t = np.clip((rho - (radius - half)) / (2 * half), 0.0, 1.0)
        mask = 0.5 * (1.0 + np.cos(np.pi * t))
        mask[rho >= radius + half] = 0.0
    else:
        mask = (rho < radius).astype(np.float64)

    if not mask.any():
        raise EmptyPupilError(f"pupil mask is empty for {pupil} at wavelength {wavelength:g} m")

    band_x = _half_band(qx[0, :])
    band_y = _half_band(qy[:, 0])
    tol = 1e-9 * max(band_x, band_y)
    if (abs(cx) + radius > band_x + tol) or (abs(cy) + radius > band_y + tol):
        log.warning("pupil %s exceeds the SLM band limit at %g m; mask clipped", pupil, wavelength)
    return mask


def mask_area(mask: np.ndarray, q_grid) -> float:
    """Integral of a mask over the frequency plane (cycles^2 / m^2)."""
    qy, qx = q_grid
    return float(mask.sum()) * _step(qx[0, :]) * _step(qy[:, 0])


def _step(line):
    if line.size < 2:
        return 1.0
    return float(np.min(np.abs(np.diff(np.sort(line)))))


def _half_band(line):
    return 0.5 * line.size * _step(line)


def shift_to_cells(shift: float, wavelength: float, f: float, n: int, pitch: float) -> float:
    """Pupil shift expressed in frequency-grid cells."""
    return shift / (wavelength * f) * n * pitch


__all__ = [
    "OpticalConfig", "PupilState", "PupilRanges", "eyebox_width", "defocus_alpha",
    "frequency_grid", "pupil_mask", "mask_area", "shift_to_cells",
]
