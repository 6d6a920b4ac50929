"""Fourier-hologram configuration for large space-bandwidth products.

The SLM sits in the pupil plane of the viewing optics: a pupil state becomes
a spatial disc on the SLM, defocus a quadratic phase across it, and the
retinal image is a single Fourier transform::

    v = FFT(A(r; s, d) * Q(r; z) * u(r)),   Q = exp(+j pi z |r|^2 / (wavelength f^2))

The SLM extent doubles as the eyebox and the detector pitch of channel ``c``
is ``wavelength_c * f / (N * pitch)``.

During optimization each pupil only touches the smallest tile that holds its
disc. Transforming that ``m x m`` tile yields the full-resolution image
sampled every ``N / m`` pixels, so memory per sample scales with the pupil
area instead of the hologram area.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.fft as sfft

from . import wavefield
from .errors import ConfigError, EmptyPupilError
from .lightfield import LightField, project_lightfield
from .optics import OpticalConfig, PupilState
from .optimizer import OptimizationResult, OptimizerSettings, PhaseVariables, run_loop
from .supervision import SupervisionPolicy, SupervisionSample, sample_pupils

log = logging.getLogger(__name__)

MIN_RESOLUTION = 256


@dataclass(frozen=True)
class FarFieldConfig(OpticalConfig):
    """Optical config whose ``slm_resolution`` is the (square) hologram size.

    ``retina_window`` is an optional centered ``(rows, cols)`` crop of the
    rendered image.
    """

    tile: int = 64
    retina_window: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        super().__post_init__()
        n, m = self.slm_resolution
        if n != m:
            raise ConfigError("far-field holograms must be square", "hologram_resolution")
        if n < MIN_RESOLUTION:
            raise ConfigError(f"must be at least {MIN_RESOLUTION} per axis", "hologram_resolution")
        if self.tile < 2 or self.tile % 2 or n % self.tile:
            raise ConfigError(f"tile {self.tile} must be even and divide {n}", "tile")
        if self.retina_window is not None:
            h, w = self.retina_window
            if not (0 < h <= n and 0 < w <= n):
                raise ConfigError("retina window exceeds the image", "retina_window")

    @classmethod
    def from_optics(cls, optics: OpticalConfig, hologram_resolution=None, tile=64,
                    retina_window=None) -> "FarFieldConfig":
        res = optics.slm_resolution if hologram_resolution is None else hologram_resolution
        return cls(optics.wavelengths, optics.slm_pitch, tuple(res), optics.focal_length,
                   None, tile, None if retina_window is None else tuple(retina_window))

    @property
    def hologram_resolution(self):
        return self.slm_resolution

    @property
    def n(self) -> int:
        return self.slm_resolution[0]

    def eyebox_width(self, channel: int = 0) -> float:
        return self.n * self.slm_pitch

    def image_pitch(self, channel: int = 0) -> float:
        """Detector-equivalent pixel size of the retinal image."""
        return self.wavelengths[channel] * self.focal_length / (self.n * self.slm_pitch)


def _coords(start, m, n, pitch):
    return (np.arange(start, start + m) - n / 2.0) * pitch


def spatial_pupil(rows, cols, pupil: PupilState, pitch) -> np.ndarray:
    """Disc of diameter ``d`` around ``s`` on SLM coordinates ``(rows, cols)``."""
    return (np.hypot(cols[None, :] - pupil.shift[0], rows[:, None] - pupil.shift[1])
            < pupil.d / 2.0).astype(np.float64)


def defocus_phase(rows, cols, z, wavelength, f) -> np.ndarray:
    r2 = cols[None, :] ** 2 + rows[:, None] ** 2
    return np.exp(1j * np.pi * z * r2 / (wavelength * f * f))


def _check_inside(pupil, n, pitch):
    half = n * pitch / 2.0
    reach = max(abs(pupil.shift[0]), abs(pupil.shift[1])) + pupil.d / 2.0
    if reach > half + 0.5 * pitch:
        raise ValueError(f"{pupil} extends beyond the {2 * half * 1e3:.4g} mm hologram")


def aperture_field(u, pupil: PupilState, wavelength, pitch, f, window=None) -> np.ndarray:
    """``A * Q`` evaluated on a window ``(r0, c0, m)`` of an ``N x N`` hologram."""
    n = u.shape[-1]
    r0, c0, m = (0, 0, n) if window is None else window
    rows = _coords(r0, m, n, pitch)
    cols = _coords(c0, m, n, pitch)
    AQ = spatial_pupil(rows, cols, pupil, pitch) * defocus_phase(rows, cols, pupil.z, wavelength, f)
    if not AQ.any():
        raise EmptyPupilError(f"far-field pupil {pupil} covers no SLM pixel")
    return AQ


def farfield_linear(u, pupil: PupilState, wavelength, pitch, f) -> np.ndarray:
    """Retinal field ``fftshift(FFT(A Q u))`` with a unitary transform."""
    AQ = aperture_field(u, pupil, wavelength, pitch, f).astype(np.result_type(u, np.complex64))
    return sfft.fftshift(wavefield.fft2(AQ * u), axes=(-2, -1))


def farfield_adjoint(g, pupil: PupilState, wavelength, pitch, f) -> np.ndarray:
    AQ = aperture_field(g, pupil, wavelength, pitch, f).astype(np.result_type(g, np.complex64))
    return np.conj(AQ) * wavefield.ifft2(sfft.ifftshift(g, axes=(-2, -1)))


def crop_center(img, window):
    if window is None:
        return img
    h, w = img.shape[-2:]
    wh, ww = window
    r0, c0 = (h - wh) // 2, (w - ww) // 2
    return img[..., r0:r0 + wh, c0:c0 + ww]


def project_farfield(u, pupil: PupilState, cfg: FarFieldConfig, channel: int = 0) -> np.ndarray:
    """Full-resolution retinal intensity, cropped to the retina window."""
    u = np.asarray(u)
    _check_inside(pupil, cfg.n, cfg.slm_pitch)
    v = farfield_linear(u, pupil, cfg.wavelengths[channel], cfg.slm_pitch, cfg.focal_length)
    return crop_center(v.real ** 2 + v.imag ** 2, cfg.retina_window)


# --- tiled model --------------------------------------------------------------

def tile_window(pupil: PupilState, cfg: FarFieldConfig) -> Tuple[int, int, int]:
    """``(row0, col0, m)`` of the smallest admissible tile holding the pupil disc."""
    n, p = cfg.n, cfg.slm_pitch
    need = pupil.d / p + 2.0
    m = n
    for cand in range(cfg.tile, n + 1, cfg.tile):
        if n % cand == 0 and cand >= need:
            m = cand
            break
    cx = pupil.shift[0] / p + n / 2.0
    cy = pupil.shift[1] / p + n / 2.0
    c0 = int(np.clip(round(cx - m / 2.0), 0, n - m))
    r0 = int(np.clip(round(cy - m / 2.0), 0, n - m))
    return r0, c0, m


class FarFieldModel:
    """Tiled far-field forward model plugged into the shared optimization core."""

    def __init__(self, cfg: FarFieldConfig, dtype=np.complex128):
        self.cfg = cfg
        self.dtype = dtype
        self.peak_tile = 0

    def prepare(self, u, channel):
        return (u, channel)

    def forward(self, state, pupil, channel):
        u, _ = state
        cfg = self.cfg
        _check_inside(pupil, cfg.n, cfg.slm_pitch)
        r0, c0, m = tile_window(pupil, cfg)
        self.peak_tile = max(self.peak_tile, m)
        AQ = aperture_field(u, pupil, cfg.wavelengths[channel], cfg.slm_pitch,
                            cfg.focal_length, (r0, c0, m)).astype(self.dtype)
        scale = m / cfg.n
        x = AQ * u[..., r0:r0 + m, c0:c0 + m]
        V = scale * sfft.fftshift(wavefield.fft2(x), axes=(-2, -1))
        return V, (r0, c0, m, AQ, scale)

    def target(self, intensity, ctx):
        return intensity

    def accumulator(self, state):
        u, _ = state
        return np.zeros_like(u)

    def backward(self, state, ctx, gV, acc):
        r0, c0, m, AQ, scale = ctx
        gx = scale * wavefield.ifft2(sfft.ifftshift(gV, axes=(-2, -1)))
        acc[..., r0:r0 + m, c0:c0 + m] += np.conj(AQ) * gx

    def finalize(self, state, acc):
        return acc


def centered_block_mean(img: np.ndarray, factor: int) -> np.ndarray:
    """Average ``factor x factor`` blocks centered on every ``factor``-th pixel."""
    if factor == 1:
        return img
    shifted = np.roll(img, (factor // 2, factor // 2), axis=(-2, -1))
    h, w = img.shape[-2:]
    lead = img.shape[:-2]
    return shifted.reshape(lead + (h // factor, factor, w // factor, factor)).mean(axis=(-3, -1))


class _DecimatedViews:
    """Light fields reduced to every tile resolution, built on first use."""

    def __init__(self, L: LightField):
        self.L = L
        self._cache = {}

    def __call__(self, factor) -> LightField:
        if factor not in self._cache:
            views = np.moveaxis(self.L.views, -1, 2)
            small = np.moveaxis(centered_block_mean(views, factor), 2, -1)
            self._cache[factor] = LightField(small, self.L.view_coords, self.L.eyebox)
        return self._cache[factor]


def farfield_batch(pupils, L: LightField, cfg: FarFieldConfig, decimated=None):
    """Supervision samples whose targets match each pupil's tile sampling."""
    decimated = decimated or _DecimatedViews(L)
    out = []
    for p in pupils:
        _, _, m = tile_window(p, cfg)
        factor = cfg.n // m
        Ld = decimated(factor)
        targets = tuple(project_lightfield(Ld, p, c, cfg, cfg.image_pitch(c) * factor)
                        for c in range(cfg.n_channels))
        out.append(SupervisionSample(p, targets))
    return out


def optimize_farfield(L: LightField, policy: SupervisionPolicy, cfg: FarFieldConfig,
                      iterations: int, seed: int = 0,
                      settings: Optional[OptimizerSettings] = None,
                      callback=None) -> OptimizationResult:
    """Far-field counterpart of :func:`pupilholo.optimizer.optimize`."""
    settings = settings or OptimizerSettings()
    if L.resolution != cfg.slm_resolution:
        raise ConfigError(f"light field resolution {L.resolution} differs from the "
                          f"hologram {cfg.slm_resolution}", "hologram_resolution")
    model = FarFieldModel(cfg, settings.complex_dtype)
    decimated = _DecimatedViews(L)
    phases = PhaseVariables.random(cfg.n_channels, settings.frames, cfg.slm_resolution, seed)

    def batch_for(it):
        return farfield_batch(sample_pupils(policy, it, cfg), L, cfg, decimated)

    result = run_loop(phases, policy, iterations, settings, model, batch_for, callback)
    result.peak_tile = model.peak_tile
    return result


def farfield_target(L: LightField, pupil: PupilState, channel: int, cfg: FarFieldConfig):
    """Full-resolution light-field target at the far-field image pitch."""
    img = project_lightfield(L, pupil, channel, cfg, cfg.image_pitch(channel)).intensity
    return crop_center(img, cfg.retina_window)
