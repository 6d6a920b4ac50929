"""Coherent projection of an SLM field through a pupil and a defocus.

The perceived field is ``v = IFFT(K * FFT(u))`` with unitary transforms and
``K = pupil_mask * H``, ``H`` being the angular-spectrum transfer function.
The linear map ``u -> v`` and its adjoint are exposed separately so gradients
can be pulled back exactly.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .optics import OpticalConfig, PupilState, frequency_grid, pupil_mask

FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Cap the threads used by every transform in the package."""
    global FFT_WORKERS
    FFT_WORKERS = max(int(n), 1)


def fft2(x):
    return sfft.fft2(x, norm="ortho", workers=FFT_WORKERS)


def ifft2(x):
    return sfft.ifft2(x, norm="ortho", workers=FFT_WORKERS)


@dataclass(frozen=True, eq=False)
class ComplexField:
    values: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    @classmethod
    def from_phase(cls, phase, pitch, wavelength):
        return cls(np.exp(1j * np.asarray(phase)), pitch, wavelength)


def angular_spectrum_kernel(q_grid, z: float, wavelength: float) -> np.ndarray:
    """Transfer function ``exp(j 2 pi z / wavelength * sqrt(1 - |wavelength q|^2))``.

    Evanescent frequencies (``|wavelength q| >= 1``) are set to zero.
    """
    qy, qx = q_grid
    arg = 1.0 - (wavelength * qx) ** 2 - (wavelength * qy) ** 2
    prop = arg > 0
    phase = 2.0 * np.pi * z / wavelength * np.sqrt(np.where(prop, arg, 0.0))
    return np.where(prop, np.exp(1j * phase), 0.0)


def band_mask(q_grid, pitch: float, fraction: float) -> np.ndarray:
    """Disc passing ``|q| < fraction / (2 pitch)``; everything else is no-care."""
    qy, qx = q_grid
    return (np.hypot(qx, qy) < fraction / (2.0 * pitch)).astype(np.float64)


class KernelCache:
    """Bounded LRU store of propagation kernels keyed by quantized parameters."""

    def __init__(self, maxsize: int = 96):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    @staticmethod
    def key(shape, pitch, wavelength, f, pupil, edge_width, band_limit, dtype):
        q = lambda v: round(v * 1e12)  # noqa: E731  picometer quantization
        return (tuple(shape), q(pitch), q(wavelength), q(f), q(pupil.shift[0]), q(pupil.shift[1]),
                q(pupil.z), q(pupil.d), float(edge_width),
                None if band_limit is None else float(band_limit), np.dtype(dtype).str)

    def get(self, key):
        with self._lock:
            value = self._data.get(key)
            if value is not None:
                self._data.move_to_end(key)
            return value

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


KERNEL_CACHE = KernelCache()


def propagation_kernel(pupil: PupilState, wavelength: float, config: OpticalConfig,
                       shape: Optional[Sequence[int]] = None, edge_width: float = 0.0,
                       band_limit: Optional[float] = None, dtype=np.complex128,
                       cache: Optional[KernelCache] = KERNEL_CACHE) -> np.ndarray:
    """Pupil mask times angular-spectrum transfer function, in FFT-native order."""
    shape = tuple(config.slm_resolution if shape is None else shape)
    key = None
    if cache is not None:
        key = cache.key(shape, config.slm_pitch, wavelength, config.focal_length, pupil,
                        edge_width, band_limit, dtype)
        hit = cache.get(key)
        if hit is not None:
            return hit
    q = frequency_grid(shape, config.slm_pitch)
    K = pupil_mask(q, pupil, wavelength, config.focal_length, edge_width) \
        * angular_spectrum_kernel(q, pupil.z, wavelength)
    if band_limit is not None:
        K = K * band_mask(q, config.slm_pitch, band_limit)
    K = K.astype(dtype)
    K.setflags(write=False)
    if cache is not None:
        cache.put(key, K)
    return K


def _wavelength(u, config, channel):
    if isinstance(u, ComplexField):
        return u.values, u.wavelength
    return np.asarray(u), config.wavelengths[channel]


def project_field(u, pupil: PupilState, config: OpticalConfig, channel: int = 0,
                  **kernel_opts) -> np.ndarray:
    """Complex field seen on the detector; ``u`` may carry leading frame axes."""
    values, wl = _wavelength(u, config, channel)
    K = propagation_kernel(pupil, wl, config, shape=values.shape[-2:], **kernel_opts)
    return ifft2(K * fft2(values))


def project_wave(u, pupil: PupilState, config: OpticalConfig, channel: int = 0,
                 **kernel_opts) -> np.ndarray:
    """Perceived intensity ``|v|^2`` of the SLM field ``u`` under ``pupil``."""
    v = project_field(u, pupil, config, channel, **kernel_opts)
    return v.real ** 2 + v.imag ** 2


def adjoint_project_wave(g, pupil: PupilState, config: OpticalConfig, channel: int = 0,
                         **kernel_opts) -> np.ndarray:
    """Adjoint of :func:`project_field`: ``IFFT(conj(K) * FFT(g))``."""
    values, wl = _wavelength(g, config, channel)
    K = propagation_kernel(pupil, wl, config, shape=values.shape[-2:], **kernel_opts)
    return ifft2(np.conj(K) * fft2(values))


def pool2(img: np.ndarray, block: int = 2) -> np.ndarray:
    """Non-overlapping ``block x block`` mean over the last two axes."""
    h, w = img.shape[-2:]
    if h % block or w % block:
        raise ValueError(f"image {h}x{w} is not divisible into {block}x{block} blocks")
    lead = img.shape[:-2]
    return img.reshape(lead + (h // block, block, w // block, block)).mean(axis=(-3, -1))


def unpool2(img: np.ndarray, block: int = 2) -> np.ndarray:
    """Adjoint of :func:`pool2`: replicate each value with weight ``1 / block^2``."""
    up = np.repeat(np.repeat(img, block, axis=-2), block, axis=-1)
    return up / (block * block)


def average_intensity(frames, block: int = 2) -> np.ndarray:
    """Temporal mean of intensity frames followed by ``block x block`` mean pooling."""
    frames = np.asarray(frames)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.shape[0] < 1:
        raise ValueError("need at least one frame")
    return pool2(frames.mean(axis=0), block)
