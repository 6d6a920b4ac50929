"""Phase optimization against light-field supervision.

For every channel ``c`` and temporal frame ``t`` the SLM shows ``exp(j phi[c, t])``.
A pupil sample is judged on the frame-averaged, 2x2-pooled intensity. The
residual against the target is taken in amplitude (default) or intensity
after fitting a per-sample least-squares gain ``kappa``. Because ``kappa`` is
the exact minimizer, it drops out of the gradient.

The gradient is pulled back analytically: sqrt, pooling, ``|v|^2``, the
linear propagation adjoint and finally ``u = exp(j phi)``, which gives
``dL/dphi = 2 Re(conj(dL/du*) * j * u)``.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import wavefield
from .errors import DivergenceError
from .gridio import write_grid
from .lightfield import LightField, write_png
from .optics import OpticalConfig, PupilState
from .supervision import (SupervisionPolicy, SupervisionSample, batch_seed,
                          sample_batch)
from .wavefield import fft2, ifft2, pool2, propagation_kernel, unpool2

log = logging.getLogger(__name__)

GUARD_EPS = 1e-12
TWO_PI = 2.0 * np.pi


@dataclass
class PhaseVariables:
    """Unwrapped SLM phases of shape ``(channels, frames, rows, cols)``."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.phases.ndim != 4:
            raise ValueError("phases must have shape (channels, frames, rows, cols)")

    @classmethod
    def random(cls, channels, frames, shape, seed) -> "PhaseVariables":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
        return cls(rng.uniform(0.0, TWO_PI, size=(channels, frames) + tuple(shape)))

    @property
    def n_channels(self):
        return self.phases.shape[0]

    @property
    def n_frames(self):
        return self.phases.shape[1]

    def wrapped(self) -> np.ndarray:
        return np.mod(self.phases, TWO_PI)

    def fields(self, channel, dtype=np.complex128) -> np.ndarray:
        return np.exp(1j * self.phases[channel]).astype(dtype, copy=False)


@dataclass
class OptimizerSettings:
    """Hyperparameters of the phase optimization.

    ``precision`` picks complex128 (``"double"``) or complex64 (``"single"``)
    transforms. ``loss_domain`` is ``"amplitude"`` or ``"intensity"``.
    """

    lr: float = 2e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    frames: int = 8
    loss_domain: str = "amplitude"
    precision: str = "double"
    edge_width: float = 0.0
    divergence_factor: float = 1e3
    divergence_patience: int = 50

    def __post_init__(self):
        if self.loss_domain not in ("amplitude", "intensity"):
            raise ValueError(f"unknown loss domain {self.loss_domain!r}")
        if self.precision not in ("double", "single"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")

    @property
    def complex_dtype(self):
        return np.complex128 if self.precision == "double" else np.complex64

    @property
    def real_dtype(self):
        return np.float64 if self.precision == "double" else np.float32


class Adam:
    """ADAM on a single parameter array, updated in place."""

    def __init__(self, shape, lr=2e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# --- forward models ---------------------------------------------------------

class NearFieldModel:
    """Angular-spectrum projection ``v = IFFT(K * FFT(u))``.

    Adjoint contributions are summed in the frequency domain, so a batch costs
    one inverse transform per frame on top of the per-sample work.
    """

    def __init__(self, config: OpticalConfig, dtype=np.complex128, edge_width=0.0,
                 band_limit=None, cache=wavefield.KERNEL_CACHE):
        self.config = config
        self.dtype = dtype
        self.kernel_opts = dict(edge_width=edge_width, band_limit=band_limit, dtype=dtype)
        self.cache = cache

    def kernel(self, pupil, channel, shape):
        return propagation_kernel(pupil, self.config.wavelengths[channel], self.config,
                                  shape=shape, cache=self.cache, **self.kernel_opts)

    def prepare(self, u, channel):
        return fft2(u)

    def forward(self, U, pupil, channel):
        K = self.kernel(pupil, channel, U.shape[-2:])
        return ifft2(K * U), K

    def target(self, intensity, ctx):
        return intensity

    def accumulator(self, U):
        return np.zeros_like(U)

    def backward(self, U, K, gV, acc):
        acc += np.conj(K) * fft2(gV)

    def finalize(self, U, acc):
        return ifft2(acc)


@dataclass
class SampleDiagnostics:
    pupil: PupilState
    channel: int
    loss: float
    kappa: float


def _residual(I_hat, T, domain):
    """Loss, gradient w.r.t. pooled intensity and gain for one sample."""
    M = I_hat.size
    if domain == "amplitude":
        a = np.sqrt(np.maximum(I_hat, 0.0))
        b = np.sqrt(np.maximum(T, 0.0))
        bb = float(np.sum(b * b, dtype=np.float64))
        kappa = float(np.sum(a * b, dtype=np.float64)) / bb if bb > 0 else 0.0
        rho = a - kappa * b
        loss = float(np.sum(rho * rho, dtype=np.float64)) / M
        dA = 2.0 * rho / M
        gI = np.where(a > 0, dA / (2.0 * np.maximum(a, GUARD_EPS)), 0.0)
    else:
        tt = float(np.sum(T * T, dtype=np.float64))
        kappa = float(np.sum(I_hat * T, dtype=np.float64)) / tt if tt > 0 else 0.0
        rho = I_hat - kappa * T
        loss = float(np.sum(rho * rho, dtype=np.float64)) / M
        gI = 2.0 * rho / M
    return loss, gI.astype(I_hat.dtype, copy=False), kappa


def evaluate(phases: PhaseVariables, batch: Sequence[SupervisionSample], model,
             settings: OptimizerSettings, need_grad: bool = True):
    """Loss, per-sample diagnostics and (optionally) the phase gradient."""
    P = phases.phases
    C, S = P.shape[:2]
    rdtype = settings.real_dtype
    grad = np.zeros_like(P) if need_grad else None
    total = 0.0
    diags: List[SampleDiagnostics] = []
    for c in range(C):
        u = np.exp(1j * P[c].astype(rdtype))
        state = model.prepare(u, c)
        acc = model.accumulator(state) if need_grad else None
        for sample in batch:
            V, ctx = model.forward(state, sample.pupil, c)
            I = (V.real ** 2 + V.imag ** 2).mean(axis=0)
            I_hat = pool2(I)
            T = pool2(np.asarray(model.target(sample.targets[c].intensity, ctx), dtype=rdtype))
            loss, gI_hat, kappa = _residual(I_hat, T, settings.loss_domain)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss for {sample.pupil}, channel {c}")
            total += loss
            diags.append(SampleDiagnostics(sample.pupil, c, loss, kappa))
            if need_grad:
                gV = (unpool2(gI_hat) / S)[None] * V
                model.backward(state, ctx, gV, acc)
        if need_grad:
            g = model.finalize(state, acc)
            grad[c] = 2.0 * np.real(np.conj(g) * 1j * u)
    return total, diags, grad


def forward_loss(phases: PhaseVariables, batch, config: OpticalConfig,
                 settings: Optional[OptimizerSettings] = None, model=None):
    """Summed per-sample loss and diagnostics (no gradient)."""
    settings = settings or OptimizerSettings()
    model = model or NearFieldModel(config, settings.complex_dtype, settings.edge_width)
    loss, diags, _ = evaluate(phases, batch, model, settings, need_grad=False)
    return loss, diags


def gradient(phases: PhaseVariables, batch, config: OpticalConfig,
             settings: Optional[OptimizerSettings] = None, model=None) -> np.ndarray:
    """Analytic gradient of :func:`forward_loss` w.r.t. every phase pixel."""
    settings = settings or OptimizerSettings()
    model = model or NearFieldModel(config, settings.complex_dtype, settings.edge_width)
    return evaluate(phases, batch, model, settings, need_grad=True)[2]


# --- optimization loop --------------------------------------------------------

@dataclass
class TraceRow:
    iteration: int
    loss: float
    wall_ms: float
    batch_seed: Optional[int]


@dataclass
class OptimizationResult:
    phases: PhaseVariables
    trace: List[TraceRow] = field(default_factory=list)

    @property
    def losses(self) -> np.ndarray:
        return np.array([row.loss for row in self.trace])


def run_loop(phases: PhaseVariables, policy: SupervisionPolicy, iterations: int,
             settings: OptimizerSettings, model, batch_for: Callable[[int], list],
             callback: Optional[Callable] = None) -> OptimizationResult:
    """Generic sample -> loss -> gradient -> ADAM loop shared by both display modes."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    adam = Adam(phases.phases.shape, settings.lr, settings.beta1, settings.beta2, settings.eps)
    result = OptimizationResult(phases)
    fixed = batch_for(0) if policy.is_fixed else None
    first_loss = None
    strikes = 0
    for it in range(iterations):
        t0 = time.perf_counter()
        batch = fixed if fixed is not None else batch_for(it)
        loss, _, grad = evaluate(phases, batch, model, settings, need_grad=True)
        adam.step(phases.phases, grad)
        wall = (time.perf_counter() - t0) * 1e3
        seed = None if policy.is_fixed else batch_seed(policy.rng_seed, it)
        result.trace.append(TraceRow(it, loss, wall, seed))
        if first_loss is None:
            first_loss = loss
        strikes = strikes + 1 if loss > settings.divergence_factor * first_loss else 0
        if strikes >= settings.divergence_patience:
            raise DivergenceError(
                f"loss {loss:.4g} exceeded {settings.divergence_factor:g}x the initial "
                f"{first_loss:.4g} for {strikes} iterations (iteration {it})")
        if callback is not None:
            callback(it, loss, phases)
    return result


def optimize(L: LightField, policy: SupervisionPolicy, config: OpticalConfig,
             iterations: int, seed: int = 0, settings: Optional[OptimizerSettings] = None,
             callback: Optional[Callable] = None) -> OptimizationResult:
    """Optimize near-field phases for ``L`` under ``policy``.

    Initialization is uniform random phase drawn from ``seed``; the pupil
    stream comes from ``policy.rng_seed``.
    """
    settings = settings or OptimizerSettings()
    cache = wavefield.KERNEL_CACHE if policy.is_fixed else None
    model = NearFieldModel(config, settings.complex_dtype, settings.edge_width,
                           policy.effective_band_limit, cache)
    phases = PhaseVariables.random(config.n_channels, settings.frames, config.slm_resolution, seed)
    return run_loop(phases, policy, iterations, settings, model,
                    lambda it: sample_batch(policy, L, it, config), callback)


# --- export -----------------------------------------------------------------

def phase_to_uint8(phase: np.ndarray) -> np.ndarray:
    """Map ``phase mod 2 pi`` linearly onto 0..255."""
    level = np.floor(np.mod(phase, TWO_PI) / TWO_PI * 256.0)
    return np.clip(level, 0, 255).astype(np.uint8)


def export_phases(phases: PhaseVariables, directory: str) -> List[str]:
    """Write SLM-ready 8-bit PNGs and float32 grids, one per channel and frame."""
    os.makedirs(directory, exist_ok=True)
    written = []
    wrapped = phases.wrapped()
    for c in range(phases.n_channels):
        for t in range(phases.n_frames):
            stem = os.path.join(directory, f"phase_c{c}_t{t}")
            write_png(stem + ".png", phase_to_uint8(wrapped[c, t]) / 255.0)
            write_grid(stem + ".f32", wrapped[c, t].astype(np.float32))
            written += [stem + ".png", stem + ".f32"]
    return written


def load_phases(directory: str) -> PhaseVariables:
    from .gridio import read_grid

    files = sorted(f for f in os.listdir(directory) if f.startswith("phase_c") and f.endswith(".f32"))
    if not files:
        raise FileNotFoundError(f"no phase grids in {directory}")
    index = {}
    for name in files:
        c, t = name[len("phase_c"):-len(".f32")].split("_t")
        index[(int(c), int(t))] = os.path.join(directory, name)
    C = max(c for c, _ in index) + 1
    S = max(t for _, t in index) + 1
    grids = [[read_grid(index[(c, t)]).astype(np.float64) for t in range(S)] for c in range(C)]
    return PhaseVariables(np.array(grids))


def write_trace(path: str, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "wall_ms", "batch_seed"])
        for row in trace:
            writer.writerow([row.iteration, repr(row.loss), f"{row.wall_ms:.3f}",
                             "" if row.batch_seed is None else row.batch_seed])
