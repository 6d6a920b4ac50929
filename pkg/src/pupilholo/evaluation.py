"""Pupil-sweep evaluation of optimized holograms.

Four sweep kinds probe the pupil state space:

``varying_aperture``
    centered pupil at a fixed defocus, diameter scanned over ``[d_min, d_max]``
``focal_stack``
    centered full-eyebox pupil, defocus scanned over ``[z_min, z_max]``
``light_field``
    fixed diameter and defocus, shifts on a grid across the eyebox
``random``
    independent uniform draws from the pupil ranges (eval-only stream)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .farfield import FarFieldConfig, farfield_target, project_farfield
from .lightfield import LightField, project_lightfield
from .metrics import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW, psnr, ssim
from .optics import OpticalConfig, PupilRanges, PupilState
from .optimizer import PhaseVariables
from .supervision import random_pupils
from .wavefield import average_intensity, pool2, project_wave

SWEEP_KINDS = ("varying_aperture", "focal_stack", "light_field", "random")
EVAL_STREAM_TAG = 0xE7A1


class NearFieldRenderer:
    def __init__(self, config: OpticalConfig, dtype=np.complex128):
        self.config = config
        self.dtype = dtype

    @property
    def eyebox(self):
        return self.config.min_eyebox

    def reconstruction(self, phases: PhaseVariables, pupil, channel):
        u = phases.fields(channel, self.dtype)
        frames = project_wave(u, pupil, self.config, channel, cache=None, dtype=self.dtype)
        return average_intensity(frames).astype(np.float64)

    def target(self, L: LightField, pupil, channel):
        return pool2(project_lightfield(L, pupil, channel, self.config).intensity)

    def frame_intensity(self, phases, pupil, channel):
        u = phases.fields(channel, self.dtype)
        return project_wave(u, pupil, self.config, channel, cache=None, dtype=self.dtype)


class FarFieldRenderer:
    def __init__(self, cfg: FarFieldConfig, dtype=np.complex128):
        self.config = cfg
        self.dtype = dtype

    @property
    def eyebox(self):
        return self.config.min_eyebox

    def frame_intensity(self, phases, pupil, channel):
        return project_farfield(phases.fields(channel, self.dtype), pupil, self.config, channel)

    def reconstruction(self, phases, pupil, channel):
        return average_intensity(self.frame_intensity(phases, pupil, channel)).astype(np.float64)

    def target(self, L, pupil, channel):
        return pool2(farfield_target(L, pupil, channel, self.config))


def renderer_for(config, dtype=np.complex128):
    if isinstance(config, FarFieldConfig):
        return FarFieldRenderer(config, dtype)
    return NearFieldRenderer(config, dtype)


def fit_gain(recon: np.ndarray, target: np.ndarray, domain: str = "amplitude") -> float:
    """Least-squares gain ``kappa`` of the training loss (target ~ recon / gain)."""
    if domain == "amplitude":
        a, b = np.sqrt(np.maximum(recon, 0)), np.sqrt(np.maximum(target, 0))
    else:
        a, b = recon, target
    bb = float(np.sum(b * b))
    return float(np.sum(a * b)) / bb if bb > 0 else 0.0


def scale_reconstruction(recon, target, domain="amplitude"):
    kappa = fit_gain(recon, target, domain)
    if kappa <= 0:
        return recon, kappa
    return (recon / kappa ** 2 if domain == "amplitude" else recon / kappa), kappa


@dataclass
class SweepRecord:
    pupil: PupilState
    channel: int
    psnr: float
    ssim: float
    sweep_kind: str


@dataclass
class PupilSweepReport:
    records: List[SweepRecord] = field(default_factory=list)
    header: Dict[str, str] = field(default_factory=dict)

    def kinds(self):
        seen = []
        for r in self.records:
            if r.sweep_kind not in seen:
                seen.append(r.sweep_kind)
        return seen

    def ssim_values(self, kind=None):
        return np.array([r.ssim for r in self.records if kind is None or r.sweep_kind == kind])

    def psnr_values(self, kind=None):
        return np.array([r.psnr for r in self.records if kind is None or r.sweep_kind == kind])

    @property
    def aggregates(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for kind in self.kinds():
            s = self.ssim_values(kind)
            p = self.psnr_values(kind)
            out[kind] = {"n": int(s.size), "ssim_mean": float(s.mean()), "ssim_var": float(s.var()),
                         "ssim_min": float(s.min()), "psnr_mean": float(p.mean()),
                         "psnr_var": float(p.var()) if np.all(np.isfinite(p)) else math.nan,
                         "psnr_min": float(p.min())}
        return out

    def extend(self, other: "PupilSweepReport") -> "PupilSweepReport":
        self.records.extend(other.records)
        self.header.update(other.header)
        return self

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            for key, value in self.header.items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh)
            writer.writerow(["sweep_kind", "channel", "sx_mm", "sy_mm", "z_mm", "d_mm", "psnr_db", "ssim"])
            for r in self.records:
                writer.writerow([r.sweep_kind, r.channel, f"{r.pupil.shift[0] * 1e3:.6f}",
                                 f"{r.pupil.shift[1] * 1e3:.6f}", f"{r.pupil.z * 1e3:.6f}",
                                 f"{r.pupil.d * 1e3:.6f}", f"{r.psnr:.6f}", f"{r.ssim:.6f}"])

    def summary_lines(self) -> List[str]:
        lines = []
        for kind, agg in self.aggregates.items():
            lines.append(f"{kind}: n={agg['n']} ssim mean={agg['ssim_mean']:.4f} "
                         f"var={agg['ssim_var']:.3g} min={agg['ssim_min']:.4f} "
                         f"psnr mean={agg['psnr_mean']:.2f} dB min={agg['psnr_min']:.2f} dB")
        return lines


def metric_header() -> Dict[str, str]:
    return {"ssim": f"gaussian window {SSIM_WINDOW}x{SSIM_WINDOW} sigma={SSIM_SIGMA} "
                    f"k1={SSIM_K1} k2={SSIM_K2} data_range=max(target)",
            "psnr": "peak=max(target)",
            "gain": "reconstructions rescaled by the training least-squares gain"}


def eval_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), EVAL_STREAM_TAG, 0]))


def sweep_pupils(kind: str, n_states: int, ranges: PupilRanges, eyebox: float, seed: int = 0,
                 fixed_z: Optional[float] = None, fixed_d: Optional[float] = None) -> List[PupilState]:
    """Pupil states of one sweep.

    ``fixed_z`` defaults to the middle of the defocus range and ``fixed_d``
    to ``d_min``. A single-state scan sits at the start of its range.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    z_fix = 0.5 * (ranges.z_min + ranges.z_max) if fixed_z is None else fixed_z
    d_fix = ranges.d_min if fixed_d is None else fixed_d
    if kind == "varying_aperture":
        return [PupilState((0.0, 0.0), z_fix, float(d))
                for d in np.linspace(ranges.d_min, ranges.d_max, n_states)]
    if kind == "focal_stack":
        return [PupilState((0.0, 0.0), float(z), eyebox)
                for z in np.linspace(ranges.z_min, ranges.z_max, n_states)]
    if kind == "light_field":
        half = max(eyebox - d_fix, 0.0) / 2.0
        g = int(round(math.sqrt(n_states)))
        if g * g == n_states and g > 1:
            axis = np.linspace(-half, half, g)
            return [PupilState((float(x), float(y)), z_fix, d_fix) for y in axis for x in axis]
        xs = np.linspace(-half, half, n_states) if n_states > 1 else np.zeros(1)
        return [PupilState((float(x), 0.0), z_fix, d_fix) for x in xs]
    if kind == "random":
        return random_pupils(ranges, n_states, eval_rng(seed), eyebox)
    raise ValueError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")


def score_pupils(phases: PhaseVariables, L: LightField, pupils: Sequence[PupilState], kind: str,
                 config, renderer=None, loss_domain: str = "amplitude",
                 channels: Optional[Sequence[int]] = None) -> PupilSweepReport:
    renderer = renderer or renderer_for(config)
    channels = range(phases.n_channels) if channels is None else channels
    report = PupilSweepReport(header=metric_header())
    for p in pupils:
        for c in channels:
            target = renderer.target(L, p, c)
            recon, _ = scale_reconstruction(renderer.reconstruction(phases, p, c), target, loss_domain)
            report.records.append(SweepRecord(p, c, psnr(recon, target), ssim(recon, target), kind))
    return report


def run_sweep(phases: PhaseVariables, L: LightField, kind: str, n_states: int, seed: int,
              config, ranges: PupilRanges, fixed_z=None, fixed_d=None, renderer=None,
              loss_domain: str = "amplitude") -> PupilSweepReport:
    """Score reconstructions against light-field targets over one sweep."""
    renderer = renderer or renderer_for(config)
    pupils = sweep_pupils(kind, n_states, ranges, renderer.eyebox, seed, fixed_z, fixed_d)
    return score_pupils(phases, L, pupils, kind, config, renderer, loss_domain)


@dataclass
class EpipolarSlice:
    z: float
    shifts: np.ndarray
    reconstruction: np.ndarray
    target: np.ndarray


def epipolar_slice(phases: PhaseVariables, L: LightField, n_positions: int, d: float,
                   z_values: Sequence[float], config, channel: int = 0, renderer=None,
                   row: Optional[int] = None, loss_domain: str = "amplitude") -> List[EpipolarSlice]:
    """Central image rows along a horizontal trajectory of small pupils.

    Returns one ``(n_positions, cols)`` strip pair per defocus value.
    """
    renderer = renderer or renderer_for(config)
    half = max(renderer.eyebox - d, 0.0) / 2.0
    shifts = np.linspace(-half, half, n_positions) if n_positions > 1 else np.zeros(1)
    out = []
    for z in z_values:
        rec_rows, tgt_rows = [], []
        for x in shifts:
            p = PupilState((float(x), 0.0), float(z), d)
            target = renderer.target(L, p, channel)
            recon, _ = scale_reconstruction(renderer.reconstruction(phases, p, channel), target,
                                            loss_domain)
            r = target.shape[0] // 2 if row is None else row
            rec_rows.append(recon[r])
            tgt_rows.append(target[r])
        out.append(EpipolarSlice(float(z), shifts, np.array(rec_rows), np.array(tgt_rows)))
    return out


def track_peak(strip: np.ndarray, window: Optional[slice] = None, radius: int = 3) -> np.ndarray:
    """Sub-pixel peak column of every strip row (centroid around the maximum)."""
    cols = np.arange(strip.shape[1])
    if window is not None:
        cols = cols[window]
    out = []
    for line in strip:
        seg = line[cols]
        k = int(np.argmax(seg))
        lo, hi = max(k - radius, 0), min(k + radius + 1, seg.size)
        w = seg[lo:hi] - seg[lo:hi].min()
        pos = cols[lo:hi]
        out.append(float((w * pos).sum() / w.sum()) if w.sum() > 0 else float(cols[k]))
    return np.array(out)


def epipolar_slope(strip: np.ndarray, shifts: np.ndarray, window: Optional[slice] = None,
                   radius: int = 3, trim: Optional[float] = None) -> float:
    """Least-squares slope of tracked peak column versus pupil shift (pixels / meter).

    With ``trim`` (pixels), rows whose peak lies farther than ``trim`` from the
    first fit are dropped and the line is refit, which rejects rows where a
    speckle grain outshines the feature.
    """
    peaks = track_peak(strip, window, radius)
    coef = np.polyfit(shifts, peaks, 1)
    if trim is not None:
        keep = np.abs(np.polyval(coef, shifts) - peaks) <= trim
        if keep.sum() >= 3:
            coef = np.polyfit(shifts[keep], peaks[keep], 1)
    return float(coef[0])
