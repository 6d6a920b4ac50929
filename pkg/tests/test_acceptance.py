"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line (also repeated in the terminal
summary) and then asserts the same condition.
"""

import json
import os
import time

import numpy as np
import pytest
import scipy.fft as sfft

from pupilholo.cli import main
from pupilholo.evaluation import epipolar_slice, epipolar_slope, run_sweep
from pupilholo.farfield import FarFieldConfig, farfield_adjoint, farfield_linear, optimize_farfield
from pupilholo.lightfield import TargetImage, project_lightfield
from pupilholo.metrics import speckle_contrast
from pupilholo.optics import (OpticalConfig, PupilRanges, PupilState, eyebox_width,
                              frequency_grid, pupil_mask)
from pupilholo.optimizer import OptimizerSettings, PhaseVariables, forward_loss, gradient, optimize
from pupilholo.scenes import synthesize_test_scene
from pupilholo.supervision import SupervisionPolicy, SupervisionSample, sample_batch
from pupilholo.wavefield import (adjoint_project_wave, angular_spectrum_kernel, pool2,
                                 project_field, project_wave)

from conftest import ACCEPTANCE_LINES

WL, P, F = 440e-9, 8e-6, 0.4
W = WL * F / P


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_eyebox_arithmetic():
    w = eyebox_width(OpticalConfig((440e-9,), 8e-6, (256, 256), 0.4))
    verdict("eyebox", abs(w - 22e-3) <= 1e-15, f"{w * 1e3:.12f} mm (expected 22 mm)")


def test_gradient_oracle():
    rng = np.random.default_rng(7)
    cfg = OpticalConfig((WL,), P, (16, 16), F)
    batch = []
    for _ in range(3):
        d = rng.uniform(0.3, 0.9) * W
        r = (W - d) / 2
        p = PupilState(tuple(rng.uniform(-r, r, 2)), rng.uniform(0, 15e-3), d)
        batch.append(SupervisionSample(p, (TargetImage(rng.random((16, 16)) + 0.05, p, 0),)))
    phases = PhaseVariables(rng.uniform(0, 2 * np.pi, (1, 2, 16, 16)))
    h, worst = 1e-4, {}
    for domain in ("amplitude", "intensity"):
        st = OptimizerSettings(frames=2, loss_domain=domain, precision="double")
        g = gradient(phases, batch, cfg, st)
        err = 0.0
        for k in rng.choice(2 * 16 * 16, 120, replace=False):
            pos = (0,) + np.unravel_index(k, (2, 16, 16))
            plus, minus = phases.phases.copy(), phases.phases.copy()
            plus[pos] += h
            minus[pos] -= h
            fd = (forward_loss(PhaseVariables(plus), batch, cfg, st)[0]
                  - forward_loss(PhaseVariables(minus), batch, cfg, st)[0]) / (2 * h)
            err = max(err, abs(fd - g[pos]) / max(abs(fd), abs(g[pos]), 1e-12))
        worst[domain] = err
    verdict("gradient_fd", max(worst.values()) < 1e-3,
            ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()) + " over 120 pixels (< 1e-3)")


def test_adjoint_identities():
    rng = np.random.default_rng(8)
    worst = 0.0
    for n in (8, 16, 64):
        cfg = OpticalConfig((WL,), P, (n, n), F)
        ff_pitch = 1e-3 / n
        for _ in range(3):
            d = rng.uniform(0.3, 1.0) * W
            r = (W - d) / 2
            p = PupilState(tuple(rng.uniform(-r, r, 2)), rng.uniform(-5e-3, 15e-3), d)
            u, g = crandn(rng, (n, n)), crandn(rng, (n, n))
            lhs = np.vdot(g, project_field(u, p, cfg, cache=None))
            rhs = np.vdot(adjoint_project_wave(g, p, cfg, cache=None), u)
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
            q = PupilState(tuple(rng.uniform(-0.1e-3, 0.1e-3, 2)), rng.uniform(0, 15e-3),
                           rng.uniform(0.4e-3, 0.8e-3))
            lhs = np.vdot(g, farfield_linear(u, q, 520e-9, ff_pitch, 0.1))
            rhs = np.vdot(farfield_adjoint(g, q, 520e-9, ff_pitch, 0.1), u)
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
    verdict("adjoint", worst < 1e-8, f"near+far field, n in 8/16/64, max rel err {worst:.2e} (< 1e-8)")


def test_energy_conservation():
    rng = np.random.default_rng(9)
    cfg = OpticalConfig((WL,), P, (128, 128), F)
    worst = 0.0
    for z in (0.0, 5e-3, 15e-3):
        p = PupilState((0, 0), z, W)
        M = pupil_mask(frequency_grid(cfg.slm_resolution, P), p, WL, F)
        u = np.fft.ifft2(M * np.fft.fft2(crandn(rng, (128, 128))))
        I = project_wave(u, p, cfg)
        worst = max(worst, abs(I.sum() / np.sum(np.abs(u) ** 2) - 1))
    verdict("energy", worst < 1e-6, f"max rel energy change {worst:.2e} for z = 0/5/15 mm (< 1e-6)")


def test_propagation_semigroup():
    q = frequency_grid((256, 256), P)
    worst = 0.0
    for z1, z2 in [(1e-3, 2e-3), (5e-3, 10e-3), (-4e-3, 15e-3), (0.0, 7e-3)]:
        H = angular_spectrum_kernel
        worst = max(worst, float(np.abs(H(q, z1, WL) * H(q, z2, WL) - H(q, z1 + z2, WL)).max()))
    verdict("semigroup", worst < 1e-10, f"max pointwise deviation {worst:.2e} (< 1e-10)")


def test_photo_consistency():
    n, z0 = 256, 10e-3
    cfg = OpticalConfig((WL,), P, (n, n), F)
    # a point source at z0: its angular spectrum, band-limited to the full eyebox
    u = sfft.ifft2(angular_spectrum_kernel(frequency_grid((n, n), P), -z0, WL), norm="ortho")
    u = np.roll(u, (n // 2, n // 2), axis=(0, 1))
    L = synthesize_test_scene({"grid": [45, 45],
                               "points": [{"depth_mm": z0 * 1e3, "position_px": [n / 2, n / 2]}]}, cfg)
    idx = np.arange(n)

    def centroid(img):
        return np.array([img.sum(0) @ idx, img.sum(1) @ idx]) / img.sum()

    worst, count = 0.0, 0
    for d in (4e-3, 8e-3, 12e-3):
        half = (W - d) / 2
        for s in np.linspace(-half, half, 5):
            p = PupilState((float(s), float(s) / 2), 0.0, d)
            a = centroid(project_wave(u, p, cfg))
            b = centroid(project_lightfield(L, p, 0, cfg).intensity)
            worst = max(worst, float(np.abs(a - b).max()))
            count += 1
    verdict("photo_consistency", worst <= 1.0,
            f"max peak offset {worst:.3f} px over {count} pupils (5 shifts x 3 diameters, <= 1 px)")


def test_policy_specialization():
    cfg = OpticalConfig((WL,), P, (64, 64), F)
    L = synthesize_test_scene({"grid": [5, 5], "planes": [
        {"depth_mm": 0, "texture": "noise:2:2"},
        {"depth_mm": 6, "texture": "checker:8", "mask": {"disc": [32, 32, 14]}}]}, cfg)
    R = PupilRanges(0, 12e-3, 8e-3, 20e-3)
    lf2 = sample_batch(SupervisionPolicy("lf2fs", R, lf2fs_layers=5), L, 0, cfg)
    same_slfh = True
    for s in lf2:
        deg = PupilRanges(s.pupil.z, s.pupil.z, W, W, r_max=0.0)
        got = sample_batch(SupervisionPolicy("slfh", deg, batch_size=1, rng_seed=11), L, 3, cfg)[0]
        same_slfh &= np.array_equal(got.targets[0].intensity, s.targets[0].intensity)
    same_direct = len(lf2) == 5 and all(
        np.array_equal(s.targets[0].intensity, project_lightfield(L, s.pupil, 0, cfg).intensity)
        for s in lf2)
    verdict("policy_specialization", same_slfh and same_direct,
            f"degenerate slfh == lf2fs bitwise: {same_slfh}; lf2fs == 5 direct projections: {same_direct}")


ORDER_SCENE = {"grid": [5, 5], "planes": [
    {"depth_mm": 0, "texture": "noise:3:3"},
    {"depth_mm": 7.5, "texture": "checker:16", "mask": {"rect": [40, 60, 200, 150]}},
    {"depth_mm": 15, "texture": "stripes:12", "mask": {"disc": [150, 170, 50]}}]}


@pytest.mark.slow
def test_ordering_experiment():
    cfg = OpticalConfig((WL,), P, (256, 256), F)
    L = synthesize_test_scene(ORDER_SCENE, cfg)
    # 8 mm is the smallest diameter that always contains one of the 5.5 mm-spaced views
    R = PupilRanges(0, 15e-3, 8e-3, 20e-3)
    st = OptimizerSettings(frames=8, precision="single")
    stats, t0 = {}, time.time()
    for kind in ("slfh", "lf2fs", "stft"):
        # every policy sees the whole square band; 1.5 > sqrt(2) disables the baseline no-care band
        pol = SupervisionPolicy(kind, R, batch_size=4, rng_seed=0, lf2fs_layers=5, stft_grid=(8, 8),
                                stft_d=8e-3, band_limit=None if kind == "slfh" else 1.5)
        res = optimize(L, pol, cfg, 500, seed=0, settings=st)
        rnd = run_sweep(res.phases, L, "random", 32, 1, cfg, R).aggregates["random"]
        fs = run_sweep(res.phases, L, "focal_stack", 16, 1, cfg, R).aggregates["focal_stack"]
        stats[kind] = (rnd["ssim_mean"], rnd["ssim_min"], fs["ssim_mean"])
    s = stats["slfh"]
    a = all(s[0] >= stats[k][0] - 0.005 for k in ("lf2fs", "stft"))
    b = all(s[1] >= stats[k][1] for k in ("lf2fs", "stft"))
    c = stats["lf2fs"][2] > s[2]
    table = "; ".join(f"{k} rand mean {v[0]:.4f} min {v[1]:.4f} fs mean {v[2]:.4f}"
                      for k, v in stats.items())
    verdict("ordering", a and b and c,
            f"(a) {a} (b) {b} (c) {c} | {table} | {time.time() - t0:.0f} s")


def test_speckle_averaging():
    cfg = OpticalConfig((WL,), P, (128, 128), F)
    L = synthesize_test_scene({"grid": [5, 5], "planes": [{"depth_mm": 0, "texture": "constant:1"}]}, cfg)
    R = PupilRanges(0, 5e-3, 8e-3, 20e-3)
    res = optimize(L, SupervisionPolicy("slfh", R, batch_size=2), cfg, 100, seed=0,
                   settings=OptimizerSettings(frames=8))
    ratios = []
    for p in (PupilState((0, 0), 0.0, W), PupilState((3e-3, 0), 2e-3, 10e-3),
              PupilState((-4e-3, 2e-3), 5e-3, 8e-3)):
        frames = project_wave(res.phases.fields(0), p, cfg)
        single = speckle_contrast(frames[0], (slice(32, 96), slice(32, 96)))
        averaged = speckle_contrast(pool2(frames.mean(axis=0)), (slice(16, 48), slice(16, 48)))
        ratios.append(averaged / single)
    worst = max(ratios)
    verdict("speckle", worst <= 0.45,
            "contrast ratio after 8 frames + 2x2 pooling " + "/".join(f"{r:.3f}" for r in ratios)
            + " (<= 0.45)")


FF_DEPTHS = (4e-3, 8e-3)
FF_ITERATIONS = 300


@pytest.mark.slow
def test_farfield_parallax():
    c = FarFieldConfig((520e-9,), 8e-6, (1024, 1024), 0.1, None, 64, None)
    w = c.eyebox_width()
    discs = [{"depth_mm": z * 1e3, "texture": "constant:1", "mask": {"disc": [512, col, 9]}}
             for z, col in zip(FF_DEPTHS, (358, 666))]
    L = synthesize_test_scene({"grid": [9, 9], "background": 0.05, "planes": discs}, c, c.image_pitch())
    R = PupilRanges(0, 10e-3, w / 4, w / 2)
    res = optimize_farfield(L, SupervisionPolicy("slfh", R, batch_size=4), c, FF_ITERATIONS,
                            settings=OptimizerSettings(frames=4, precision="single"))
    (sl,) = epipolar_slice(res.phases, L, 9, w / 4, [0.0], c)
    slopes = [epipolar_slope(sl.reconstruction, sl.shifts, win, trim=2.0)
              for win in (slice(51, 256), slice(256, 461))]
    ratio = slopes[1] / slopes[0]
    expected = FF_DEPTHS[1] / FF_DEPTHS[0]
    ok = abs(ratio / expected - 1) <= 0.15 and slopes[0] < 0
    verdict("farfield_parallax", ok,
            f"slopes {slopes[0]:.0f} / {slopes[1]:.0f} px/m, ratio {ratio:.3f} vs depth ratio "
            f"{expected:.1f} (within 15%), peak tile {res.peak_tile}")


def test_determinism(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "optics": {"resolution": [64, 64], "d_min_mm": 8, "d_max_mm": 20},
        "policy": {"seed": 3}, "optimizer": {"iterations": 20, "frames": 4},
        "io": {"scene": ORDER_SCENE | {"resolution": [64, 64]}}}))
    runs = []
    for _ in range(2):
        assert main(["-q", "optimize", str(cfg), "--out", str(tmp_path / "runs")]) == 0
        runs.append(capsys.readouterr().out.strip().splitlines()[-1])
    names = sorted(os.listdir(os.path.join(runs[0], "phases")))
    same = names == sorted(os.listdir(os.path.join(runs[1], "phases"))) and all(
        open(os.path.join(runs[0], "phases", f), "rb").read()
        == open(os.path.join(runs[1], "phases", f), "rb").read() for f in names)
    verdict("determinism", same, f"{len(names)} exported phase files byte-identical across two runs")
