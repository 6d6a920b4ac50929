"""Command-line entry point.

Subcommands::

    pupilholo optimize CONFIG            train phases, write a run directory
    pupilholo evaluate RUN [--sweep ..]  pupil sweeps and epipolar slices
    pupilholo render RUN --s x,y --z z --d d
    pupilholo compare CONFIG             slfh / lf2fs / stft on one scene + random sweep table

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import wavefield
from .config import RunConfig, build_config, load_config, parse_length, parse_shift
from .errors import (ConfigError, DivergenceError, EmptyApertureError, EmptyPupilError,
                     LightFieldError, MissingArtifactError, MissingViewError)
from .evaluation import (SWEEP_KINDS, PupilSweepReport, epipolar_slice, renderer_for,
                         run_sweep, scale_reconstruction)
from .farfield import optimize_farfield
from .gridio import write_grid
from .lightfield import write_png
from .optics import PupilState
from .optimizer import export_phases, load_phases, optimize, write_trace

log = logging.getLogger("pupilholo")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4
DEFAULT_STATES = {"random": 32, "varying_aperture": 16, "focal_stack": 16, "light_field": 16}


# --- run directories ------------------------------------------------------------

def new_run_dir(root: str, tag: str) -> str:
    os.makedirs(root, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(root, f"{stamp}_{tag}")
    path, k = base, 1
    while os.path.exists(path):
        path = f"{base}_{k}"
        k += 1
    os.makedirs(path)
    return path


def run_optimization(cfg: RunConfig, L=None, progress: bool = False):
    L = cfg.load_lightfield() if L is None else L

    def report(it, loss, _):
        if progress and (it % 50 == 0 or it == cfg.iterations - 1):
            print(f"  iter {it:5d}  loss {loss:.6g}", file=sys.stderr)

    if cfg.mode == "farfield":
        return optimize_farfield(L, cfg.policy, cfg.optics, cfg.iterations, cfg.train_seed,
                                 cfg.settings, report)
    return optimize(L, cfg.policy, cfg.optics, cfg.iterations, cfg.train_seed, cfg.settings, report)


def write_run(run_dir: str, cfg: RunConfig, result) -> None:
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    export_phases(result.phases, os.path.join(run_dir, "phases"))
    write_trace(os.path.join(run_dir, "loss_trace.csv"), result.trace)


def load_run(run_dir: str) -> RunConfig:
    path = os.path.join(run_dir, "config.json")
    if not os.path.isfile(path):
        raise MissingArtifactError(f"run directory {run_dir} has no config.json")
    if not os.path.isdir(os.path.join(run_dir, "phases")):
        raise MissingArtifactError(f"run directory {run_dir} has no phases/ directory")
    with open(path) as fh:
        data = json.load(fh)
    return build_config(data, run_dir)


def _phases(run_dir: str):
    try:
        return load_phases(os.path.join(run_dir, "phases"))
    except FileNotFoundError as err:
        raise MissingArtifactError(str(err)) from None


def _image_png(path: str, img: np.ndarray, peak: float) -> None:
    write_png(path, np.clip(img / peak, 0.0, 1.0) if peak > 0 else img, bits=16)


# --- subcommands -----------------------------------------------------------------

def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    run_dir = new_run_dir(args.out or cfg.output, cfg.policy.kind)
    result = run_optimization(cfg, progress=not args.quiet)
    write_run(run_dir, cfg, result)
    print(run_dir)
    return EXIT_OK


def _sweep_kinds(names: Optional[List[str]]) -> List[str]:
    if not names:
        return ["random"]
    if names == ["all"]:
        return list(SWEEP_KINDS)
    for n in names:
        if n not in SWEEP_KINDS:
            raise ConfigError(f"unknown sweep {n!r}; expected one of {SWEEP_KINDS}", "sweep")
    return names


def cmd_evaluate(args) -> int:
    cfg = load_run(args.run)
    phases = _phases(args.run)
    warnings = []
    if args.lightfield:
        lf_path = os.path.abspath(args.lightfield)
        if lf_path != cfg.lightfield_path:
            warnings.append(f"evaluated against {lf_path}, trained on "
                            f"{cfg.lightfield_path or 'a synthetic scene'}")
        data = json.loads(cfg.to_json())
        data["io"]["lightfield"], data["io"]["scene"] = lf_path, None
        L = build_config(data, args.run).load_lightfield()
    else:
        L = cfg.load_lightfield()
    for w in warnings:
        log.warning(w)
    out = args.out or os.path.join(args.run, "eval")
    os.makedirs(out, exist_ok=True)
    renderer = renderer_for(cfg.optics)
    seed = cfg.eval_seed if args.seed is None else args.seed
    fixed_z = parse_length(args.fixed_z, "mm", "fixed_z")
    fixed_d = parse_length(args.fixed_d, "mm", "fixed_d", allow_full=True)
    if fixed_d == "full":
        fixed_d = renderer.eyebox

    if args.epipolar is None or args.sweep:
        report = PupilSweepReport()
        for kind in _sweep_kinds(args.sweep):
            n = args.n or DEFAULT_STATES[kind]
            part = run_sweep(phases, L, kind, n, seed, cfg.optics, cfg.ranges, fixed_z, fixed_d,
                             renderer, cfg.settings.loss_domain)
            report.extend(part)
            if args.png:
                _export_states(out, kind, part, phases, L, renderer, cfg.settings.loss_domain)
        report.header["eval_seed"] = str(seed)
        for k, w in enumerate(warnings):
            report.header[f"warning_{k}"] = w
        report.write_csv(os.path.join(out, "report.csv"))
        lines = report.summary_lines()
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            for key, value in report.header.items():
                fh.write(f"# {key}: {value}\n")
            fh.write("\n".join(lines) + "\n")
        print("\n".join(lines))

    if args.epipolar is not None:
        d = parse_length(args.epipolar_d, "mm", "epipolar_d", allow_full=True) if args.epipolar_d else None
        if d is None:
            d = default_epipolar_diameter(L, renderer.eyebox)
        elif d == "full":
            d = renderer.eyebox
        zs = ([parse_length(z, "mm", "z") for z in args.z.split(",")] if args.z
              else [cfg.ranges.z_min, cfg.ranges.z_max])
        slices = epipolar_slice(phases, L, args.epipolar, d, zs, cfg.optics, renderer=renderer,
                                loss_domain=cfg.settings.loss_domain)
        for sl in slices:
            stem = os.path.join(out, f"epipolar_z{sl.z * 1e3:.3f}mm")
            peak = float(sl.target.max())
            _image_png(stem + "_recon.png", sl.reconstruction, peak)
            _image_png(stem + "_target.png", sl.target, peak)
            write_grid(stem + "_recon.f32", sl.reconstruction.astype(np.float32))
            write_grid(stem + "_target.f32", sl.target.astype(np.float32))
        print(f"wrote {len(slices)} epipolar slice pairs to {out}")
    return EXIT_OK


def default_epipolar_diameter(L, eyebox: float) -> float:
    """An eighth of the eyebox, widened past the view spacing of sparse light fields."""
    d = eyebox / 8.0
    xs = np.unique(L.view_coords[..., 0])
    spacing = float(np.max(np.diff(xs))) if xs.size > 1 else 0.0
    if spacing >= d:
        log.warning("views are %.3g mm apart; widening the epipolar pupil from %.3g mm",
                    spacing * 1e3, d * 1e3)
        d = 1.01 * spacing
    return d


def _export_states(out, kind, report, phases, L, renderer, domain):
    folder = os.path.join(out, kind)
    os.makedirs(folder, exist_ok=True)
    for k, rec in enumerate(report.records):
        target = renderer.target(L, rec.pupil, rec.channel)
        recon, _ = scale_reconstruction(renderer.reconstruction(phases, rec.pupil, rec.channel),
                                        target, domain)
        stem = os.path.join(folder, f"state{k:03d}_c{rec.channel}")
        _image_png(stem + "_recon.png", recon, float(target.max()))
        _image_png(stem + "_target.png", target, float(target.max()))
        write_grid(stem + "_recon.f32", recon.astype(np.float32))


def clip_pupil(pupil: PupilState, eyebox: float) -> PupilState:
    """Shrink and shift ``pupil`` so the disc lies inside the eyebox."""
    d = min(pupil.d, eyebox)
    half = (eyebox - d) / 2.0
    sx, sy = (float(np.clip(v, -half, half)) for v in pupil.shift)
    return PupilState((sx, sy), pupil.z, d)


def cmd_render(args) -> int:
    cfg = load_run(args.run)
    phases = _phases(args.run)
    L = cfg.load_lightfield()
    renderer = renderer_for(cfg.optics)
    w = renderer.eyebox
    d = parse_length(args.d, "mm", "d", allow_full=True)
    pupil = PupilState(parse_shift(args.s), parse_length(args.z, "mm", "z"), w if d == "full" else d)
    clipped = clip_pupil(pupil, w)
    if clipped != pupil:
        log.warning("%s leaves the %.4g mm eyebox; rendering %s", pupil, w * 1e3, clipped)
        pupil = clipped
    out = args.out or os.path.join(args.run, "renders")
    os.makedirs(out, exist_ok=True)
    tag = (f"s{pupil.shift[0] * 1e3:+.3f}_{pupil.shift[1] * 1e3:+.3f}"
           f"_z{pupil.z * 1e3:.3f}_d{pupil.d * 1e3:.3f}")
    for c in range(phases.n_channels):
        target = renderer.target(L, pupil, c)
        recon, _ = scale_reconstruction(renderer.reconstruction(phases, pupil, c), target,
                                        cfg.settings.loss_domain)
        stem = os.path.join(out, f"render_{tag}_c{c}")
        _image_png(stem + "_recon.png", recon, float(target.max()))
        _image_png(stem + "_target.png", target, float(target.max()))
        write_grid(stem + "_recon.f32", recon.astype(np.float32))
    print(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    base = load_config(args.config)
    L = base.load_lightfield()
    root = new_run_dir(args.out or base.output, "compare")
    rows = []
    reports = {}
    for kind in ("slfh", "lf2fs", "stft"):
        data = json.loads(base.to_json())
        data["policy"]["policy"] = kind
        cfg = build_config(data, base.base_dir)
        if not args.quiet:
            print(f"optimizing {kind}", file=sys.stderr)
        result = run_optimization(cfg, L, progress=not args.quiet)
        run_dir = os.path.join(root, kind)
        os.makedirs(run_dir)
        write_run(run_dir, cfg, result)
        report = run_sweep(result.phases, L, "random", args.n, base.eval_seed, cfg.optics, cfg.ranges,
                           loss_domain=cfg.settings.loss_domain)
        report.write_csv(os.path.join(run_dir, "random_sweep.csv"))
        reports[kind] = report
        agg = report.aggregates["random"]
        rows.append([kind, agg["n"], agg["ssim_mean"], agg["ssim_min"], agg["psnr_mean"], agg["psnr_min"]])
    with open(os.path.join(root, "compare.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "n_states", "ssim_mean", "ssim_min", "psnr_mean_db", "psnr_min_db"])
        writer.writerows(rows)
    for r in rows:
        print(f"{r[0]:>6}: ssim mean {r[2]:.4f} min {r[3]:.4f} | psnr mean {r[4]:.2f} dB min {r[5]:.2f} dB")
    print(root)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pupilholo", description=__doc__.split("\n")[0])
    parser.add_argument("--threads", type=int, default=None, help="cap FFT worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize phases for one config")
    p.add_argument("config")
    p.add_argument("--out", help="parent directory of the run (overrides io.output)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="pupil sweeps and epipolar slices of a run")
    p.add_argument("run")
    p.add_argument("--sweep", nargs="+", help=f"one or more of {SWEEP_KINDS}, or 'all'")
    p.add_argument("--n", type=int, default=None, help="states per sweep")
    p.add_argument("--seed", type=int, default=None, help="override the eval seed")
    p.add_argument("--fixed-z", default=None, help="frozen defocus (e.g. 7.5mm)")
    p.add_argument("--fixed-d", default=None, help="frozen diameter (e.g. 8mm or full)")
    p.add_argument("--epipolar", type=int, default=None, metavar="N", help="pupils along the trajectory")
    p.add_argument("--epipolar-d", default=None, help="trajectory pupil diameter (default eyebox/8)")
    p.add_argument("--z", default=None, help="comma-separated defocus values for epipolar slices")
    p.add_argument("--lightfield", default=None, help="evaluate against another light field")
    p.add_argument("--png", action="store_true", help="export per-state reconstructions")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render one pupil state with its target")
    p.add_argument("run")
    p.add_argument("--s", default="0,0", help="shift x,y (e.g. 8mm,0)")
    p.add_argument("--z", default="0", help="defocus (e.g. 12mm)")
    p.add_argument("--d", default="full", help="diameter (e.g. 8mm or full)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="slfh vs lf2fs vs stft on one scene")
    p.add_argument("config")
    p.add_argument("--n", type=int, default=32, help="random pupils in the joint sweep")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        wavefield.set_fft_workers(args.threads)
    try:
        return args.func(args)
    except (MissingArtifactError, MissingViewError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, EmptyApertureError, EmptyPupilError, LightFieldError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
