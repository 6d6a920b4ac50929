"""Hologram optimization supervised by randomly sampled pupil states of a 4D light field."""

from .errors import (ConfigError, DivergenceError, EmptyApertureError, EmptyPupilError,
                     LightFieldError, MissingArtifactError)
from .evaluation import PupilSweepReport, epipolar_slice, run_sweep
from .farfield import FarFieldConfig, optimize_farfield, project_farfield
from .lightfield import LightField, load_lightfield, project_lightfield, save_lightfield
from .metrics import psnr, ssim
from .optics import OpticalConfig, PupilRanges, PupilState, eyebox_width, pupil_mask
from .optimizer import OptimizerSettings, PhaseVariables, forward_loss, gradient, optimize
from .scenes import synthesize_test_scene
from .supervision import SupervisionPolicy, sample_batch
from .wavefield import average_intensity, project_wave

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DivergenceError", "EmptyApertureError", "EmptyPupilError", "LightFieldError",
    "MissingArtifactError", "PupilSweepReport", "epipolar_slice", "run_sweep", "FarFieldConfig",
    "optimize_farfield", "project_farfield", "LightField", "load_lightfield", "project_lightfield",
    "save_lightfield", "psnr", "ssim", "OpticalConfig", "PupilRanges", "PupilState", "eyebox_width",
    "pupil_mask", "OptimizerSettings", "PhaseVariables", "forward_loss", "gradient", "optimize",
    "synthesize_test_scene", "SupervisionPolicy", "sample_batch", "average_intensity", "project_wave",
]
