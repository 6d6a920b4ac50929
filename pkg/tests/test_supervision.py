import numpy as np
import pytest
from scipy import stats

from pupilholo.errors import ConfigError
from pupilholo.lightfield import project_lightfield
from pupilholo.optics import OpticalConfig, PupilRanges
from pupilholo.scenes import synthesize_test_scene
from pupilholo.supervision import (BASELINE_BAND_LIMIT, SupervisionPolicy, batch_seed,
                                   preset_ranges, sample_batch, sample_pupils)

CFG = OpticalConfig((440e-9,), 8e-6, (32, 32), 0.4)
W = 22e-3
SCENE = {"grid": [5, 5], "planes": [{"depth_mm": 0, "texture": "noise:2:2"},
                                    {"depth_mm": 6, "texture": "checker:4", "mask": {"rect": [8, 8, 24, 20]}}]}


@pytest.fixture(scope="module")
def lf():
    return synthesize_test_scene(SCENE, CFG)


def test_lf2fs_focal_grid():
    pol = SupervisionPolicy("lf2fs", PupilRanges(0, 12e-3, 8e-3, 20e-3), lf2fs_layers=5)
    ps = sample_pupils(pol, 0, CFG)
    np.testing.assert_allclose([p.z for p in ps], [0, 3e-3, 6e-3, 9e-3, 12e-3], atol=1e-15)
    assert all(p.shift == (0.0, 0.0) and p.d == pytest.approx(W) for p in ps)


def test_stft_grid_arithmetic():
    pol = SupervisionPolicy("stft", PupilRanges(0, 12e-3, 8e-3, 20e-3), stft_grid=(5, 5), stft_d=5.5e-3)
    ps = sample_pupils(pol, 0, CFG)
    xs = sorted({round(p.shift[0], 12) for p in ps})
    np.testing.assert_allclose(xs, [-8.25e-3, -4.125e-3, 0, 4.125e-3, 8.25e-3], atol=1e-12)
    assert len(ps) == 25
    for p in ps:
        assert max(abs(p.shift[0]), abs(p.shift[1])) + p.d / 2 <= W / 2 + 1e-12
    # row-major: y outer, x inner
    assert ps[0].shift == pytest.approx((-8.25e-3, -8.25e-3)) and ps[1].shift[1] == ps[0].shift[1]


def test_stft_defaults_to_quarter_eyebox():
    pol = SupervisionPolicy("stft", PupilRanges(2e-3, 12e-3, 8e-3, 20e-3))
    ps = sample_pupils(pol, 0, CFG)
    assert len(ps) == 64 and ps[0].d == pytest.approx(W / 4) and ps[0].z == 2e-3


def test_slfh_deterministic_and_iteration_dependent(lf):
    pol = SupervisionPolicy("slfh", PupilRanges(0, 15e-3, 8e-3, 20e-3), batch_size=4, rng_seed=7)
    a = sample_batch(pol, lf, 0, CFG)
    b = sample_batch(pol, lf, 0, CFG)
    assert [s.pupil for s in a] == [s.pupil for s in b]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.targets[0].intensity, y.targets[0].intensity)
    assert [s.pupil for s in sample_batch(pol, lf, 1, CFG)] != [s.pupil for s in a]
    assert batch_seed(7, 0) != batch_seed(8, 0)


def test_slfh_pupils_stay_in_eyebox():
    pol = SupervisionPolicy("slfh", PupilRanges(0, 15e-3, 8e-3, 20e-3), batch_size=64)
    for p in sample_pupils(pol, 3, CFG):
        assert max(abs(p.shift[0]), abs(p.shift[1])) + p.d / 2 <= W / 2 + 1e-15


def test_marginals_uniform_over_10000_draws():
    R = PupilRanges(0.0, 15e-3, 2e-3, 20e-3, r_max=1e-3)
    pol = SupervisionPolicy("slfh", R, batch_size=4, rng_seed=3)
    ps = [p for it in range(2500) for p in sample_pupils(pol, it, CFG)]
    cols = {"x": ([p.shift[0] for p in ps], -1e-3, 1e-3), "y": ([p.shift[1] for p in ps], -1e-3, 1e-3),
            "z": ([p.z for p in ps], 0.0, 15e-3), "d": ([p.d for p in ps], 2e-3, 20e-3)}
    for name, (vals, lo, hi) in cols.items():
        vals = np.asarray(vals)
        assert (vals.max() - vals.min()) >= 0.99 * (hi - lo), name
        ks = stats.kstest(vals, "uniform", args=(lo, hi - lo)).statistic
        assert ks < 0.02, name


def test_degenerate_slfh_equals_lf2fs_bitwise(lf):
    R = PupilRanges(0, 12e-3, 8e-3, 20e-3)
    lf2 = sample_batch(SupervisionPolicy("lf2fs", R, lf2fs_layers=4), lf, 0, CFG)
    for s in lf2:
        deg = PupilRanges(s.pupil.z, s.pupil.z, W, W, r_max=0.0)
        got = sample_batch(SupervisionPolicy("slfh", deg, batch_size=1, rng_seed=11), lf, 5, CFG)[0]
        np.testing.assert_array_equal(got.targets[0].intensity, s.targets[0].intensity)


def test_lf2fs_targets_equal_direct_projection(lf):
    R = PupilRanges(0, 12e-3, 8e-3, 20e-3)
    batch = sample_batch(SupervisionPolicy("lf2fs", R, lf2fs_layers=5), lf, 0, CFG)
    assert len(batch) == 5
    for s in batch:
        direct = project_lightfield(lf, s.pupil, 0, CFG).intensity
        np.testing.assert_array_equal(s.targets[0].intensity, direct)


def test_every_target_matches_its_pupil(lf):
    pol = SupervisionPolicy("slfh", PupilRanges(0, 15e-3, 8e-3, 20e-3), batch_size=3)
    for s in sample_batch(pol, lf, 2, CFG):
        assert s.targets[0].pupil == s.pupil
        np.testing.assert_array_equal(s.targets[0].intensity,
                                      project_lightfield(lf, s.pupil, 0, CFG).intensity)


def test_policy_validation():
    R = PupilRanges(0, 15e-3, 2e-3, 20e-3)
    for kwargs, key in [(dict(kind="nope"), "policy"), (dict(kind="slfh", batch_size=0), "batch"),
                        (dict(kind="lf2fs", lf2fs_layers=0), "layers"),
                        (dict(kind="stft", stft_grid=(0, 3)), "grid"),
                        (dict(kind="slfh", band_limit=2.0), "band_limit")]:
        with pytest.raises(ConfigError) as err:
            SupervisionPolicy(ranges=R, **kwargs)
        assert err.value.key == key


def test_pupils_that_cannot_fit_are_rejected():
    pol = SupervisionPolicy("slfh", PupilRanges(0, 15e-3, 30e-3, 40e-3))
    with pytest.raises(ConfigError):
        sample_pupils(pol, 0, CFG)
    pol = SupervisionPolicy("stft", PupilRanges(0, 15e-3, 2e-3, 20e-3), stft_d=30e-3)
    with pytest.raises(ConfigError):
        sample_pupils(pol, 0, CFG)


def test_loose_shift_bound_warns(caplog):
    pol = SupervisionPolicy("slfh", PupilRanges(0, 15e-3, 2e-3, 20e-3, r_max=5e-3))
    sample_pupils(pol, 0, CFG)
    assert "leave" in caplog.text


def test_band_limit_defaults():
    R = PupilRanges(0, 15e-3, 2e-3, 20e-3)
    assert SupervisionPolicy("slfh", R).effective_band_limit is None
    assert SupervisionPolicy("lf2fs", R).effective_band_limit == BASELINE_BAND_LIMIT
    assert SupervisionPolicy("stft", R, band_limit=0.7).effective_band_limit == 0.7


def test_presets():
    hw = preset_ranges("paper-hw", CFG)
    assert (hw.z_min, hw.z_max, hw.d_min, hw.d_max) == (0.0, 15e-3, 2e-3, 20e-3)
    sim = preset_ranges("paper-sim", CFG)
    assert sim.d_min == pytest.approx(0.1 * W) and sim.d_max == pytest.approx(0.4 * W)
    with pytest.raises(ConfigError):
        preset_ranges("x", CFG)


def test_channel_mismatch_rejected(lf):
    rgb = OpticalConfig((638e-9, 520e-9, 440e-9), 8e-6, (32, 32), 0.4)
    with pytest.raises(ConfigError):
        sample_batch(SupervisionPolicy("lf2fs", PupilRanges(0, 1e-3, 8e-3, 9e-3)), lf, 0, rgb)
