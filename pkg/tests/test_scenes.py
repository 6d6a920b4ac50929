import numpy as np
import pytest

from pupilholo.errors import ConfigError
from pupilholo.lightfield import project_lightfield
from pupilholo.optics import OpticalConfig, PupilState
from pupilholo.scenes import make_mask, make_texture, synthesize_test_scene

CFG = OpticalConfig((440e-9,), 8e-6, (64, 64), 0.4)


def test_single_plane_at_focus_has_no_parallax():
    L = synthesize_test_scene({"grid": [5, 5], "planes": [{"depth_mm": 0, "texture": "noise:1"}]}, CFG)
    np.testing.assert_array_equal(L.views, np.broadcast_to(L.views[2, 2], L.views.shape))


def test_point_displacement_275um_at_edge_view():
    scene = {"grid": [5, 5], "resolution": [128, 128],
             "points": [{"depth_mm": 10, "position_px": [64, 64], "intensity": 1.0}]}
    L = synthesize_test_scene(scene, CFG)
    edge = L.views[2, 4, :, :, 0]          # q = (11 mm, 0)
    assert L.view_coords[2, 4, 0] == pytest.approx(11e-3)
    cols = np.arange(128)
    centroid = (edge.sum(axis=0) * cols).sum() / edge.sum()
    shift_m = abs(centroid - 64) * 8e-6
    assert shift_m == pytest.approx(275e-6, abs=1e-9)
    # refocusing at the point's depth aligns the views
    out = project_lightfield(L, PupilState((0, 0), 10e-3, 30e-3), 0, CFG).intensity
    assert np.unravel_index(np.argmax(out), out.shape) == (64, 64)


def test_occluded_texture_revealed_in_edge_views():
    scene = {"grid": [5, 5],
             "planes": [{"depth_mm": 0, "texture": "constant:1.0"},
                        {"depth_mm": 10, "texture": "constant:0.0", "mask": {"rect": [24, 24, 40, 40]}}]}
    L = synthesize_test_scene(scene, CFG)
    center = L.views[2, 2, :, :, 0]
    assert center[32, 26] == 0.0           # occluded in the central view
    visible = [L.views[2, k, 32, 26, 0] for k in range(5)]
    assert max(visible) == pytest.approx(1.0)   # the far plane shows in some edge view


def test_items_composited_by_depth_not_listing_order():
    a = {"depth_mm": 5, "texture": "constant:0.2", "mask": {"disc": [32, 32, 10]}}
    b = {"depth_mm": 0, "texture": "constant:0.9"}
    L1 = synthesize_test_scene({"grid": [3, 3], "planes": [a, b]}, CFG)
    L2 = synthesize_test_scene({"grid": [3, 3], "planes": [b, a]}, CFG)
    np.testing.assert_array_equal(L1.views, L2.views)
    assert L1.views[1, 1, 32, 32, 0] == pytest.approx(0.2)


def test_colors_and_channels():
    scene = {"grid": [3, 3], "channels": 3,
             "planes": [{"depth_mm": 0, "texture": "constant:1", "color": [1.0, 0.5, 0.0]}]}
    L = synthesize_test_scene(scene, CFG)
    np.testing.assert_allclose(L.views[0, 0, 5, 5], [1.0, 0.5, 0.0])


@pytest.mark.parametrize("scene,key", [
    ({"grid": [3, 3], "bogus": 1}, "scene"),
    ({"planes": [{"depth_mm": 0, "texture": "constant:1", "colour": 1}]}, "scene.planes[0]"),
    ({"planes": [{"depth_mm": 0, "texture": "constant:1", "color": -1}]}, "scene.planes[0]"),
    ({"points": [{"depth_mm": 0, "position_px": [1, 1], "intensity": -2}]}, "scene.points[0]"),
    ({"background": -0.1}, "scene.background"),
])
def test_invalid_scenes_rejected(scene, key):
    with pytest.raises(ConfigError) as err:
        synthesize_test_scene(scene, CFG)
    assert err.value.key == key


def test_textures_are_periodic_and_positive():
    for spec in ("checker:8", "stripes:16", "stripes:16:vertical", "noise:3:2", "constant:0.4"):
        t = make_texture(spec, (64, 64))
        assert t.shape == (64, 64) and t.min() >= 0
    t = make_texture("checker:8", (64, 64))
    np.testing.assert_array_equal(t, np.roll(t, 16, axis=1))


def test_masks():
    m = make_mask({"rect": [2, 3, 6, 9]}, (10, 10))
    assert m.sum() == 4 * 6
    d = make_mask({"disc": [5, 5, 2]}, (10, 10))
    assert d[5, 5] == 1 and d[0, 0] == 0
    assert make_mask("full", (4, 4)).all()
