import math

import numpy as np
import pytest

from icesim.errors import ParameterError
from icesim.phantom import (
    Phantom,
    load_phantom,
    make_bar_target,
    make_birefringent_phantom,
    make_edge_target,
    make_fiber_volume,
    save_phantom,
    usaf_bar_width,
)


def test_phantom_validates_ranges():
    ones = np.ones((4, 4))
    zeros = np.zeros((4, 4))
    with pytest.raises(ParameterError):
        Phantom(ones * 1.1, zeros, zeros)
    with pytest.raises(ParameterError):
        Phantom(ones, zeros + 90.0, zeros)
    with pytest.raises(ParameterError):
        Phantom(ones, zeros, zeros + 4.0)
    with pytest.raises(ParameterError):
        Phantom(ones, zeros[:3], zeros)
    with pytest.raises(ParameterError):
        Phantom(ones, zeros, zeros, pixel_pitch=0.0)
    with pytest.raises(ParameterError):
        Phantom(np.full((4, 4), np.nan), zeros, zeros)


def test_phantom_maps_are_read_only():
    ph = Phantom.from_transmittance(np.ones((3, 5)), pixel_pitch=2.0)
    assert ph.shape == (3, 5)
    assert ph.height == 3 and ph.width == 5
    with pytest.raises(ValueError):
        ph.t_map[0, 0] = 0.5
    np.testing.assert_allclose(ph.x_coords(), [1.0, 3.0, 5.0, 7.0, 9.0])


def test_usaf_widths():
    # group 0 element 1 is 1 lp/mm -> 500 um lines
    assert usaf_bar_width(0, 1) == pytest.approx(500.0)
    assert usaf_bar_width(4, 1) == pytest.approx(31.25)
    assert usaf_bar_width(1, 7) == pytest.approx(125.0)


def test_bar_target_geometry():
    ph = make_bar_target([4.0, 2.0], pitch=1.0, margin=3)
    t = ph.t_map
    assert set(np.unique(t)) == {0.0, 1.0}
    # three bars per group, each w wide and 5w tall
    assert (t == 0).sum() == 3 * (4 * 20) + 3 * (2 * 10)
    row = t[t.shape[0] // 2]
    edges = np.flatnonzero(np.diff(row) != 0)
    assert len(edges) == 12


def test_bar_target_rejects_subpixel_bars():
    with pytest.raises(ParameterError):
        make_bar_target([0.5], pitch=1.0)
    blank = make_bar_target([])
    assert np.all(blank.t_map == 1.0)


def test_edge_target():
    ph = make_edge_target(10.0, shape=(2, 8), pitch=2.0)
    np.testing.assert_array_equal(ph.t_map[0], [0, 0, 0, 0, 0, 1, 1, 1])
    with pytest.raises(ParameterError):
        make_edge_target(20.0, shape=(2, 8), pitch=2.0)


def test_fiber_volume_deterministic_and_opaque():
    a = make_fiber_volume(6, 3.0, 200.0, seed=5, shape=(32, 32))
    b = make_fiber_volume(6, 3.0, 200.0, seed=5, shape=(32, 32))
    c = make_fiber_volume(6, 3.0, 200.0, seed=6, shape=(32, 32))
    assert len(a) == 5
    assert [z for _, z in a] == [0.0, 50.0, 100.0, 150.0, 200.0]
    for (pa, _), (pb, _) in zip(a, b):
        np.testing.assert_array_equal(pa.t_map, pb.t_map)
    assert any(not np.array_equal(pa.t_map, pc.t_map) for (pa, _), (pc, _) in zip(a, c))
    covered = sum((p.t_map == 0).sum() for p, _ in a)
    assert covered > 0
    assert all(set(np.unique(p.t_map)) <= {0.0, 1.0} for p, _ in a)


def test_fiber_width_matches_diameter():
    # a uniform band of width d has perpendicular variance d^2 / 12
    (ph, _), = make_fiber_volume(1, 6.0, 0.0, seed=2, shape=(128, 128), n_slices=1)
    yy, xx = np.nonzero(ph.t_map == 0)
    pts = np.column_stack([xx, yy]).astype(float)
    pts -= pts.mean(axis=0)
    minor = np.linalg.eigvalsh(np.cov(pts.T))[0]
    assert math.sqrt(12.0 * minor) == pytest.approx(6.0, rel=0.15)


def test_birefringent_regions_overwrite():
    regions = [
        (("rect", 0, 0, 4, 4), 0.5, 30.0, 1.0),
        (("disk", 1, 1, 1), 0.8, 10.0, 2.0),
    ]
    ph = make_birefringent_phantom(regions, shape=(6, 6))
    assert ph.t_map[1, 1] == 0.8 and ph.theta_map[1, 1] == 10.0
    assert ph.t_map[3, 3] == 0.5 and ph.delta_map[3, 3] == 1.0
    assert ph.t_map[5, 5] == 1.0 and ph.delta_map[5, 5] == 0.0
    with pytest.raises(ParameterError):
        make_birefringent_phantom([(("rect", 0, 0, 1, 1), 0.5, 95.0, 1.0)], shape=(4, 4))
    with pytest.raises(ParameterError):
        make_birefringent_phantom([(("ellipse", 0, 0, 1), 0.5, 5.0, 1.0)], shape=(4, 4))


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ph = Phantom(rng.random((5, 7)), rng.random((5, 7)) * 89.9, rng.random((5, 7)) * 3.0, 2.5, 40.0)
    save_phantom(ph, tmp_path / "ph")
    back = load_phantom(tmp_path / "ph")
    for attr in ("t_map", "theta_map", "delta_map"):
        np.testing.assert_array_equal(getattr(ph, attr), getattr(back, attr))
    assert back.pixel_pitch == 2.5 and back.z_extent == 40.0


def test_load_transmittance_only(tmp_path):
    np.savetxt(tmp_path / "t.csv", np.full((3, 3), 0.25), delimiter=",")
    ph = load_phantom(tmp_path)
    assert np.all(ph.theta_map == 0) and ph.pixel_pitch == 1.0
