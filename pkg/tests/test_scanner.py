import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import erf

from icesim.errors import ParameterError
from icesim.metrology import fit_dof, fit_esf, resolution_from_fit
from icesim.phantom import Phantom, make_birefringent_phantom, make_edge_target
from icesim.photon_model import SourceParams, expected_counts
from icesim.scanner import (
    CALIBRATED_PSF,
    FWHM_PER_WIDTH,
    PsfModel,
    ScanConfig,
    acquire_scan,
    acquire_z_stack,
    beam_width,
    blur,
    calibrate_psf,
    calibration_z_grid,
    combine_widths,
    effective_widths,
    expected_frame,
    gaussian_kernel,
    led_mask,
    render_blurred_t,
    stack_channel,
)


def test_beam_width_and_product_width():
    assert beam_width(2.0, 5.0, 10.0, 5.0) == pytest.approx(2.0)
    assert beam_width(2.0, 5.0, 10.0, 15.0) == pytest.approx(2.0 * math.sqrt(2.0))
    # product of exp(-x^2/a^2) and exp(-x^2/b^2), checked pointwise
    a, b = 3.0, 4.0
    w = combine_widths(a, b)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(np.exp(-(x / a) ** 2 - (x / b) ** 2), np.exp(-(x / w) ** 2), rtol=1e-12)
    assert combine_widths(a, math.inf) == pytest.approx(a)


def test_kernel_unit_sum_and_width():
    k = gaussian_kernel(4.0, 0.5)
    assert k.sum() == pytest.approx(1.0)
    x = (np.arange(k.size) - k.size // 2) * 0.5
    # second moment of exp(-x^2/w^2) is w^2 / 2
    assert (k * x**2).sum() == pytest.approx(8.0, rel=1e-6)


def test_blurred_edge_matches_erf():
    w, pitch, edge = 6.0, 0.5, 64.0
    ph = make_edge_target(edge, shape=(3, 256), pitch=pitch)
    out = blur(ph.t_map, w, pitch)
    x = ph.x_coords()
    oracle = 0.5 * (1.0 + erf((x - edge) / w))
    inner = (x > 20) & (x < 108)
    np.testing.assert_allclose(out[1, inner], oracle[inner], atol=2e-3)
    np.testing.assert_allclose(out[0], out[2])


def test_blur_rejects_wide_kernel_on_structured_axis():
    img = np.zeros((8, 8))
    img[:, 4:] = 1.0
    with pytest.raises(ParameterError):
        blur(img, 5.0, 1.0)
    # uniform axes are skipped, so a tall kernel on constant columns is fine
    out = blur(np.tile(np.linspace(0, 1, 64), (4, 1)), 3.0, 1.0)
    assert out.shape == (4, 64)
    with pytest.raises(ParameterError):
        blur(img, 0.0, 1.0)


def test_calibrated_psf_matches_solver():
    solved = calibrate_psf()
    for key, value in CALIBRATED_PSF.items():
        assert getattr(solved, key) == pytest.approx(value, rel=1e-6)


def test_calibrated_psf_reproduces_targets():
    psf = PsfModel.calibrated()
    z = calibration_z_grid()
    w_c, w_q = effective_widths(psf, z)
    fit_c = fit_dof(z, FWHM_PER_WIDTH * w_c)
    fit_q = fit_dof(z, FWHM_PER_WIDTH * w_q)
    assert fit_c.params["R0"] == pytest.approx(14.4, rel=1e-6)
    assert 2 * fit_c.params["zR"] == pytest.approx(92.0, rel=1e-6)
    assert fit_q.params["R0"] == pytest.approx(10.4, rel=1e-6)
    assert 2 * fit_q.params["zR"] == pytest.approx(95.0, rel=1e-6)


def test_accidental_and_no_pinhole_give_classical_width():
    psf = PsfModel.calibrated()
    w_c, w_q = effective_widths(psf, 20.0, accidental=True)
    assert w_c == w_q
    w_c, w_q = effective_widths(psf.without_pinhole(), 20.0)
    assert w_c == w_q
    w_c, w_q = effective_widths(psf, 0.0)
    assert w_q < w_c


def test_noiseless_edge_resolution():
    psf = PsfModel.calibrated()
    source = SourceParams(2e4, eta=0.7)
    ph = make_edge_target(512.0, shape=(4, 1024))
    frame = expected_frame(ph, source, psf, ScanConfig())
    x = ph.x_coords()
    for counts, target in ((frame.n_s, 14.4), (frame.n_c, None)):
        fit = fit_esf(x, counts.mean(axis=0))
        fwhm, _ = resolution_from_fit(fit)
        if target is not None:
            # sampling at 1 um pitch biases the fit by about pitch^2 / (12 w^2)
            assert fwhm == pytest.approx(target, rel=2e-3)
    w_c, w_q = effective_widths(psf, 0.0)
    fit = fit_esf(x, frame.n_c.mean(axis=0))
    assert resolution_from_fit(fit)[0] == pytest.approx(FWHM_PER_WIDTH * w_q, rel=3e-3)


def test_expected_frame_uses_expected_counts():
    psf = PsfModel.calibrated()
    source = SourceParams(100.0, 5.0, 0.6, tau_c=1e-4)
    ph = Phantom.from_transmittance(np.full((6, 6), 0.4))
    frame = expected_frame(ph, source, psf, ScanConfig())
    s, i, c = expected_counts(source, 0.4, 0.4)
    np.testing.assert_allclose(frame.n_s, s)
    np.testing.assert_allclose(frame.n_i, i)
    np.testing.assert_allclose(frame.n_c, c)
    assert frame.metadata["noiseless"] is True


def test_scan_grid_rules():
    psf = PsfModel.calibrated()
    source = SourceParams(10.0)
    ph = Phantom.from_transmittance(np.ones((10, 10)), pixel_pitch=2.0)
    frames = acquire_scan(ph, source, psf, ScanConfig(step=4.0), seed=0)
    assert frames[0].shape == (5, 5)
    frames = acquire_scan(ph, source, psf, ScanConfig(step=2.0, pixels_x=3, pixels_y=2), seed=0)
    assert frames[0].shape == (2, 3)
    with pytest.raises(ParameterError):
        acquire_scan(ph, source, psf, ScanConfig(step=3.0), seed=0)
    with pytest.raises(ParameterError):
        acquire_scan(ph, source, psf, ScanConfig(pixels_x=20), seed=0)


def test_scan_config_validation():
    with pytest.raises(ParameterError):
        ScanConfig(step=0.0)
    with pytest.raises(ParameterError):
        ScanConfig(stray_probability=1.5)
    with pytest.raises(ParameterError):
        ScanConfig(frames=0)
    with pytest.raises(ParameterError):
        ScanConfig(stray_mu=-1.0)


def test_acquire_scan_deterministic_and_frames_independent():
    psf = PsfModel.calibrated()
    source = SourceParams(50.0, 2.0, 0.7)
    ph = Phantom.from_transmittance(np.full((8, 8), 0.5))
    scan = ScanConfig(frames=3)
    a = acquire_scan(ph, source, psf, scan, seed=4)
    b = acquire_scan(ph, source, psf, scan, seed=4)
    for fa, fb in zip(a, b):
        for ch in "sic":
            np.testing.assert_array_equal(fa.channel(ch), fb.channel(ch))
    assert not np.array_equal(a[0].n_s, a[1].n_s)
    shifted = acquire_scan(ph, source, psf, replace(scan, frames=1), seed=4, frame_offset=2)
    np.testing.assert_array_equal(shifted[0].n_s, a[2].n_s)
    assert stack_channel(a, "c").shape == (3, 8, 8)
    assert a[1].metadata["frame"] == 1 and a[1].metadata["seed"] == 4


def test_led_mask_fraction_and_stray_effect():
    mask = led_mask(3, (200, 200), 0.2)
    assert mask.mean() == pytest.approx(0.2, abs=0.01)
    assert not led_mask(3, (5, 5), 0.0).any()
    psf = PsfModel.calibrated()
    source = SourceParams(20.0, 0.0, 1.0)
    ph = Phantom.from_transmittance(np.ones((40, 40)))
    scan = ScanConfig(stray_probability=0.2, stray_mu=500.0)
    frame = acquire_scan(ph, source, psf, scan, seed=3)[0]
    lit = led_mask(3, (40, 40), 0.2)
    assert frame.n_s[lit].mean() > 400
    assert frame.n_s[~lit].mean() < 40
    # the LED adds singles but no true coincidences
    assert frame.n_c[lit].mean() == pytest.approx(frame.n_c[~lit].mean(), rel=0.3)


def test_quantum_render_uses_analyzer_transmission():
    ph = make_birefringent_phantom([(np.ones((8, 8), bool), 0.8, 0.0, 0.0)], shape=(8, 8))
    t0 = render_blurred_t(ph, 1.0, "quantum", 0.0)
    t90 = render_blurred_t(ph, 1.0, "quantum", 90.0)
    assert np.allclose(t0 + t90, 0.8)
    with pytest.raises(ParameterError):
        render_blurred_t(ph, 1.0, "quantum", 30.0)
    with pytest.raises(ParameterError):
        render_blurred_t(ph, 1.0, "phase")


def test_z_stack_shapes_and_callable_phantom():
    psf = PsfModel.calibrated()
    source = SourceParams(10.0)
    ph = Phantom.from_transmittance(np.ones((6, 6)))
    stack = acquire_z_stack(lambda z: ph, source, psf, ScanConfig(frames=2), [0.0, 10.0], seed=1)
    assert len(stack) == 2 and len(stack[0]) == 2
    assert stack[1][0].metadata["frame"] == 2
    noiseless = acquire_z_stack(ph, source, psf, ScanConfig(), [0.0], seed=1, noiseless=True)
    assert noiseless[0][0].n_s.dtype == np.float64
    with pytest.raises(ParameterError):
        acquire_z_stack(ph, source, psf, ScanConfig(), [], seed=1)


def test_beam_width_two_rayleigh_lengths():
    assert beam_width(3.0, 10.0, 20.0, 50.0) == pytest.approx(3.0 * math.sqrt(5.0))


def test_blur_preserves_constants_and_matches_direct_sum():
    np.testing.assert_allclose(blur(np.full((30, 30), 0.3), 4.0, 1.0), 0.3)
    img = np.ones((41, 41))
    img[20, 20] = 0.0
    w = 3.0
    out = blur(img, w, 1.0)
    yy, xx = np.indices(img.shape)
    g = np.exp(-((xx - 20) ** 2 + (yy - 20) ** 2) / w**2)
    # direct summation of the separable, per-axis normalized kernel
    k1 = np.exp(-np.arange(-15, 16) ** 2 / w**2)
    dip = g / k1.sum() ** 2
    np.testing.assert_allclose(out, 1.0 - dip, atol=1e-12)


def test_edge_shift_moves_fitted_centre():
    psf = PsfModel.calibrated()
    source = SourceParams(1e3, eta=0.8)
    centres = []
    for shift in (0, 7):
        ph = make_edge_target(256.0 + shift * 2.0, shape=(2, 256), pitch=2.0)
        frame = expected_frame(ph, source, psf, ScanConfig(step=2.0))
        centres.append(fit_esf(ph.x_coords(), frame.n_s.mean(axis=0))["x0"])
    assert centres[1] - centres[0] == pytest.approx(14.0, abs=1e-6)


def test_symmetric_z_gives_symmetric_widths():
    psf = PsfModel.calibrated().without_pinhole()
    source = SourceParams(1e3, eta=0.8)
    ph = make_edge_target(512.0, shape=(2, 1024))
    widths = []
    for z in (-60.0, 60.0):
        frame = expected_frame(ph, source, psf, ScanConfig(z=z))
        widths.append(fit_esf(ph.x_coords(), frame.n_s.mean(axis=0))["w"])
    assert widths[0] == pytest.approx(widths[1], rel=1e-9)


def test_edge_at_centre_sums_to_half():
    ph = make_edge_target(32.0, shape=(4, 64))
    assert ph.t_map.sum() == pytest.approx(ph.t_map.size / 2)
