"""Virtual raster-scanning microscope.

The classical image is the object transmittance blurred by the signal beam's
Gaussian intensity PSF.  The coincidence PSF is the product of that PSF and
the entanglement-pinhole PSF; for Gaussians this is again a Gaussian whose
inverse squared width is the sum of the two inverse squared widths.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage, optimize

from . import _backend
from .errors import ParameterError
from .photon_model import TAG_LED, CountSample, SourceParams, Stream, expected_counts, sample
from .polarimetry import BETAS, forward_quad_arrays

FWHM_PER_WIDTH = 2.0 * math.sqrt(math.log(2.0))
KERNEL_TRUNCATE = 5.0

# focal resolution (FWHM) and depth of field, micrometres
CLASSICAL_TARGET = (14.4, 92.0)
ICE_TARGET = (10.4, 95.0)
PINHOLE_FOCAL_SHIFT = 43.0


@dataclass(frozen=True)
class PsfModel:
    """Gaussian beam radii (1/e intensity), focal offsets and Rayleigh lengths in micrometres.

    ``w_ep = inf`` disables the entanglement pinhole.
    """

    w_s: float
    z0_s: float
    zr_s: float
    w_ep: float
    z0_ep: float
    zr_ep: float

    def __post_init__(self):
        for name in ("w_s", "zr_s", "w_ep", "zr_ep"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    @classmethod
    def calibrated(cls):
        """Preset matching 14.4/10.4 um focal resolution and 92/95 um depth of field."""
        return cls(**CALIBRATED_PSF)

    def without_pinhole(self):
        return replace(self, w_ep=math.inf)


@dataclass(frozen=True)
class ScanConfig:
    """Raster geometry and stray-light schedule.

    ``step`` must be a whole multiple of the phantom pitch; ``pixels_x`` and
    ``pixels_y`` crop the scan (None scans the whole phantom).  At each pixel
    an LED adding ``stray_mu`` photons per dwell fires with
    ``stray_probability``.
    """

    step: float = 1.0
    z: float = 0.0
    frames: int = 1
    pixels_x: int | None = None
    pixels_y: int | None = None
    stray_probability: float = 0.0
    stray_mu: float = 0.0

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("scan step must be positive")
        if not 0 <= self.stray_probability <= 1:
            raise ParameterError("stray_probability must lie in [0, 1]")
        if self.stray_mu < 0 or not math.isfinite(self.stray_mu):
            raise ParameterError("stray_mu must be finite and non-negative")
        if self.frames < 1:
            raise ParameterError("need at least one frame")
        for name in ("pixels_x", "pixels_y"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ParameterError(f"{name} must be positive")


@dataclass
class CountFrame:
    """One temporal frame of signal, idler and coincidence images."""

    n_s: np.ndarray
    n_i: np.ndarray
    n_c: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.n_s.shape

    def channel(self, name):
        return {"s": self.n_s, "i": self.n_i, "c": self.n_c}[name]


def beam_width(w0, z0, zr, z):
    """Gaussian beam radius ``w0 sqrt(1 + ((z - z0)/zr)^2)``."""
    return w0 * np.sqrt(1.0 + ((np.asarray(z, dtype=np.float64) - z0) / zr) ** 2)


def combine_widths(w_a, w_b):
    """Width of the product of two centred Gaussians of widths ``w_a`` and ``w_b``."""
    return 1.0 / np.sqrt(1.0 / np.square(w_a) + 1.0 / np.square(w_b))


def effective_widths(psf, z, accidental=False):
    """``(w_classical, w_ice)`` at axial position ``z``.

    In accidental mode the coincidence channel carries no pinhole filtering
    and inherits the classical width.
    """
    w_c = beam_width(psf.w_s, psf.z0_s, psf.zr_s, z)
    if accidental or math.isinf(psf.w_ep):
        return w_c, w_c
    w_p = beam_width(psf.w_ep, psf.z0_ep, psf.zr_ep, z)
    return w_c, combine_widths(w_c, w_p)


def gaussian_kernel(width, pitch):
    """Unit-sum sampled Gaussian ``exp(-x^2 / width^2)``."""
    radius = int(math.ceil(KERNEL_TRUNCATE * width / pitch))
    x = np.arange(-radius, radius + 1) * pitch
    k = np.exp(-((x / width) ** 2))
    return k / k.sum()


def blur(image, width, pitch):
    """Separable Gaussian blur with reflective boundaries.

    Raises when the kernel is wider than a non-uniform image axis, where a
    single reflection would no longer define the boundary.
    """
    if not width > 0:
        raise ParameterError("blur width must be positive")
    image = np.asarray(image, dtype=np.float64)
    kernel = gaussian_kernel(width, pitch)
    radius = kernel.size // 2
    out = image
    for axis in range(image.ndim):
        uniform = np.all(np.ptp(image, axis=axis) == 0)
        if uniform:
            continue
        if radius >= image.shape[axis]:
            raise ParameterError(
                f"kernel radius {radius} px exceeds image axis {axis} of {image.shape[axis]} px"
            )
        out = ndimage.convolve1d(out, kernel, axis=axis, mode="reflect")
    return out


def quantum_transmission(phantom, beta):
    """Per-pixel coincidence transmission for an idler analyzer at ``beta`` degrees."""
    if beta is None:
        return phantom.t_map
    if beta not in BETAS:
        raise ParameterError(f"beta must be one of {BETAS}")
    quad = forward_quad_arrays(phantom.t_map, phantom.theta_map, phantom.delta_map)
    return quad[BETAS.index(beta)]


def render_blurred_t(phantom, width, kind="transmittance", beta=None):
    """Effective transmission seen through a Gaussian PSF of 1/e radius ``width``.

    ``kind="quantum"`` with ``beta`` set blurs the polarization-resolved
    coincidence transmission instead of plain T.
    """
    if kind not in ("transmittance", "quantum"):
        raise ParameterError(f"unknown render kind {kind!r}")
    source = quantum_transmission(phantom, beta) if kind == "quantum" else phantom.t_map
    return np.clip(blur(source, width, phantom.pixel_pitch), 0.0, 1.0)


def _scan_grid(phantom, scan):
    ratio = scan.step / phantom.pixel_pitch
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9:
        raise ParameterError("scan step must be a whole multiple of the phantom pitch")
    ny = math.ceil(phantom.height / stride)
    nx = math.ceil(phantom.width / stride)
    py = ny if scan.pixels_y is None else scan.pixels_y
    px = nx if scan.pixels_x is None else scan.pixels_x
    if py > ny or px > nx:
        raise ParameterError(f"scan of {py}x{px} pixels exceeds the {ny}x{nx} field")
    return stride, py, px


def _subsample(image, stride, py, px):
    return image[::stride, ::stride][:py, :px]


def led_mask(seed, shape, probability):
    """Pixels where the stray-light LED fires; drawn once per pixel and held across frames."""
    if probability <= 0:
        return np.zeros(shape, dtype=bool)
    pixel = np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)
    u = _backend.kernels().uniforms(seed, TAG_LED, 0, pixel, np.zeros_like(pixel))[0]
    return u < probability


def transmission_maps(phantom, psf, scan, accidental=False, beta=None):
    """Subsampled (classical, quantum) effective transmission at ``scan.z``."""
    stride, py, px = _scan_grid(phantom, scan)
    w_c, w_q = effective_widths(psf, scan.z, accidental)
    tc = render_blurred_t(phantom, float(w_c), "transmittance")
    kind = "quantum" if beta is not None else "transmittance"
    tq = render_blurred_t(phantom, float(w_q), kind, beta)
    return _subsample(tc, stride, py, px), _subsample(tq, stride, py, px)


def _metadata(source, scan, seed, frame, **extra):
    meta = {"source": asdict(source), "scan": asdict(scan), "seed": int(seed), "frame": int(frame)}
    meta.update(extra)
    return meta


def acquire_scan(phantom, source, psf, scan, seed, frame_offset=0, beta=None):
    """Simulate ``scan.frames`` raster scans; returns a list of CountFrame.

    Frame ``f`` draws from stream frame ``frame_offset + f``, so distinct
    acquisitions sharing a seed (z positions, analyzer angles) stay
    independent while zero-stray and stray-on runs share their photon noise.
    """
    if not isinstance(source, SourceParams):
        raise ParameterError("source must be SourceParams")
    accidental = not source.true_coincidences
    tc, tq = transmission_maps(phantom, psf, scan, accidental, beta)
    shape = tc.shape
    stray = source.mu_stray + scan.stray_mu * led_mask(seed, shape, scan.stray_probability)
    frames = []
    for f in range(scan.frames):
        stream = Stream(seed, frame_offset + f)
        counts = sample(source, tc, tq, stream, stray)
        meta = _metadata(source, scan, seed, frame_offset + f, beta=beta)
        frames.append(CountFrame(counts.n_s, counts.n_i, counts.n_c, meta))
    return frames


def expected_frame(phantom, source, psf, scan, beta=None):
    """Noiseless frame holding the model's expected counts (floats)."""
    accidental = not source.true_coincidences
    tc, tq = transmission_maps(phantom, psf, scan, accidental, beta)
    mean_s, mean_i, mean_c = expected_counts(source, tc, tq)
    meta = _metadata(source, scan, 0, 0, beta=beta, noiseless=True)
    return CountFrame(np.asarray(mean_s), np.asarray(mean_i), np.asarray(mean_c), meta)


def acquire_z_stack(phantoms, source, psf, scan, z_list, seed, noiseless=False):
    """Scan at each z in ``z_list``; returns one list of frames per z.

    ``phantoms`` is a single Phantom or a callable ``z -> Phantom`` for thick
    objects.
    """
    z_list = list(z_list)
    if not z_list:
        raise ParameterError("z_list must not be empty")
    stack = []
    for iz, z in enumerate(z_list):
        phantom = phantoms(z) if callable(phantoms) else phantoms
        cfg = replace(scan, z=float(z))
        if noiseless:
            stack.append([expected_frame(phantom, source, psf, cfg)])
        else:
            stack.append(acquire_scan(phantom, source, psf, cfg, seed, frame_offset=iz * scan.frames))
    return stack


def stack_channel(frames, name):
    """Stack one channel of a frame list into a (frames, H, W) array."""
    return np.stack([fr.channel(name) for fr in frames])


# ---------------------------------------------------------------------------
# calibration of the Gaussian surrogate against the reported resolution / DOF


def calibration_z_grid(center=0.0, half_range=350.0, step=10.0):
    n = int(round(2 * half_range / step))
    return center - half_range + step * np.arange(n + 1)


def _hyperbola_fit(z, r):
    from .metrology import fit_dof

    fit = fit_dof(z, r)
    return fit.params["R0"], 2.0 * fit.params["zR"]


def calibrate_psf(classical=CLASSICAL_TARGET, ice=ICE_TARGET, focal_shift=PINHOLE_FOCAL_SHIFT, z=None):
    """Solve the pinhole waist and Rayleigh length for the target ICE resolution and DOF.

    The signal beam follows directly from the classical targets.  The pinhole
    parameters are found so that a hyperbolic fit of the ICE FWHM over ``z``
    returns the ICE targets.
    """
    r_c, dof_c = classical
    r_q, dof_q = ice
    w_s = r_c / FWHM_PER_WIDTH
    zr_s = dof_c / 2.0
    if z is None:
        z = calibration_z_grid()

    def ice_fit(log_params):
        w_ep, zr_ep = np.exp(log_params)
        w_c = beam_width(w_s, 0.0, zr_s, z)
        w_p = beam_width(w_ep, focal_shift, zr_ep, z)
        return _hyperbola_fit(z, FWHM_PER_WIDTH * combine_widths(w_c, w_p))

    def residual(log_params):
        r0, dof = ice_fit(log_params)
        return [r0 / r_q - 1.0, dof / dof_q - 1.0]

    w_guess = 1.0 / math.sqrt(max(1.0 / (r_q / FWHM_PER_WIDTH) ** 2 - 1.0 / w_s**2, 1e-12))
    sol = optimize.root(residual, np.log([w_guess, dof_q / 2.0]), method="hybr", options={"xtol": 1e-12})
    if not sol.success:
        raise RuntimeError(f"PSF calibration failed: {sol.message}")
    w_ep, zr_ep = np.exp(sol.x)
    return PsfModel(w_s, 0.0, zr_s, float(w_ep), focal_shift, float(zr_ep))


# solved by calibrate_psf(); tests/test_scanner.py checks the two agree
CALIBRATED_PSF = {
    "w_s": 14.4 / FWHM_PER_WIDTH,
    "z0_s": 0.0,
    "zr_s": 46.0,
    "w_ep": 9.613213121978992,
    "z0_ep": PINHOLE_FOCAL_SHIFT,
    "zr_ep": 51.2413805372335,
}
