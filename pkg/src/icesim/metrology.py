"""Resolution, depth of field and image-similarity analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .errors import DegenerateInputError, FitError, ParameterError

SQRT_LN2 = math.sqrt(math.log(2.0))
Z95 = 1.96
MAX_ITER = 200
STEP_TOL = 1e-9


@dataclass
class FitResult:
    """Least-squares parameters with 95% confidence half-widths."""

    params: dict
    ci95: dict
    residual_norm: float
    covariance: np.ndarray = field(default=None, repr=False)

    def __getitem__(self, name):
        return self.params[name]


def _least_squares(fun, jac, p0, names, n_points):
    try:
        sol = optimize.least_squares(
            fun, p0, jac=jac, method="lm", xtol=STEP_TOL, ftol=1e-15, gtol=1e-15,
            max_nfev=MAX_ITER * (len(p0) + 1),
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(str(exc)) from exc
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise FitError(f"least squares did not converge: {sol.message}")
    dof = n_points - len(p0)
    rss = float(sol.fun @ sol.fun)
    j = sol.jac
    try:
        cov = np.linalg.inv(j.T @ j) * (rss / dof if dof > 0 else math.inf)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian at the optimum") from exc
    tq = stats.t.ppf(0.975, dof) if dof > 0 else math.inf
    half = tq * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    params = dict(zip(names, (float(v) for v in sol.x)))
    ci95 = dict(zip(names, (float(v) for v in half)))
    return params, ci95, math.sqrt(rss), cov


def esf_model(x, a, b, x0, w):
    return a * special.erf((np.asarray(x) - x0) / w) + b


def _esf_initial(x, y):
    lo, hi = float(y.min()), float(y.max())
    a = (hi - lo) / 2.0
    b = (hi + lo) / 2.0
    # first crossing of the mid level, linearly interpolated
    above = y >= b
    idx = np.flatnonzero(above[1:] != above[:-1])
    if idx.size:
        i = idx[len(idx) // 2]
        x0 = x[i] + (b - y[i]) * (x[i + 1] - x[i]) / (y[i + 1] - y[i]) if y[i + 1] != y[i] else x[i]
    else:
        x0 = float(np.median(x))
    half = y.size // 2
    if y[half:].mean() < y[:half].mean():
        a = -a
    w = (x.max() - x.min()) / 4.0
    return [a, b, x0, w]


def fit_esf(x, y):
    """Fit ``a erf((x - x0)/w) + b`` to an edge profile.

    The sign of ``w`` is canonicalized to positive (flipping ``a``).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 5:
        raise ParameterError("ESF fit needs at least five (x, value) points")
    if np.ptp(y) == 0:
        raise FitError("flat profile has no edge")

    def fun(p):
        return esf_model(x, *p) - y

    def jac(p):
        a, _, x0, w = p
        u = (x - x0) / w
        g = 2.0 / math.sqrt(math.pi) * np.exp(-u * u)
        return np.column_stack([special.erf(u), np.ones_like(x), -a * g / w, -a * g * u / w])

    params, ci95, rnorm, cov = _least_squares(fun, jac, _esf_initial(x, y), ("a", "b", "x0", "w"), x.size)
    if params["w"] < 0:
        params["w"] = -params["w"]
        params["a"] = -params["a"]
    if not params["w"] > 0:
        raise FitError("edge width collapsed to zero")
    return FitResult(params, ci95, rnorm, cov)


def resolution_from_fit(fit):
    """FWHM of the Gaussian LSF and its standard error.

    The 95% interval is taken as the full width (twice the half-width), which
    makes the returned value the propagated standard error of the FWHM.
    """
    w = fit.params["w"]
    resolution = 2.0 * SQRT_LN2 * w
    stderr = SQRT_LN2 / Z95 * (2.0 * fit.ci95["w"])
    return resolution, stderr


def hyperbola_model(z, r0, z0, zr):
    return r0 * np.sqrt(1.0 + ((np.asarray(z) - z0) / zr) ** 2)


@dataclass
class DofResult:
    fit: FitResult
    dof: float
    stderr: float

    @property
    def r0(self):
        return self.fit.params["R0"]


def fit_dof(z, r):
    """Fit ``R0 sqrt(1 + ((z - z0)/zR)^2)`` to resolution-versus-depth points."""
    z = np.asarray(z, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if z.shape != r.shape or z.size < 5:
        raise ParameterError("DOF fit needs at least five (z, R) points")
    i = int(np.argmin(r))
    r0 = float(r[i])
    wide = np.flatnonzero(r >= math.sqrt(2.0) * r0)
    zr0 = float(np.min(np.abs(z[wide] - z[i]))) if wide.size else float(np.ptp(z)) / 4.0
    p0 = [r0, float(z[i]), max(zr0, 1e-6 * max(np.ptp(z), 1.0))]

    def fun(p):
        return hyperbola_model(z, *p) - r

    def jac(p):
        r0_, z0_, zr_ = p
        d = (z - z0_) / zr_
        s = np.sqrt(1.0 + d * d)
        return np.column_stack([s, -r0_ * d / (zr_ * s), -r0_ * d * d / (zr_ * s)])

    params, ci95, rnorm, cov = _least_squares(fun, jac, p0, ("R0", "z0", "zR"), z.size)
    params["R0"] = abs(params["R0"])
    params["zR"] = abs(params["zR"])
    if not (params["R0"] > 0 and params["zR"] > 0):
        raise FitError("degenerate hyperbola")
    return FitResult(params, ci95, rnorm, cov)


def dof_from_fit(fit):
    """Depth of field ``2 zR`` and its standard error (full 95% width / 1.96)."""
    return 2.0 * fit.params["zR"], 2.0 * fit.ci95["zR"] / Z95


def ssim(img1, img2):
    """Global structural similarity without stabilization constants."""
    a = np.asarray(img1, dtype=np.float64).ravel()
    b = np.asarray(img2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ParameterError("images must have matching dimensions")
    if a.size < 2:
        raise ParameterError("SSIM needs at least two pixels")
    mu1, mu2 = a.mean(), b.mean()
    da, db = a - mu1, b - mu2
    var1, var2 = da @ da / a.size, db @ db / b.size
    cov = da @ db / a.size
    den = (mu1 * mu1 + mu2 * mu2) * (var1 + var2)
    if den == 0:
        raise DegenerateInputError("SSIM undefined for constant zero-mean images")
    return float(4.0 * mu1 * mu2 * cov / den)


@dataclass
class Crossing:
    """Where an SSIM curve first drops below a threshold.

    ``status`` is ``"interpolated"``, ``"not_reached"`` (curve stays above
    within the range) or ``"below_range"`` (already below at the first
    non-zero power).
    """

    power: float
    status: str


def threshold_crossing(powers, values, level=0.1):
    """First crossing of ``level``, linearly interpolated in log10(power)."""
    powers = np.asarray(powers, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    below = np.flatnonzero(values < level)
    if not below.size:
        return Crossing(math.nan, "not_reached")
    j = int(below[0])
    if j == 0 or powers[j - 1] <= 0:
        return Crossing(float(powers[j]), "below_range")
    x0, x1 = math.log10(powers[j - 1]), math.log10(powers[j])
    y0, y1 = values[j - 1], values[j]
    x = x0 + (level - y0) * (x1 - x0) / (y1 - y0)
    return Crossing(10.0**x, "interpolated")


@dataclass
class SsimCurve:
    powers: np.ndarray
    ssim_classical: np.ndarray
    ssim_ice: np.ndarray
    classical_crossing: Crossing
    ice_crossing: Crossing

    @property
    def delta_ssim(self):
        return self.ssim_ice - self.ssim_classical

    @property
    def suppression_ratio(self):
        """ICE crossing power over classical crossing power (NaN when either is open)."""
        if self.classical_crossing.status == "interpolated" and self.ice_crossing.status == "interpolated":
            return self.ice_crossing.power / self.classical_crossing.power
        return math.nan


def ssim_curve(powers, classical_images, ice_images, level=0.1):
    """SSIM of each channel against its own zero-power image, plus threshold crossings."""
    powers = np.asarray(powers, dtype=np.float64)
    if powers.size < 2 or powers[0] != 0 or np.any(np.diff(powers) <= 0):
        raise ParameterError("powers must start at zero and increase strictly")
    if len(classical_images) != powers.size or len(ice_images) != powers.size:
        raise ParameterError("one image per power level is required per channel")
    s_c = np.array([ssim(classical_images[0], im) for im in classical_images])
    s_q = np.array([ssim(ice_images[0], im) for im in ice_images])
    return SsimCurve(powers, s_c, s_q, threshold_crossing(powers, s_c, level), threshold_crossing(powers, s_q, level))


def edge_profile(image, axis=1):
    """Average an edge image along the edge direction."""
    return np.asarray(image, dtype=np.float64).mean(axis=1 - axis)
