"""Transmittance estimators from signal/idler/coincidence count images.

Single-image estimators accept arrays of any dimension; the background mask
has the image's shape.  Time-resolved estimators take stacks whose first axis
is the frame index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ParameterError

METHODS = ("t0", "ratio", "optsub", "cov", "scov")
COMBINE_MODES = ("mean", "last", "none")
DEFAULT_BINS = 16


@dataclass
class EstimateImage:
    """Transmittance estimate plus the normalizer it used.

    ``flags`` marks pixels whose estimate is undefined or degraded (zero idler
    counts for the ratio, zero idler variance for CoV); they are excluded from
    SNR statistics.
    """

    t_hat: np.ndarray
    method: str
    background_mean: float | np.ndarray
    flags: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if self.flags is None:
            self.flags = np.zeros(np.shape(self.t_hat), dtype=bool)

    def valid(self):
        """Estimates at unflagged pixels, flattened."""
        return np.asarray(self.t_hat)[~self.flags]


@dataclass
class CovMultiplier:
    k_star: np.ndarray
    flags: np.ndarray


def _image(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ParameterError(f"{name} must be an image, not a scalar")
    return arr


def _mask(background, shape):
    mask = np.asarray(background, dtype=bool)
    if mask.shape != shape:
        raise ParameterError(f"background mask shape {mask.shape} does not match image shape {shape}")
    if not mask.any():
        raise DegenerateInputError("background region is empty")
    return mask


def background_mean(n, background):
    """Mean of ``n`` over the background mask; must be positive."""
    n = _image(n, "image")
    value = float(n[_mask(background, n.shape)].mean())
    if not value > 0:
        raise DegenerateInputError("background region has zero mean counts")
    return value


def idler_fluctuation(n_i):
    """``N_i - <N_i>_r`` with the mean over all pixels of the image."""
    n_i = _image(n_i, "idler image")
    return n_i - n_i.mean()


def estimate_t0(n, background):
    """Classical estimate ``N / <N^b>`` (signal or coincidence image)."""
    n = _image(n, "image")
    nb = background_mean(n, background)
    return EstimateImage(n / nb, "t0", nb)


def estimate_ratio(n_s, n_i, background):
    """Ratio estimate ``(N_s / N_i) <N_i> / <N_s^b>``; pixels with ``N_i = 0`` are flagged."""
    n_s = _image(n_s, "signal image")
    n_i = _image(n_i, "idler image")
    if n_s.shape != n_i.shape:
        raise ParameterError("signal and idler images must share a shape")
    nb = background_mean(n_s, background)
    zero = n_i == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(zero, np.nan, n_s / np.where(zero, 1.0, n_i)) * (n_i.mean() / nb)
    return EstimateImage(t, "ratio", nb, zero)


def optsub_weight(eta, mu_spdc, mu_stray):
    """``eta (mu_spdc / (mu_stray + mu_spdc))^2``; zero when the source is dark."""
    if not 0 <= eta <= 1 or mu_spdc < 0 or mu_stray < 0:
        raise ParameterError("need 0 <= eta <= 1 and non-negative photon numbers")
    total = mu_spdc + mu_stray
    return 0.0 if total == 0 else eta * (mu_spdc / total) ** 2


def estimate_optsub(n_s, n_i, t_hat, eta, mu_spdc, mu_stray, background):
    """Optimized subtraction with a prior transmittance map ``t_hat``."""
    n_s = _image(n_s, "signal image")
    n_i = _image(n_i, "idler image")
    t_hat = np.broadcast_to(np.asarray(t_hat, dtype=np.float64), n_s.shape)
    if n_s.shape != n_i.shape:
        raise ParameterError("signal and idler images must share a shape")
    nb = background_mean(n_s, background)
    weight = optsub_weight(eta, mu_spdc, mu_stray)
    t = n_s / nb - t_hat * weight * idler_fluctuation(n_i) / nb
    return EstimateImage(t, "optsub", nb)


def _regression_slope(cov, var):
    flags = ~(var > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(flags, 0.0, cov / np.where(flags, 1.0, var))
    return k, flags


def cov_multiplier(n_stack, i_stack):
    """Per-pixel ``Cov_t[N, N_i] / Var_t[N_i]`` over the frame axis.

    Pixels with zero idler variance get ``k* = 0`` and are flagged.
    """
    n = np.asarray(n_stack, dtype=np.float64)
    ni = np.asarray(i_stack, dtype=np.float64)
    if n.shape != ni.shape:
        raise ParameterError("stacks must share a shape")
    if n.ndim < 2 or n.shape[0] < 2:
        raise ParameterError("need at least two frames along axis 0")
    dn = n - n.mean(axis=0)
    di = ni - ni.mean(axis=0)
    cov = (dn * di).mean(axis=0)
    var = (di * di).mean(axis=0)
    return CovMultiplier(*_regression_slope(cov, var))


def _subtract(n, n_i, k_star, background):
    nb = background_mean(n, background)
    return n / nb - k_star * idler_fluctuation(n_i) / nb, nb


def estimate_cov(n_stack, i_stack, background, combine="mean"):
    """Temporal covariance-over-variance estimate.

    ``k*`` comes from the whole stack; the subtraction is applied per frame
    with that frame's background mean and idler fluctuation.  ``combine``
    selects the output: ``"mean"`` averages the per-frame estimates,
    ``"last"`` keeps the final frame, ``"none"`` returns every frame.
    """
    if combine not in COMBINE_MODES:
        raise ParameterError(f"combine must be one of {COMBINE_MODES}")
    n = np.asarray(n_stack, dtype=np.float64)
    ni = np.asarray(i_stack, dtype=np.float64)
    mult = cov_multiplier(n, ni)
    frames = [_subtract(n[f], ni[f], mult.k_star, background) for f in range(n.shape[0])]
    t = np.stack([fr[0] for fr in frames])
    nb = np.array([fr[1] for fr in frames])
    if combine == "mean":
        return EstimateImage(t.mean(axis=0), "cov", float(nb.mean()), mult.flags)
    if combine == "last":
        return EstimateImage(t[-1], "cov", float(nb[-1]), mult.flags)
    return EstimateImage(t, "cov", nb, np.broadcast_to(mult.flags, t.shape).copy())


def histogram_bins(n, bins=DEFAULT_BINS):
    """Bin index per pixel for ``bins`` equal-width bins over ``[min, max]`` of ``n``."""
    if int(bins) != bins or bins < 1:
        raise ParameterError("bin count must be a positive integer")
    n = _image(n, "image")
    lo, hi = float(n.min()), float(n.max())
    if hi == lo:
        return np.zeros(n.shape, dtype=np.int64)
    idx = np.floor((n - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def scov_multiplier(n, n_i, bins=DEFAULT_BINS):
    """Spatial covariance-over-variance multiplier from a single frame.

    Pixels are grouped by equal-width bins of ``n``; each bin gets the
    regression slope of ``n`` on ``n_i`` over its pixels.  Bins with fewer
    than two pixels or zero idler variance get ``k = 0`` and are flagged.
    """
    n = _image(n, "image")
    n_i = _image(n_i, "idler image")
    if n.shape != n_i.shape:
        raise ParameterError("images must share a shape")
    label = histogram_bins(n, bins).ravel()
    x, y = n_i.ravel(), n.ravel()
    count = np.bincount(label, minlength=bins).astype(np.float64)
    safe = np.where(count > 0, count, 1.0)
    mx = np.bincount(label, x, bins) / safe
    my = np.bincount(label, y, bins) / safe
    dx = x - mx[label]
    dy = y - my[label]
    var = np.bincount(label, dx * dx, bins) / safe
    cov = np.bincount(label, dx * dy, bins) / safe
    k_bin, bad = _regression_slope(cov, var)
    bad |= count < 2
    k_bin = np.where(bad, 0.0, k_bin)
    return CovMultiplier(k_bin[label].reshape(n.shape), bad[label].reshape(n.shape))


def estimate_scov(n, n_i, background, bins=DEFAULT_BINS):
    """Single-frame spatial covariance-over-variance estimate."""
    n = _image(n, "image")
    n_i = _image(n_i, "idler image")
    mult = scov_multiplier(n, n_i, bins)
    t, nb = _subtract(n, n_i, mult.k_star, background)
    return EstimateImage(t, "scov", nb, mult.flags)


def snr(samples):
    """Mean over sample standard deviation (ddof=1); ``inf`` for a constant sequence."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < 2:
        raise ParameterError("SNR needs at least two finite samples")
    sigma = x.std(ddof=1)
    if sigma == 0:
        return math.inf
    return float(x.mean() / sigma)


def normalized_snr(value, dwell):
    """SNR per square-root second of pixel dwell."""
    if not dwell > 0:
        raise ParameterError("dwell time must be positive")
    return value / math.sqrt(dwell)
