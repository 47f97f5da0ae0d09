"""Bell/CHSH analysis and ghost-birefringence forward model and inversion.

Angles of half-wave-plate analyzers (alpha, beta) and principal axes (theta)
are in degrees; retardation (delta) is in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DegenerateInputError, InconsistentQuadError, ParameterError
from .photon_model import TAG_BELL

BETAS = (0.0, 45.0, 90.0, 135.0)
CHSH_ALPHAS = (0.0, 45.0)
CHSH_BETAS = (22.5, 67.5)
ARCCOS_TOL = 1e-6
_ZERO_TOL = 1e-12

# status codes returned by invert_birefringence_map
OK = 0
THETA_INDETERMINATE = 1
INCONSISTENT = 2
EMPTY = 3


@dataclass(frozen=True)
class BellModel:
    n0: float
    n1: float = 0.0

    def __post_init__(self):
        if not (self.n0 >= 0 and self.n1 >= 0):
            raise ParameterError("Bell model counts must be non-negative")


@dataclass(frozen=True)
class BirefringencePoint:
    t: float
    theta: float
    delta: float

    def __post_init__(self):
        if not 0 <= self.t <= 1:
            raise ParameterError(f"T must lie in [0, 1], got {self.t}")
        if not 0 <= self.theta < 90:
            raise ParameterError(f"theta must lie in [0, 90), got {self.theta}")
        if not 0 <= self.delta <= math.pi:
            raise ParameterError(f"delta must lie in [0, pi], got {self.delta}")


@dataclass(frozen=True)
class CoincidenceQuad:
    n_0: float
    n_45: float
    n_90: float
    n_135: float

    def __post_init__(self):
        if min(self) < 0:
            raise ParameterError("coincidence counts must be non-negative")

    def __iter__(self):
        return iter((self.n_0, self.n_45, self.n_90, self.n_135))


def bell_mean(alpha, beta, model):
    """Expected coincidences of the EPR state, ``n0 cos^2(alpha - beta) + n1``."""
    d = np.deg2rad(np.asarray(alpha, dtype=np.float64) - beta)
    return model.n0 * np.cos(d) ** 2 + model.n1


def _angle_index(alpha, beta):
    # stream pixel index for an analyzer setting, resolution 0.5 degree over [0, 360)
    a = np.round(np.mod(alpha, 360.0) * 2).astype(np.int64)
    b = np.round(np.mod(beta, 360.0) * 2).astype(np.int64)
    return a * 720 + b


def bell_counts(alpha, beta, model, seed=None, round_index=0):
    """Coincidence counts at analyzer angles; Poisson-sampled when ``seed`` is given."""
    mean = bell_mean(alpha, beta, model)
    if seed is None:
        return mean
    alpha_b, beta_b = np.broadcast_arrays(np.asarray(alpha, dtype=np.float64), np.asarray(beta, dtype=np.float64))
    pixel = _angle_index(alpha_b, beta_b)
    counts = _backend.kernels().poisson(seed, TAG_BELL, round_index, pixel, np.broadcast_to(mean, pixel.shape))
    return int(counts) if np.ndim(counts) == 0 else counts


def correlation_e(n_ab, n_a90_b90, n_a90_b, n_a_b90):
    """Polarization correlation from the four complementary coincidence counts."""
    num = n_ab + n_a90_b90 - n_a90_b - n_a_b90
    den = n_ab + n_a90_b90 + n_a90_b + n_a_b90
    if np.any(np.asarray(den) <= 0):
        raise DegenerateInputError("correlation needs a positive total count")
    return num / den


def correlation_from_counts(counts, alpha, beta):
    """E(alpha, beta) from a callable or mapping ``(alpha, beta) -> count``."""
    get = counts if callable(counts) else (lambda a, b: counts[(a % 180.0, b % 180.0)])
    return correlation_e(get(alpha, beta), get(alpha + 90.0, beta + 90.0), get(alpha + 90.0, beta), get(alpha, beta + 90.0))


def chsh_s(counts):
    """CHSH S at alpha in {0, 45} and beta in {22.5, 67.5} degrees.

    ``counts`` maps ``(alpha mod 180, beta mod 180)`` to a count, or is a
    callable of ``(alpha, beta)``.
    """
    e = {(a, b): correlation_from_counts(counts, a, b) for a in CHSH_ALPHAS for b in CHSH_BETAS}
    return abs(e[0.0, 22.5] - e[0.0, 67.5]) + abs(e[45.0, 22.5] + e[45.0, 67.5])


def chsh_closed_form(model):
    """Noiseless S of the cos^2 model at the CHSH angles."""
    return 2.0 * math.sqrt(2.0) * model.n0 / (model.n0 + 2.0 * model.n1)


def accidental_ratio_for_s(s_target):
    """``n1/n0`` that makes the noiseless S equal ``s_target``."""
    if not 0 < s_target <= 2.0 * math.sqrt(2.0):
        raise ParameterError("target S must lie in (0, 2 sqrt 2]")
    return (2.0 * math.sqrt(2.0) / s_target - 1.0) / 2.0


def fit_bell_curve(alpha, betas, counts):
    """Linear least-squares fit of ``n0 cos^2(alpha - beta) + n1``; returns a BellModel."""
    c2 = np.cos(np.deg2rad(alpha - np.asarray(betas, dtype=np.float64))) ** 2
    design = np.column_stack([c2, np.ones_like(c2)])
    (n0, n1), *_ = np.linalg.lstsq(design, np.asarray(counts, dtype=np.float64), rcond=None)
    return BellModel(max(n0, 0.0), max(n1, 0.0))


def mueller_matrix(theta, delta):
    """Mueller matrix of a linear retarder with axis ``theta`` (deg) and retardation ``delta`` (rad)."""
    c = math.cos(2 * math.radians(theta))
    s = math.sin(2 * math.radians(theta))
    cd, sd = math.cos(delta), math.sin(delta)
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c * c + s * s * cd, c * s * (1 - cd), -s * sd],
        [0.0, c * s * (1 - cd), s * s + c * c * cd, c * sd],
        [0.0, s * sd, -c * sd, cd],
    ])


# Stokes vectors of the signal states heralded by the idler analyzer at each beta
_PROBE_STOKES = {
    0.0: np.array([1.0, 1.0, 0.0, 0.0]),
    45.0: np.array([1.0, 0.0, 1.0, 0.0]),
    90.0: np.array([1.0, -1.0, 0.0, 0.0]),
    135.0: np.array([1.0, 0.0, -1.0, 0.0]),
}


def stokes_coincidences(point):
    """Coincidence rates by explicit Stokes propagation, ``(I + Q) / 2`` per beta."""
    x = mueller_matrix(point.theta, point.delta)
    out = []
    for beta in BETAS:
        s = x @ _PROBE_STOKES[beta] * point.t
        out.append(max(0.5 * (s[0] + s[1]), 0.0))
    return CoincidenceQuad(*out)


def forward_quad_arrays(t, theta, delta):
    """Vectorized closed-form coincidence rates at beta = 0, 45, 90, 135 degrees."""
    t = np.asarray(t, dtype=np.float64)
    c = np.cos(2 * np.deg2rad(theta))
    s = np.sin(2 * np.deg2rad(theta))
    # 1 - cos(delta) without cancellation at small retardation
    h = 2.0 * np.sin(0.5 * np.asarray(delta, dtype=np.float64)) ** 2
    a = s * s * h
    b = np.clip(c * s * h, -1.0, 1.0)
    return (t * (1.0 - 0.5 * a), 0.5 * t * (1 + b), 0.5 * t * a, 0.5 * t * (1 - b))


def forward_birefringence(point):
    """Coincidence rates of a retarder under the EPR state with alpha fixed at 0."""
    return CoincidenceQuad(*(float(v) for v in forward_quad_arrays(point.t, point.theta, point.delta)))


def invert_birefringence_arrays(n0, n45, n90, n135, strict=False):
    """Vectorized inversion; returns ``(t, theta_deg, delta, status)``.

    With ``strict`` an inconsistent quad raises; otherwise the arccos
    argument is clamped and the pixel is flagged ``INCONSISTENT``.
    """
    n0, n45, n90, n135 = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (n0, n45, n90, n135)))
    total = n0 + n45 + n90 + n135
    t = 0.5 * total
    status = np.zeros(total.shape, dtype=np.int8)
    diff = n45 - n135
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (diff * diff + 4.0 * n90 * n90) / (n90 * total)
    zero_ret = (n90 <= _ZERO_TOL * total) & (np.abs(diff) <= _ZERO_TOL * total)
    empty = total <= 0
    arg = 1.0 - ratio
    bad = ~zero_ret & ~empty & ~(np.abs(arg) <= 1.0 + ARCCOS_TOL)
    if strict and np.any(bad):
        raise InconsistentQuadError(f"arccos argument {arg[bad].flat[0]!r} outside [-1, 1]")
    # 1 - cos(delta) = ratio, so delta = 2 asin(sqrt(ratio / 2)); atan2 keeps both ends accurate
    half = np.clip(np.where(np.isfinite(ratio), ratio, 0.0) / 2.0, 0.0, 1.0)
    delta = 2.0 * np.arctan2(np.sqrt(half), np.sqrt(1.0 - half))
    theta = np.mod(np.rad2deg(0.5 * np.arctan2(2.0 * n90, diff)), 90.0)
    # np.mod can round tiny negatives up to exactly 90
    theta = np.where(theta >= 90.0, 0.0, theta)
    delta = np.where(zero_ret, 0.0, delta)
    theta = np.where(zero_ret | empty, np.nan, theta)
    status[bad] = INCONSISTENT
    status[zero_ret] = THETA_INDETERMINATE
    status[empty] = EMPTY
    delta = np.where(empty, np.nan, delta)
    return t, theta, delta, status


@dataclass(frozen=True)
class InversionResult:
    """Recovered retarder; ``theta`` is NaN when it cannot be determined."""

    t: float
    theta: float
    delta: float
    theta_indeterminate: bool = False


def invert_birefringence(quad):
    """Recover (T, theta, delta) from the four coincidence rates."""
    n = tuple(quad)
    if sum(n) <= 0:
        raise DegenerateInputError("quad must have a positive total")
    t, theta, delta, status = invert_birefringence_arrays(*n, strict=True)
    return InversionResult(float(t), float(theta), float(delta), bool(status == THETA_INDETERMINATE))


def birefringence_image(n_images, background, strict=False):
    """Per-pixel (T, theta, delta) maps from coincidence images at beta = 0, 45, 90, 135.

    Images are normalized so that the mean of ``(N0+N45+N90+N135)/2`` over the
    ``background`` mask (clear glass) equals one.  Returns a dict of maps plus
    the per-pixel status codes.
    """
    imgs = [np.asarray(im, dtype=np.float64) for im in n_images]
    if len(imgs) != 4 or any(im.shape != imgs[0].shape for im in imgs):
        raise ParameterError("need four coincidence images of matching shape")
    background = np.asarray(background, dtype=bool)
    if background.shape != imgs[0].shape or not background.any():
        raise ParameterError("background mask must match the images and be non-empty")
    norm = 0.5 * sum(im[background] for im in imgs).mean()
    if norm <= 0:
        raise DegenerateInputError("background region has no coincidences")
    t, theta, delta, status = invert_birefringence_arrays(*(im / norm for im in imgs), strict=strict)
    return {"t": t, "theta": theta, "delta": delta, "status": status}
