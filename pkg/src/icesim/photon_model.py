"""Per-dwell photon statistics of the twin-beam source.

Counts are drawn from counter-based streams addressed by
``(seed, frame, pixel, tag)``: a pixel's counts never depend on how many other
pixels are sampled alongside it, or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from . import _backend
from .errors import ParameterError

ENTANGLED = "entangled"
CLASSICAL_SPLIT = "classical_split"
MODES = (ENTANGLED, CLASSICAL_SPLIT)

# stream tags; one independent sub-stream per purpose
TAG_PAIRS = 1
TAG_PAIR_NUMBER = 2
TAG_STRAY_S = 3
TAG_STRAY_I = 4
TAG_ACCIDENTAL = 5
TAG_LED = 6
TAG_CLASSICAL_S = 7
TAG_CLASSICAL_I = 8
TAG_BELL = 9

_MAX_INDEX = 2**32


@dataclass(frozen=True)
class SourceParams:
    """Source and detector statistics for one pixel dwell.

    ``mu_spdc`` and ``mu_stray`` are mean photon numbers per dwell, the latter
    per detector and before detection efficiency.  ``duty`` is the chopper duty
    cycle of the classical source; ``true_coincidences=False`` keeps only
    accidental coincidences.
    """

    mu_spdc: float
    mu_stray: float = 0.0
    eta: float = 1.0
    tau_c: float = 8e-9
    t_dwell: float = 1.0
    mode: str = ENTANGLED
    true_coincidences: bool = True
    duty: float = 0.5

    def __post_init__(self):
        for name in ("mu_spdc", "mu_stray", "eta", "tau_c", "t_dwell", "duty"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be finite and non-negative, got {value!r}")
        if self.eta > 1:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta!r}")
        if self.tau_c <= 0 or self.t_dwell <= 0:
            raise ParameterError("tau_c and t_dwell must be positive")
        if self.tau_c > self.t_dwell:
            raise ParameterError("coincidence window cannot exceed the dwell time")
        if not 0 < self.duty <= 1:
            raise ParameterError(f"duty must lie in (0, 1], got {self.duty!r}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def window_fraction(self):
        return self.tau_c / self.t_dwell


@dataclass
class CountSample:
    """Signal, idler and coincidence counts (scalars or same-shape arrays)."""

    n_s: np.ndarray
    n_i: np.ndarray
    n_c: np.ndarray
    n_true: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class Stream:
    """A seeded position in the counter-based random stream.

    ``frame`` selects the temporal repetition; ``offset`` is added to the
    pixel index so disjoint pixel ranges can share one seed.
    """

    seed: int
    frame: int = 0
    offset: int = 0

    def pixels(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        if self.offset < 0 or self.offset + n > _MAX_INDEX:
            raise ParameterError("pixel index range exceeds the 32-bit stream counter")
        if not 0 <= self.frame < _MAX_INDEX:
            raise ParameterError("frame index exceeds the 32-bit stream counter")
        return (self.offset + np.arange(n, dtype=np.int64)).reshape(shape)


def _fraction(value, name):
    arr = np.asarray(value, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return arr


def _stray(source, stray, shape):
    if stray is None:
        return np.full(shape, source.mu_stray)
    arr = np.broadcast_to(np.asarray(stray, dtype=np.float64), shape)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ParameterError("stray means must be finite and non-negative")
    return arr


def _clamp_coincidences(n_true, acc, n_s, n_i):
    # each coincidence consumes one click in each arm
    return np.minimum(n_true + acc, np.minimum(n_s, n_i))


def _unwrap(sample, scalar):
    if scalar:
        return CountSample(*(int(getattr(sample, f)) for f in ("n_s", "n_i", "n_c", "n_true")))
    return sample


def sample_entangled(source, t_eff_classical, t_eff_quantum, stream, stray=None):
    """Draw signal/idler/coincidence counts for an SPDC source.

    ``M ~ Poisson(mu_spdc)`` pairs are thinned one by one with a uniform triple
    (object survival, signal detection, idler detection).  The signal clicks
    when survival < ``t_eff_classical`` and its detection test passes; a true
    coincidence needs both detections and survival < ``t_eff_quantum``.
    Stray light adds independent Poisson counts to each arm; accidentals are
    ``Poisson(n_s * n_i * tau_c / t_dwell)``.

    ``stray`` optionally overrides ``source.mu_stray`` per pixel.
    """
    if source.mode != ENTANGLED:
        raise ParameterError("sample_entangled needs an entangled source")
    tc = _fraction(t_eff_classical, "t_eff_classical")
    tq = _fraction(t_eff_quantum, "t_eff_quantum")
    tc, tq = np.broadcast_arrays(tc, tq)
    scalar = tc.ndim == 0
    shape = tc.shape
    pixel = stream.pixels(shape)
    k = _backend.kernels()
    seed, frame = stream.seed, stream.frame

    m = k.poisson(seed, TAG_PAIR_NUMBER, frame, pixel, np.full(shape, source.mu_spdc))
    sig, idl, coi = k.pair_counts(seed, TAG_PAIRS, frame, pixel.ravel(), m.ravel(), tc.ravel(), tq.ravel(), source.eta)
    sig, idl, coi = (a.reshape(shape) for a in (sig, idl, coi))
    mu_st = source.eta * _stray(source, stray, shape)
    n_s = sig + k.poisson(seed, TAG_STRAY_S, frame, pixel, mu_st)
    n_i = idl + k.poisson(seed, TAG_STRAY_I, frame, pixel, mu_st)
    n_true = coi if source.true_coincidences else np.zeros(shape, dtype=np.int64)
    acc_mean = n_s.astype(np.float64) * n_i * source.window_fraction
    acc = k.poisson(seed, TAG_ACCIDENTAL, frame, pixel, acc_mean)
    n_c = _clamp_coincidences(n_true, acc, n_s, n_i)
    return _unwrap(CountSample(n_s, n_i, n_c, n_true), scalar)


def sample_classical(source, t_eff, stream, stray=None):
    """Counts for a chopped classical beam split into both arms.

    Source photons only arrive during the chopper's open phase
    (``duty * t_dwell``), so the arms are independent given the modulation and
    correlate only through accidental coincidences within the window.  Mean
    object-plane flux matches an entangled source with the same ``mu_spdc``.
    """
    if source.mode != CLASSICAL_SPLIT:
        raise ParameterError("sample_classical needs a classical_split source")
    t = _fraction(t_eff, "t_eff")
    scalar = t.ndim == 0
    shape = t.shape
    pixel = stream.pixels(shape)
    k = _backend.kernels()
    seed, frame = stream.seed, stream.frame
    mu_st = _stray(source, stray, shape)
    n_s = k.poisson(seed, TAG_CLASSICAL_S, frame, pixel, source.eta * (source.mu_spdc * t + mu_st))
    n_i = k.poisson(seed, TAG_CLASSICAL_I, frame, pixel, source.eta * (source.mu_spdc + mu_st))
    t_on = source.duty * source.t_dwell
    acc = k.poisson(seed, TAG_ACCIDENTAL, frame, pixel, n_s.astype(np.float64) * n_i * source.tau_c / t_on)
    n_c = _clamp_coincidences(0, acc, n_s, n_i)
    return _unwrap(CountSample(n_s, n_i, n_c, np.zeros(shape, dtype=np.int64)), scalar)


def sample(source, t_eff_classical, t_eff_quantum, stream, stray=None):
    """Dispatch on ``source.mode``."""
    if source.mode == ENTANGLED:
        return sample_entangled(source, t_eff_classical, t_eff_quantum, stream, stray)
    return sample_classical(source, t_eff_classical, stream, stray)


def expected_counts(source, t, t_quantum=None, stray=None):
    """Closed-form means ``(mean_s, mean_i, mean_c)`` of the generative model.

    For the entangled source the accidental term uses ``E[n_s n_i]``, which
    exceeds ``mean_s * mean_i`` by the pair covariance ``eta**2 * t * mu``.
    The clamp ``n_c <= min(n_s, n_i)`` is ignored; it only binds when the
    expected coincidences approach the singles.
    """
    t = _fraction(t, "t")
    tq = t if t_quantum is None else _fraction(t_quantum, "t_quantum")
    mu, eta = source.mu_spdc, source.eta
    mu_st = source.mu_stray if stray is None else np.asarray(stray, dtype=np.float64)
    mean_s = eta * (mu * t + mu_st)
    mean_i = eta * (mu + mu_st) * np.ones_like(mean_s)
    if source.mode == CLASSICAL_SPLIT:
        mean_c = mean_s * mean_i * source.tau_c / (source.duty * source.t_dwell)
        return mean_s, mean_i, mean_c
    pair_cov = eta**2 * t * mu
    true = eta**2 * tq * mu if source.true_coincidences else 0.0 * tq
    mean_c = true + (mean_s * mean_i + pair_cov) * source.window_fraction
    if np.ndim(mean_s) == 0:
        return float(mean_s), float(mean_i), float(mean_c)
    return mean_s, mean_i, mean_c


def photon_flux_power(rate, wavelength):
    """Optical power in watts of ``rate`` photons per second at ``wavelength`` metres."""
    if wavelength <= 0 or not math.isfinite(wavelength):
        raise ParameterError("wavelength must be positive")
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0):
        raise ParameterError("photon rate must be non-negative")
    power = rate * constants.h * constants.c / wavelength
    return float(power) if power.ndim == 0 else power
