"""Synthetic objects: transmittance and birefringence maps plus test targets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class Phantom:
    """Per-pixel object maps on a square grid.

    ``theta_map`` holds the principal-axis angle in degrees, ``delta_map`` the
    retardation in radians.  ``pixel_pitch`` and ``z_extent`` are micrometres.
    """

    t_map: np.ndarray
    theta_map: np.ndarray
    delta_map: np.ndarray
    pixel_pitch: float = 1.0
    z_extent: float = 0.0

    def __post_init__(self):
        maps = [np.asarray(m, dtype=np.float64) for m in (self.t_map, self.theta_map, self.delta_map)]
        if maps[0].ndim != 2 or any(m.shape != maps[0].shape for m in maps):
            raise ParameterError("phantom maps must be 2-D and share one shape")
        t, theta, delta = maps
        if np.any(~np.isfinite(t)) or t.min() < 0 or t.max() > 1:
            raise ParameterError("transmittance must lie in [0, 1]")
        if np.any(~np.isfinite(theta)) or theta.min() < 0 or theta.max() >= 90:
            raise ParameterError("principal-axis angle must lie in [0, 90) degrees")
        if np.any(~np.isfinite(delta)) or delta.min() < 0 or delta.max() > math.pi:
            raise ParameterError("retardation must lie in [0, pi]")
        if not self.pixel_pitch > 0:
            raise ParameterError("pixel pitch must be positive")
        if self.z_extent < 0:
            raise ParameterError("z extent must be non-negative")
        for name, m in zip(("t_map", "theta_map", "delta_map"), maps):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def height(self):
        return self.t_map.shape[0]

    @property
    def width(self):
        return self.t_map.shape[1]

    @property
    def shape(self):
        return self.t_map.shape

    @classmethod
    def from_transmittance(cls, t_map, pixel_pitch=1.0, z_extent=0.0):
        t_map = np.asarray(t_map, dtype=np.float64)
        zeros = np.zeros_like(t_map)
        return cls(t_map, zeros, zeros.copy(), pixel_pitch, z_extent)

    def x_coords(self):
        """Pixel-centre x positions in micrometres."""
        return (np.arange(self.width) + 0.5) * self.pixel_pitch


def _px(length, pitch, what):
    if length < pitch:
        raise ParameterError(f"{what} {length} um is below the pixel pitch {pitch} um")
    return int(round(length / pitch))


def usaf_bar_width(group, element):
    """Line width in micrometres of a 1951 USAF target element."""
    lp_per_mm = 2.0 ** (group + (element - 1) / 6.0)
    return 1000.0 / (2.0 * lp_per_mm)


def make_bar_target(widths, pitch=1.0, margin=None):
    """Row of three-bar groups, one group per width (micrometres).

    Bars are opaque vertical stripes ``w`` wide, separated by ``w`` and
    ``5 w`` long.  An empty width list gives a blank target.
    """
    widths = list(widths)
    if not pitch > 0:
        raise ParameterError("pitch must be positive")
    if any(w <= 0 for w in widths):
        raise ParameterError("bar widths must be positive")
    px = [_px(w, pitch, "bar width") for w in widths]
    if margin is None:
        margin = max(px, default=8)
    if not px:
        return Phantom.from_transmittance(np.ones((2 * margin, 2 * margin)), pitch)
    height = 5 * max(px) + 2 * margin
    width = sum(5 * p for p in px) + margin * (len(px) + 1)
    t = np.ones((height, width))
    x = margin
    for p in px:
        top = (height - 5 * p) // 2
        for bar in range(3):
            x0 = x + 2 * bar * p
            t[top : top + 5 * p, x0 : x0 + p] = 0.0
        x += 5 * p + margin
    return Phantom.from_transmittance(t, pitch)


def make_edge_target(edge_x, shape=(64, 64), pitch=1.0):
    """Opaque half-plane left of ``edge_x`` micrometres, transparent to its right."""
    height, width = shape
    if not 0 <= edge_x <= width * pitch:
        raise ParameterError(f"edge at {edge_x} um lies outside the {width * pitch} um field")
    centres = (np.arange(width) + 0.5) * pitch
    row = (centres >= edge_x).astype(np.float64)
    return Phantom.from_transmittance(np.tile(row, (height, 1)), pitch)


def _segment_mask(shape, pitch, p0, p1, radius):
    yy, xx = np.indices(shape)
    px = (xx + 0.5) * pitch
    py = (yy + 0.5) * pitch
    d = np.subtract(p1, p0)
    length2 = float(d @ d)
    s = ((px - p0[0]) * d[0] + (py - p0[1]) * d[1]) / length2
    s = np.clip(s, 0.0, 1.0)
    dist2 = (px - p0[0] - s * d[0]) ** 2 + (py - p0[1] - s * d[1]) ** 2
    return dist2 <= radius**2


def make_fiber_volume(n_fibers, fiber_diameter, z_extent, seed, shape=(64, 64), pitch=1.0, n_slices=None):
    """Opaque straight fibres scattered through a thick volume.

    Each fibre crosses the whole field at a random angle through a random
    point and sits on one of ``n_slices`` evenly spaced planes.  Returns a
    list of ``(phantom, z)`` pairs, z in micrometres from the top surface.
    """
    if n_fibers < 0:
        raise ParameterError("fibre count must be non-negative")
    if fiber_diameter <= 0 or z_extent < 0:
        raise ParameterError("fibre diameter must be positive and z extent non-negative")
    if n_slices is None:
        n_slices = max(1, int(round(z_extent / 50.0)) + 1)
    rng = np.random.default_rng(seed)
    z_planes = np.linspace(0.0, z_extent, n_slices)
    t_maps = [np.ones(shape) for _ in range(n_slices)]
    height, width = shape
    half_diag = 0.5 * math.hypot(width, height) * pitch
    for _ in range(n_fibers):
        centre = rng.uniform((0.0, 0.0), (width * pitch, height * pitch))
        angle = rng.uniform(0.0, math.pi)
        slice_index = int(rng.integers(n_slices))
        direction = np.array([math.cos(angle), math.sin(angle)])
        p0 = centre - 2 * half_diag * direction
        p1 = centre + 2 * half_diag * direction
        mask = _segment_mask(shape, pitch, p0, p1, fiber_diameter / 2.0)
        t_maps[slice_index][mask] = 0.0
    return [(Phantom.from_transmittance(t, pitch, z_extent), float(z)) for t, z in zip(t_maps, z_planes)]


def _region_mask(region, shape):
    if isinstance(region, np.ndarray):
        if region.shape != shape:
            raise ParameterError("region mask shape does not match the phantom")
        return region.astype(bool)
    kind, *args = region
    yy, xx = np.indices(shape)
    if kind == "rect":
        x0, y0, x1, y1 = args
        return (xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)
    if kind == "disk":
        cx, cy, r = args
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
    raise ParameterError(f"unknown region kind {kind!r}")


def make_birefringent_phantom(regions, shape=(64, 64), pitch=1.0):
    """Piecewise-constant (T, theta, Delta) maps; later regions overwrite earlier ones.

    ``regions`` holds ``(shape, T, theta_deg, delta_rad)`` tuples, where shape
    is a boolean mask, ``("rect", x0, y0, x1, y1)`` or ``("disk", cx, cy, r)``
    in pixel units.  Uncovered pixels are clear glass (T=1, Delta=0).
    """
    t = np.ones(shape)
    theta = np.zeros(shape)
    delta = np.zeros(shape)
    for region, t_val, theta_val, delta_val in regions:
        if not 0 <= t_val <= 1 or not 0 <= theta_val < 90 or not 0 <= delta_val <= math.pi:
            raise ParameterError(f"region values out of range: T={t_val}, theta={theta_val}, delta={delta_val}")
        mask = _region_mask(region, shape)
        t[mask] = t_val
        theta[mask] = theta_val
        delta[mask] = delta_val
    return Phantom(t, theta, delta, pitch)


_MAP_FILES = {"t_map": "t.csv", "theta_map": "theta.csv", "delta_map": "delta.csv"}


def save_phantom(phantom, directory):
    """Write one CSV matrix per map plus ``phantom.json`` with the geometry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for attr, name in _MAP_FILES.items():
        np.savetxt(directory / name, getattr(phantom, attr), delimiter=",", fmt="%.17g")
    meta = {"pixel_pitch": phantom.pixel_pitch, "z_extent": phantom.z_extent}
    (directory / "phantom.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_phantom(directory):
    """Read a phantom written by :func:`save_phantom`.

    Only ``t.csv`` is required; missing angle maps default to zero.
    """
    directory = Path(directory)
    t = np.atleast_2d(np.loadtxt(directory / "t.csv", delimiter=","))
    maps = {"t_map": t}
    for attr in ("theta_map", "delta_map"):
        path = directory / _MAP_FILES[attr]
        maps[attr] = np.atleast_2d(np.loadtxt(path, delimiter=",")) if path.exists() else np.zeros_like(t)
    meta_path = directory / "phantom.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Phantom(
        maps["t_map"], maps["theta_map"], maps["delta_map"],
        float(meta.get("pixel_pitch", 1.0)), float(meta.get("z_extent", 0.0)),
    )
