"""Named, config-driven simulation studies.

Every run is a pure function of its parameters and seed.  ``run_experiment``
writes a ``summary.csv``, one CSV per data table, images as 16-bit PGM and
plots as SVG into ``<out>/<name>_seed<seed>/``.
"""

from __future__ import annotations

import math
import shutil
from importlib import resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from . import io as iox
from . import metrology as met
from . import phantom as ph
from . import polarimetry as pol
from . import scanner as sc
from .errors import ParameterError
from .io import Param
from .photon_model import CLASSICAL_SPLIT, ENTANGLED, SourceParams, Stream, photon_flux_power, sample

WAVELENGTH = 810e-9


@dataclass
class ExperimentSpec:
    name: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        if self.name not in REGISTRY:
            raise ParameterError(f"unknown experiment {self.name!r}; choose from {sorted(REGISTRY)}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        schema = REGISTRY[self.name].schema
        unknown = set(self.parameters) - set(schema)
        if unknown:
            raise ParameterError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        merged = iox.defaults(schema)
        merged.update({k: tuple(v) if isinstance(v, (list, np.ndarray)) else v for k, v in self.parameters.items()})
        for key, value in merged.items():
            schema[key].check(key, value)
        self.parameters = merged

    @property
    def p(self):
        return self.parameters


@dataclass
class ExperimentResult:
    """Tables are ``name -> (header, rows)``; plots are ``name -> kwargs`` for the SVG writer."""

    name: str
    summary: dict
    tables: dict = field(default_factory=dict)
    images: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    runner: object
    schema: dict
    description: str


# ---------------------------------------------------------------------------
# sub-shot-noise estimator sweep


def panel_estimates(n, n_i, background, eta, mu_spdc, mu_stray):
    """Per-frame estimates for a ``(frames, pixels)`` stack.

    Returns ``{method: (frames, pixels) array}`` for t0, ratio, optsub and
    cov.  The optimized-subtraction prior is the frame-averaged T0 map and
    the CoV multiplier is estimated from the whole stack.  Ratio pixels with
    zero idler counts are NaN.
    """
    n = np.asarray(n, dtype=np.float64)
    n_i = np.asarray(n_i, dtype=np.float64)
    nb = n[:, background].mean(axis=1)[:, None]
    if np.any(nb <= 0):
        raise ParameterError("background region has zero counts in some frame")
    t0 = n / nb
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(n_i > 0, n / n_i, np.nan) * n_i.mean(axis=1)[:, None] / nb
    d_i = n_i - n_i.mean(axis=1)[:, None]
    weight = est.optsub_weight(eta, mu_spdc, mu_stray)
    optsub = t0 - t0.mean(axis=0) * weight * d_i / nb
    k_star = est.cov_multiplier(n, n_i).k_star
    cov = t0 - k_star * d_i / nb
    return {"t0": t0, "ratio": ratio, "optsub": optsub, "cov": cov}


SSN_METHODS = ("ratio", "optsub", "cov")


def _enhancements(estimates, obj):
    base = est.snr(estimates["t0"][:, obj])
    return np.array([est.snr(estimates[m][:, obj]) / base for m in SSN_METHODS])


def ssn_point(eta, stray_ratio, channel, p, seed, point_index):
    """SNR enhancement of ratio/optsub/CoV over T0 at one operating point.

    A line of ``background_pixels`` clear pixels and ``object_pixels`` at
    ``t_object`` is imaged for ``frames`` frames.  Uncertainties come from a
    bootstrap over frames.  Returns ``(enhancement, stderr, z_margin)`` arrays
    ordered like ``SSN_METHODS``; ``z_margin`` is the CoV lead over each
    method in bootstrap standard deviations.
    """
    mu = p["mu_spdc"]
    source = SourceParams(mu, mu * stray_ratio, eta)
    nbg, nobj, frames = p["background_pixels"], p["object_pixels"], p["frames"]
    t = np.concatenate([np.ones(nbg), np.full(nobj, p["t_object"])])
    background = np.arange(t.size) < nbg
    obj = ~background
    offset = point_index * t.size
    counts = [sample(source, t, t, Stream(seed, f, offset)) for f in range(frames)]
    n_i = np.stack([c.n_i for c in counts])
    n = np.stack([c.n_s if channel == "s" else c.n_c for c in counts])
    args = (background, eta, mu, mu * stray_ratio)
    value = _enhancements(panel_estimates(n, n_i, *args), obj)
    rng = np.random.default_rng([seed, point_index])
    boot = np.empty((p["bootstrap"], len(SSN_METHODS)))
    for b in range(p["bootstrap"]):
        idx = rng.integers(0, frames, frames)
        boot[b] = _enhancements(panel_estimates(n[idx], n_i[idx], *args), obj)
    stderr = boot.std(axis=0, ddof=1)
    lead = boot[:, -1:] - boot
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(lead.std(axis=0, ddof=1) > 0, (value[-1] - value) / lead.std(axis=0, ddof=1), np.nan)
    z[-1] = np.nan
    return value, stderr, z


def synthetic_rho_check(rho, samples, seed):
    """CoV correction on Gaussian pairs with correlation ``rho``.

    Returns ``(var_ratio, enhancement)`` where ``var_ratio`` is the corrected
    variance over the raw variance.
    """
    rng = np.random.default_rng([seed, int(round(rho * 1e6))])
    cov = [[1.0, rho], [rho, 1.0]]
    x = rng.multivariate_normal([0.0, 0.0], cov, size=samples, method="cholesky")
    sig, idl = x[:, :1] + 10.0, x[:, 1:] + 10.0
    k = est.cov_multiplier(sig, idl).k_star
    corrected = sig - k * (idl - idl.mean())
    ratio = float(corrected.var() / sig.var())
    return ratio, 1.0 / math.sqrt(ratio)


PANELS = {
    "b": ("s", "eta"),
    "c": ("s", "stray_ratio"),
    "d": ("c", "eta"),
    "e": ("c", "stray_ratio"),
}


def run_ssn_sweep(spec):
    p = spec.p
    if not p["panels"] or set(p["panels"]) - set(PANELS):
        raise ParameterError(f"panels must be letters from {''.join(PANELS)}, got {p['panels']!r}")
    rows = []
    index = 0
    series = {}
    for panel in p["panels"]:
        channel, axis = PANELS[panel]
        grid = p["etas"] if axis == "eta" else p["stray_ratios"]
        for value in grid:
            eta = value if axis == "eta" else p["eta_fixed"]
            ratio = p["stray_ratio_fixed"] if axis == "eta" else value
            enh, se, z = ssn_point(eta, ratio, channel, p, spec.seed, index)
            index += 1
            for m, e_, s_, z_ in zip(SSN_METHODS, enh, se, z):
                rows.append((panel, channel, eta, ratio, m, float(e_), float(s_), float(z_)))
                series.setdefault((panel, axis), {}).setdefault(m, []).append((value, float(e_)))
    rho_rows = []
    for rho in p["rhos"]:
        var_ratio, enh = synthetic_rho_check(rho, p["rho_samples"], spec.seed)
        predicted = 1.0 - rho * rho
        rho_rows.append((rho, var_ratio, predicted, var_ratio / predicted - 1.0, enh, 1.0 / math.sqrt(predicted)))
    cov_best = all(
        r[5] >= other[5]
        for r in rows if r[4] == "cov"
        for other in rows if other[:4] == r[:4] and other[4] != "cov"
    )
    plots = {}
    for (panel, axis), methods in series.items():
        plots[f"panel_{panel}"] = dict(
            series=[(m, [v for v, _ in pts], [e for _, e in pts]) for m, pts in methods.items()],
            xlabel="detection efficiency" if axis == "eta" else "stray / SPDC ratio",
            ylabel="SNR enhancement over T0",
            title=f"panel {panel} ({'N_s' if PANELS[panel][0] == 's' else 'N_c'}, N_i)",
            logx=axis == "stray_ratio",
            hlines=(1.0,),
        )
    return ExperimentResult(
        spec.name,
        {"points": index, "cov_best_everywhere": cov_best,
         "trials_per_point": p["object_pixels"] * p["frames"]},
        {
            "enhancement": (("panel", "input", "eta", "stray_ratio", "method", "enhancement", "stderr", "cov_lead_sigma"), rows),
            "rho_check": (("rho", "var_ratio", "predicted", "rel_error", "enhancement", "predicted_enhancement"), rho_rows),
        },
        plots=plots,
    )


SSN_SCHEMA = {
    "mu_spdc": Param("float", 10.0, 0.0, None, "photons/dwell", lo_open=True),
    "t_object": Param("float", 0.5, 0.0, 1.0),
    "eta_fixed": Param("float", 0.7, 0.0, 1.0, lo_open=True),
    "stray_ratio_fixed": Param("float", 1.0, 0.0),
    "etas": Param("floats", (0.1, 0.3, 0.5, 0.7, 0.9), 0.0, 1.0, lo_open=True),
    "stray_ratios": Param("floats", (0.25, 1.0, 4.0), 0.0),
    "panels": Param("str", "bcde"),
    "background_pixels": Param("int", 400, 2),
    "object_pixels": Param("int", 400, 2),
    "frames": Param("int", 400, 2),
    "bootstrap": Param("int", 100, 2),
    "rhos": Param("floats", (0.0, 0.5, 0.8, 0.95), 0.0, 0.999),
    "rho_samples": Param("int", 100000, 10),
}


# ---------------------------------------------------------------------------
# resolution and depth of field


def psf_from_params(p):
    psf = sc.PsfModel(p["w_s"], p["z0_s"], p["zr_s"], p["w_ep"], p["z0_ep"], p["zr_ep"])
    return psf if p["pinhole"] else psf.without_pinhole()


def _fwhm(x, profile):
    return met.resolution_from_fit(met.fit_esf(x, profile))


def _dof_row(mode, channel, z, r):
    fit = met.fit_dof(z, r)
    dof, dof_se = met.dof_from_fit(fit)
    r0_se = 2.0 * fit.ci95["R0"] / met.Z95
    return (mode, channel, fit.params["R0"], r0_se, fit.params["z0"], dof, dof_se)


def run_resolution_dof(spec):
    p = spec.p
    psf = psf_from_params(p)
    z = sc.calibration_z_grid(0.0, p["z_half_range"], p["z_step"])
    target = ph.make_edge_target(p["field_pixels"] * p["pitch"] / 2.0, (p["rows"], p["field_pixels"]), p["pitch"])
    x = target.x_coords()
    modes = {
        "entangled": SourceParams(p["mu_spdc"], 0.0, p["eta"]),
        "accidental": SourceParams(p["mu_spdc"], 0.0, p["eta"], tau_c=p["accidental_tau_c"], true_coincidences=False),
    }
    rz_rows, dof_rows, series = [], [], []
    for mode, source in modes.items():
        stack = sc.acquire_z_stack(target, source, psf, sc.ScanConfig(frames=p["frames"]), z, spec.seed, noiseless=p["noiseless"])
        res = {"classical": [], "ice": []}
        for iz, frames in enumerate(stack):
            for channel, name in (("classical", "s"), ("ice", "c")):
                img = sc.stack_channel(frames, name).mean(axis=0)
                res[channel].append(_fwhm(x, met.edge_profile(img)))
            (rc, sc_), (rq, sq) = res["classical"][-1], res["ice"][-1]
            rz_rows.append((mode, float(z[iz]), rc, sc_, rq, sq))
        for channel in ("classical", "ice"):
            r = np.array([v[0] for v in res[channel]])
            dof_rows.append(_dof_row(mode, channel, z, r))
            series.append((f"{mode} {channel}", z, r))
    fits = {(row[0], row[1]): row for row in dof_rows}
    r_c, r_q = fits["entangled", "classical"][2], fits["entangled", "ice"][2]
    summary = {
        "classical_resolution_um": r_c,
        "ice_resolution_um": r_q,
        "classical_dof_um": fits["entangled", "classical"][5],
        "ice_dof_um": fits["entangled", "ice"][5],
        "improvement_percent": 100.0 * (r_c / r_q - 1.0),
        "accidental_max_abs_diff_um": max(abs(row[2] - row[4]) for row in rz_rows if row[0] == "accidental"),
    }
    return ExperimentResult(
        spec.name,
        summary,
        {
            "resolution_vs_z": (("mode", "z_um", "r_classical_um", "se_classical_um", "r_ice_um", "se_ice_um"), rz_rows),
            "dof": (("mode", "channel", "r0_um", "r0_se_um", "z0_um", "dof_um", "dof_se_um"), dof_rows),
        },
        plots={"resolution_vs_z": dict(series=series, xlabel="z (um)", ylabel="FWHM (um)", title="resolution versus depth")},
    )


_CAL = sc.CALIBRATED_PSF
RESOLUTION_SCHEMA = {
    "w_s": Param("float", _CAL["w_s"], 0.0, None, "um", lo_open=True),
    "z0_s": Param("float", _CAL["z0_s"], None, None, "um"),
    "zr_s": Param("float", _CAL["zr_s"], 0.0, None, "um", lo_open=True),
    "w_ep": Param("float", _CAL["w_ep"], 0.0, None, "um", lo_open=True),
    "z0_ep": Param("float", _CAL["z0_ep"], None, None, "um"),
    "zr_ep": Param("float", _CAL["zr_ep"], 0.0, None, "um", lo_open=True),
    "pinhole": Param("bool", True),
    "z_half_range": Param("float", 350.0, 0.0, None, "um", lo_open=True),
    "z_step": Param("float", 10.0, 0.0, None, "um", lo_open=True),
    "field_pixels": Param("int", 1024, 16),
    "rows": Param("int", 4, 1),
    "pitch": Param("float", 1.0, 0.0, None, "um", lo_open=True),
    "mu_spdc": Param("float", 2.0e4, 0.0, None, "photons/dwell", lo_open=True),
    "eta": Param("float", 0.7, 0.0, 1.0, lo_open=True),
    "accidental_tau_c": Param("float", 400e-9, 0.0, 1.0, "s", lo_open=True),
    "noiseless": Param("bool", True),
    "frames": Param("int", 1, 1),
}


# ---------------------------------------------------------------------------
# stray light


def stray_target(p, seed):
    shape = (p["pixels"], p["pixels"])
    if p["target"] == "fibers":
        slices = ph.make_fiber_volume(p["n_fibers"], p["fiber_diameter"], 0.0, seed, shape, p["pitch"], n_slices=1)
        return slices[0][0]
    bars = ph.make_bar_target(p["bar_widths"], p["pitch"])
    t = np.ones(shape)
    h, w = min(shape[0], bars.height), min(shape[1], bars.width)
    t[:h, :w] = bars.t_map[:h, :w]
    return ph.Phantom.from_transmittance(t, p["pitch"])


def run_stray_light(spec):
    p = spec.p
    target = stray_target(p, spec.seed)
    source = SourceParams(p["mu_spdc"], 0.0, p["eta"], p["tau_c"], p["t_dwell"])
    psf = sc.PsfModel.calibrated()
    mus = np.asarray(p["stray_mu"], dtype=np.float64)
    if mus[0] != 0 or np.any(np.diff(mus) <= 0):
        raise ParameterError("stray_mu must start at 0 and increase strictly")
    classical, ice = [], []
    for mu in mus:
        scan = sc.ScanConfig(step=p["pitch"], stray_probability=p["stray_probability"], stray_mu=float(mu))
        frame = sc.acquire_scan(target, source, psf, scan, spec.seed)[0]
        classical.append(frame.n_s)
        ice.append(frame.n_c)
    powers = photon_flux_power(mus / p["t_dwell"], p["wavelength"])
    curve = met.ssim_curve(powers, classical, ice, p["threshold"])
    rows = [(float(m), float(w), float(a), float(b), float(b - a))
            for m, w, a, b in zip(mus, powers, curve.ssim_classical, curve.ssim_ice)]
    summary = {
        "classical_crossing_w": curve.classical_crossing.power,
        "classical_crossing_status": curve.classical_crossing.status,
        "ice_crossing_w": curve.ice_crossing.power,
        "ice_crossing_status": curve.ice_crossing.status,
        "suppression_ratio": curve.suppression_ratio,
        "ice_at_least_classical": bool(np.all(curve.ssim_ice >= curve.ssim_classical)),
        "led_fraction": float(sc.led_mask(spec.seed, target.shape, p["stray_probability"]).mean()),
    }
    last = len(mus) - 1
    images = {"classical_zero": classical[0], "ice_zero": ice[0],
              "classical_max": classical[last], "ice_max": ice[last]}
    nz = powers > 0
    return ExperimentResult(
        spec.name,
        summary,
        {"ssim": (("stray_mu", "power_w", "ssim_classical", "ssim_ice", "delta_ssim"), rows)},
        images,
        {"ssim_vs_power": dict(
            series=[("classical", powers[nz], curve.ssim_classical[nz]), ("ICE", powers[nz], curve.ssim_ice[nz]),
                    ("ICE - classical", powers[nz], curve.delta_ssim[nz])],
            xlabel="stray power (W)", ylabel="SSIM", title="stray-light resilience", logx=True,
            hlines=(p["threshold"],))},
    )


STRAY_SCHEMA = {
    "target": Param("str", "fibers", choices=("fibers", "bars")),
    "pixels": Param("int", 64, 8),
    "pitch": Param("float", 2.0, 0.0, None, "um", lo_open=True),
    "n_fibers": Param("int", 12, 0),
    "fiber_diameter": Param("float", 6.0, 0.0, None, "um", lo_open=True),
    "bar_widths": Param("floats", (16.0, 10.0), 0.0, None, "um", lo_open=True),
    "mu_spdc": Param("float", 2.0e4, 0.0, None, "photons/dwell", lo_open=True),
    "eta": Param("float", 0.7, 0.0, 1.0, lo_open=True),
    "tau_c": Param("float", 8e-9, 0.0, 1.0, "s", lo_open=True),
    "t_dwell": Param("float", 1.0, 0.0, None, "s", lo_open=True),
    "stray_probability": Param("float", 0.2, 0.0, 1.0),
    "stray_mu": Param("floats", (0.0,) + tuple(float(10.0**e) for e in np.arange(3.0, 8.01, 0.5)), 0.0, None, "photons/dwell"),
    "wavelength": Param("float", WAVELENGTH, 0.0, None, "m", lo_open=True),
    "threshold": Param("float", 0.1, 0.0, 1.0, lo_open=True),
}


# ---------------------------------------------------------------------------
# Bell test


def chsh_round(model, seed, round_index):
    """One CHSH measurement with Poisson counts at the 16 analyzer settings."""
    return pol.chsh_s(lambda a, b: pol.bell_counts(a, b, model, seed, round_index))


def run_bell(spec):
    p = spec.p
    model = pol.BellModel(p["n0"], p["n0"] * p["n1_ratio"])
    s_values = [chsh_round(model, spec.seed, r) for r in range(p["rounds"])]
    s_mean = float(np.mean(s_values))
    s_se = float(np.std(s_values, ddof=1) / math.sqrt(len(s_values))) if len(s_values) > 1 else math.nan
    betas = np.arange(0.0, 360.0, p["beta_step"])
    curve_rows, fit_rows, series = [], [], []
    for alpha in pol.BETAS:
        counts = pol.bell_counts(alpha, betas, model, spec.seed, p["rounds"])
        fit = pol.fit_bell_curve(alpha, betas, counts)
        fitted = pol.bell_mean(alpha, betas, fit)
        curve_rows += [(alpha, float(b), int(c), float(f)) for b, c, f in zip(betas, counts, fitted)]
        fit_rows.append((alpha, fit.n0, fit.n1))
        series.append((f"alpha={alpha:g}", betas, counts))
    summary = {
        "s_mean": s_mean,
        "s_stderr": s_se,
        "s_noiseless": pol.chsh_s(lambda a, b: pol.bell_mean(a, b, model)),
        "s_closed_form": pol.chsh_closed_form(model),
        "n1_over_n0": p["n1_ratio"],
        "rounds": p["rounds"],
    }
    return ExperimentResult(
        spec.name,
        summary,
        {
            "chsh_rounds": (("round", "s"), [(i, s) for i, s in enumerate(s_values)]),
            "bell_curves": (("alpha_deg", "beta_deg", "counts", "fit"), curve_rows),
            "bell_fits": (("alpha_deg", "n0", "n1"), fit_rows),
        },
        plots={"bell_curves": dict(series=series, xlabel="beta (deg)", ylabel="coincidences", title="Bell curves")},
    )


BELL_SCHEMA = {
    "n0": Param("float", 2000.0, 0.0, None, "counts", lo_open=True),
    "n1_ratio": Param("float", pol.accidental_ratio_for_s(2.78), 0.0),
    "rounds": Param("int", 10, 1),
    "beta_step": Param("float", 10.0, 0.5, 180.0, "deg"),
}


# ---------------------------------------------------------------------------
# ghost birefringence


def birefringence_regions(p):
    """Default disks of known (T, theta, delta) on clear glass, in pixel units."""
    n = p["pixels"]
    r = n / 6.0
    return [
        (("disk", 0.27 * n, 0.3 * n, r), 0.85, 30.0, 1.2),
        (("disk", 0.73 * n, 0.3 * n, r), 0.6, 65.0, 2.3),
        (("disk", 0.5 * n, 0.72 * n, r), 0.95, 10.0, 0.6),
    ]


def _erode(mask, steps):
    out = mask.copy()
    for _ in range(steps):
        inner = out.copy()
        inner[1:, :] &= out[:-1, :]
        inner[:-1, :] &= out[1:, :]
        inner[:, 1:] &= out[:, :-1]
        inner[:, :-1] &= out[:, 1:]
        out = inner
    return out


def _angle_diff(a, b):
    # theta lives on a 90-degree circle
    d = np.mod(np.asarray(a) - b + 45.0, 90.0) - 45.0
    return d


def run_ghost_birefringence(spec):
    p = spec.p
    shape = (p["pixels"], p["pixels"])
    regions = birefringence_regions(p)
    phantom = ph.make_birefringent_phantom(regions, shape, p["pitch"])
    source = SourceParams(p["mu_spdc"], 0.0, p["eta"])
    psf = sc.PsfModel.calibrated()
    scan = sc.ScanConfig(step=p["pitch"])
    ice, classical = [], []
    for k, beta in enumerate(pol.BETAS):
        frame = sc.acquire_scan(phantom, source, psf, scan, spec.seed, frame_offset=k, beta=beta)[0]
        ice.append(frame.n_c)
        classical.append(frame.n_s)
    # the blurred edge falls below 1e-3 of the step within 2.5 widths
    margin = int(math.ceil(2.5 * float(sc.effective_widths(psf, 0.0)[1]) / p["pitch"]))
    covered = np.zeros(shape, dtype=bool)
    masks = []
    for region, *_ in regions:
        m = ph._region_mask(region, shape)
        covered |= m
        masks.append(_erode(m, margin))
    background = _erode(~covered, margin)
    if not background.any() or not all(m.any() for m in masks):
        raise ParameterError(
            f"field of {p['pixels']} px at {p['pitch']} um pitch is too small: "
            f"regions vanish after a {margin} px edge margin"
        )
    maps = pol.birefringence_image(ice, background)
    rows = []
    for i, ((_, t_true, th_true, d_true), m) in enumerate(zip(regions, masks)):
        t_err = np.abs(maps["t"][m] / t_true - 1.0)
        th_err = np.abs(_angle_diff(maps["theta"][m], th_true))
        d_err = np.abs(maps["delta"][m] - d_true)
        ok = (t_err <= p["tol_t"]) & (th_err <= p["tol_theta"]) & (d_err <= p["tol_delta"])
        rows.append((i, t_true, th_true, d_true, float(np.median(maps["t"][m])),
                     float(np.mod(th_true + np.median(_angle_diff(maps["theta"][m], th_true)), 90.0)),
                     float(np.median(maps["delta"][m])), int(m.sum()), float(ok.mean())))
    bg_delta = maps["delta"][background]
    classical_ssim = min(met.ssim(classical[a], classical[b]) for a in range(4) for b in range(a + 1, 4))
    ice_ssim = min(met.ssim(ice[a], ice[b]) for a in range(4) for b in range(a + 1, 4))
    summary = {
        "min_region_coverage": min(r[-1] for r in rows),
        "background_delta_median": float(np.median(bg_delta)),
        "classical_min_pairwise_ssim": classical_ssim,
        "ice_min_pairwise_ssim": ice_ssim,
        "inconsistent_pixels": int((maps["status"] == pol.INCONSISTENT).sum()),
    }
    images = {f"ice_beta{int(b):03d}": im for b, im in zip(pol.BETAS, ice)}
    images.update({f"classical_beta{int(b):03d}": im for b, im in zip(pol.BETAS, classical)})
    images["map_t"] = (maps["t"], (0.0, 1.0))
    images["map_theta"] = (maps["theta"], (0.0, 90.0))
    images["map_delta"] = (maps["delta"], (0.0, math.pi))
    return ExperimentResult(
        spec.name,
        summary,
        {"regions": (("region", "t_true", "theta_true_deg", "delta_true_rad", "t_median", "theta_median_deg",
                      "delta_median_rad", "pixels", "fraction_within_tol"), rows)},
        images,
    )


BIREF_SCHEMA = {
    "pixels": Param("int", 64, 16),
    "pitch": Param("float", 4.0, 0.0, None, "um", lo_open=True),
    "mu_spdc": Param("float", 2.0e4, 0.0, None, "photons/dwell", lo_open=True),
    "eta": Param("float", 0.7, 0.0, 1.0, lo_open=True),
    "tol_t": Param("float", 0.05, 0.0),
    "tol_theta": Param("float", 5.0, 0.0, None, "deg"),
    "tol_delta": Param("float", 0.15, 0.0, None, "rad"),
}


# ---------------------------------------------------------------------------
# entangled versus classical source


def run_source_comparison(spec):
    p = spec.p
    t = np.full(p["pixels"], p["t_object"])
    rows = []
    for k, mu in enumerate(p["mu_spdc"]):
        snrs = []
        for mode in (ENTANGLED, CLASSICAL_SPLIT):
            source = SourceParams(mu, 0.0, p["eta"], p["tau_c"], p["t_dwell"], mode, duty=p["duty"])
            counts = [sample(source, t, t, Stream(spec.seed, f, k * t.size)) for f in range(p["frames"])]
            n_c = np.stack([c.n_c for c in counts])
            snrs.append(est.snr(n_c))
        rows.append((float(mu), float(mu / p["t_dwell"]), snrs[0], snrs[1], snrs[0] / snrs[1] if snrs[1] > 0 else math.inf))
    head = rows[-1]
    summary = {
        "default_mu_spdc": head[0],
        "snr_entangled": head[2],
        "snr_classical": head[3],
        "snr_ratio": head[4],
        "entangled_wins_everywhere": all(r[2] > r[3] for r in rows),
    }
    return ExperimentResult(
        spec.name,
        summary,
        {"snr": (("mu_spdc", "rate_hz", "snr_entangled", "snr_classical", "ratio"), rows)},
        plots={"snr_vs_flux": dict(
            series=[("entangled", [r[0] for r in rows], [r[2] for r in rows]),
                    ("classical", [r[0] for r in rows], [r[3] for r in rows])],
            xlabel="pairs per dwell", ylabel="coincidence SNR", title="source comparison", logx=True)},
    )


SOURCE_SCHEMA = {
    "mu_spdc": Param("floats", (2.0e4, 2.0e5, 2.0e6), 0.0, None, "photons/dwell", lo_open=True),
    "eta": Param("float", 0.7, 0.0, 1.0, lo_open=True),
    "t_object": Param("float", 0.5, 0.0, 1.0, lo_open=True),
    "tau_c": Param("float", 8e-9, 0.0, 1.0, "s", lo_open=True),
    "t_dwell": Param("float", 1.0, 0.0, None, "s", lo_open=True),
    "duty": Param("float", 0.5, 0.0, 1.0, lo_open=True),
    "pixels": Param("int", 100, 2),
    "frames": Param("int", 1, 1),
}


REGISTRY = {
    "ssn_sweep": Experiment(run_ssn_sweep, SSN_SCHEMA, "SNR enhancement of sub-shot-noise estimators"),
    "resolution_dof": Experiment(run_resolution_dof, RESOLUTION_SCHEMA, "resolution and depth of field versus z"),
    "stray_light": Experiment(run_stray_light, STRAY_SCHEMA, "SSIM under random stray light"),
    "bell": Experiment(run_bell, BELL_SCHEMA, "CHSH test over repeated rounds"),
    "ghost_birefringence": Experiment(run_ghost_birefringence, BIREF_SCHEMA, "birefringence maps from idler analyzer angles"),
    "source_comparison": Experiment(run_source_comparison, SOURCE_SCHEMA, "entangled versus chopped classical source"),
}

SCHEMAS = {name: exp.schema for name, exp in REGISTRY.items()}


def run(spec):
    """Compute an experiment without writing anything."""
    return REGISTRY[spec.name].runner(spec)


def run_directory(out_dir, spec):
    return Path(out_dir) / f"{spec.name}_seed{int(spec.seed)}"


def write_result(result, directory, spec=None):
    """Write summary, tables, images and plots; returns the list of paths written."""
    directory = Path(directory)
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    paths = []
    summary_rows = sorted(result.summary.items())
    if spec is not None:
        summary_rows = [("experiment", spec.name), ("seed", int(spec.seed))] + summary_rows
        config = iox.serialize_config({spec.name: spec.parameters}, SCHEMAS)
        paths.append(directory / "config.cfg")
        paths[-1].write_text(config)
    paths.append(iox.write_csv(directory / "summary.csv", ("key", "value"), summary_rows))
    for name, (header, rows) in result.tables.items():
        paths.append(iox.write_csv(directory / f"{name}.csv", header, rows))
    for name, image in result.images.items():
        scale = None
        if not isinstance(image, tuple) and np.issubdtype(np.asarray(image).dtype, np.integer):
            # counts beyond 16 bits are rescaled; the CSV keeps them exact
            if np.asarray(image).max(initial=0) > iox.PGM_MAX:
                image = (image, (0.0, float(np.asarray(image).max())))
        if isinstance(image, tuple):
            image, scale = image
            paths.append(iox.write_matrix(directory / f"{name}.csv", image))
        paths.append(iox.write_pgm(directory / f"{name}.pgm", image, scale))
    for name, kwargs in result.plots.items():
        paths.append(iox.save_svg_plot(directory / f"{name}.svg", **kwargs))
    return paths


def run_experiment(spec, out_dir):
    """Run and write into ``<out_dir>/<name>_seed<seed>``; returns (result, run directory)."""
    result = run(spec)
    directory = run_directory(out_dir, spec)
    spec.outputs = [str(p) for p in write_result(result, directory, spec)]
    return result, directory


def preset_names():
    return sorted(p.stem for p in resources.files("icesim.presets").iterdir() if p.name.endswith(".cfg"))


def preset_path(name):
    """Path of a bundled preset config, e.g. ``preset_path("ssn_sweep")``."""
    path = resources.files("icesim.presets") / f"{name}.cfg"
    if not path.is_file():
        raise ParameterError(f"unknown preset {name!r}; available: {preset_names()}")
    return Path(str(path))


def read_summary(directory):
    return {row["key"]: row["value"] for row in iox.read_csv(Path(directory) / "summary.csv")}
