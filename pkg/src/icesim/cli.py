"""Command-line entry point.

Exit status: 0 success, 2 usage error, 3 configuration error, 4 computation
error.  Failures print one line ``icesim: <class>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from . import experiments as ex
from . import io as iox
from . import metrology as met
from . import phantom as ph
from . import polarimetry as pol
from . import scanner as sc
from .errors import ConfigError, DegenerateInputError, FitError, InconsistentQuadError, ParameterError
from .io import Param
from .photon_model import MODES, SourceParams

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_COMPUTE = 4


class UsageError(Exception):
    pass


SIMULATE_SCHEMA = {
    "target": Param("str", "bars", choices=("bars", "edge", "fibers", "blank")),
    "pixels": Param("int", 64, 2),
    "pitch": Param("float", 2.0, 0.0, None, "um", lo_open=True),
    "bar_widths": Param("floats", (16.0, 10.0), 0.0, None, "um", lo_open=True),
    "edge_x": Param("float", 64.0, 0.0, None, "um"),
    "n_fibers": Param("int", 8, 0),
    "fiber_diameter": Param("float", 6.0, 0.0, None, "um", lo_open=True),
    "mu_spdc": Param("float", 2.0e4, 0.0, None, "photons/dwell"),
    "mu_stray": Param("float", 0.0, 0.0, None, "photons/dwell"),
    "eta": Param("float", 0.7, 0.0, 1.0),
    "tau_c": Param("float", 8e-9, 0.0, 1.0, "s", lo_open=True),
    "t_dwell": Param("float", 1.0, 0.0, None, "s", lo_open=True),
    "mode": Param("str", "entangled", choices=MODES),
    "true_coincidences": Param("bool", True),
    "duty": Param("float", 0.5, 0.0, 1.0, lo_open=True),
    "z": Param("float", 0.0, None, None, "um"),
    "frames": Param("int", 1, 1),
    "stray_probability": Param("float", 0.0, 0.0, 1.0),
    "stray_mu": Param("float", 0.0, 0.0, None, "photons/dwell"),
}

CLI_SCHEMAS = {"simulate": SIMULATE_SCHEMA, **ex.SCHEMAS}


def _load_section(path, section):
    if path is None:
        return iox.defaults(CLI_SCHEMAS[section])
    return iox.parse_config(path, CLI_SCHEMAS, section)


def _read_image(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such input file: {path}")
    if path.suffix.lower() == ".pgm":
        return iox.read_pgm(path).astype(np.float64)
    try:
        return iox.read_matrix(path)
    except ValueError as exc:
        raise UsageError(f"{path}: not a numeric CSV matrix ({exc})") from None


def _read_stack(paths):
    images = [_read_image(p) for p in paths]
    if any(im.shape != images[0].shape for im in images):
        raise UsageError("input images must share one shape")
    return np.stack(images)


def _background(args, shape):
    if args.background:
        mask = _read_image(args.background) != 0
    elif args.background_rect:
        try:
            x0, y0, x1, y1 = (int(v) for v in args.background_rect.split(","))
        except ValueError:
            raise UsageError("--background-rect expects x0,y0,x1,y1") from None
        mask = np.zeros(shape, dtype=bool)
        mask[y0:y1, x0:x1] = True
    else:
        raise UsageError("a background region is required (--background or --background-rect)")
    if mask.shape != shape:
        raise UsageError(f"background mask shape {mask.shape} does not match images {shape}")
    return mask


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=iox._json_default) + "\n")


def build_phantom(p, seed):
    shape = (p["pixels"], p["pixels"])
    if p["target"] == "edge":
        return ph.make_edge_target(p["edge_x"], shape, p["pitch"])
    if p["target"] == "fibers":
        return ph.make_fiber_volume(p["n_fibers"], p["fiber_diameter"], 0.0, seed, shape, p["pitch"], n_slices=1)[0][0]
    t = np.ones(shape)
    if p["target"] == "bars":
        bars = ph.make_bar_target(p["bar_widths"], p["pitch"])
        h, w = min(shape[0], bars.height), min(shape[1], bars.width)
        t[:h, :w] = bars.t_map[:h, :w]
    return ph.Phantom.from_transmittance(t, p["pitch"])


def cmd_simulate(args):
    p = _load_section(args.config, "simulate")
    phantom = ph.load_phantom(args.phantom) if args.phantom else build_phantom(p, args.seed)
    source = SourceParams(p["mu_spdc"], p["mu_stray"], p["eta"], p["tau_c"], p["t_dwell"], p["mode"],
                          p["true_coincidences"], p["duty"])
    scan = sc.ScanConfig(step=phantom.pixel_pitch, z=p["z"], frames=p["frames"],
                         stray_probability=p["stray_probability"], stray_mu=p["stray_mu"])
    frames = sc.acquire_scan(phantom, source, sc.PsfModel.calibrated(), scan, args.seed)
    out = _out(args)
    if "csv" in args.format:
        iox.save_frames(out, frames)
    if "pgm" in args.format:
        for f, frame in enumerate(frames):
            for name in ("s", "i", "c"):
                iox.write_pgm(out / f"frame{f:03d}_n{name}.pgm", np.minimum(frame.channel(name), iox.PGM_MAX))
    (out / "config.cfg").write_text(iox.serialize_config({"simulate": p}, CLI_SCHEMAS))
    print(f"wrote {len(frames)} frame(s) of {frames[0].shape[0]}x{frames[0].shape[1]} to {out}")


def cmd_estimate(args):
    signal = _read_stack(args.signal)
    idler = _read_stack(args.idler) if args.idler else None
    mask = _background(args, signal.shape[1:])
    method = args.method
    if method != "t0" and idler is None:
        raise UsageError(f"method {method} needs --idler images")
    if idler is not None and idler.shape != signal.shape:
        raise UsageError("signal and idler stacks must match")
    if method == "t0":
        result = est.estimate_t0(signal[-1], mask)
    elif method == "ratio":
        result = est.estimate_ratio(signal[-1], idler[-1], mask)
    elif method == "optsub":
        prior = est.estimate_t0(signal[-1], mask).t_hat
        result = est.estimate_optsub(signal[-1], idler[-1], prior, args.eta, args.mu_spdc, args.mu_stray, mask)
    elif method == "cov":
        result = est.estimate_cov(signal, idler, mask, combine=args.combine)
    else:
        result = est.estimate_scov(signal[-1], idler[-1], mask, bins=args.bins)
    out = _out(args)
    iox.write_matrix(out / f"t_{method}.csv", result.t_hat)
    iox.write_matrix(out / f"flags_{method}.csv", result.flags.astype(np.int64))
    if np.ndim(result.t_hat) == 2:
        iox.write_pgm(out / f"t_{method}.pgm", result.t_hat, (0.0, max(1.0, float(np.nanmax(result.t_hat)))))
    meta = {"method": method, "frames": int(signal.shape[0]), "flagged": int(result.flags.sum()),
            "background_mean": np.asarray(result.background_mean).tolist(),
            "eta": args.eta, "mu_spdc": args.mu_spdc, "mu_stray": args.mu_stray, "bins": args.bins, "combine": args.combine}
    _write_json(out / f"t_{method}.json", meta)
    print(f"{method}: mean T = {float(np.nanmean(result.t_hat)):.6g}, flagged pixels = {int(result.flags.sum())}")


def cmd_bell(args):
    if args.s_target is not None and args.n1_ratio is not None:
        raise UsageError("give either --n1-ratio or --s-target, not both")
    ratio = args.n1_ratio
    if ratio is None:
        ratio = pol.accidental_ratio_for_s(args.s_target if args.s_target is not None else 2.78)
    params = {"n0": args.n0, "n1_ratio": ratio, "rounds": args.rounds}
    spec = ex.ExperimentSpec("bell", params, args.seed)
    result, directory = ex.run_experiment(spec, _out(args))
    s = result.summary
    print(f"S = {s['s_mean']:.4f} +/- {s['s_stderr']:.4f} over {s['rounds']} rounds (noiseless {s['s_noiseless']:.4f})")


def cmd_biref(args):
    out = _out(args)
    if args.quad:
        try:
            values = [float(v) for v in args.quad.split(",")]
        except ValueError:
            raise UsageError("--quad expects four comma-separated numbers") from None
        if len(values) != 4:
            raise UsageError("--quad expects four comma-separated numbers")
        r = pol.invert_birefringence(pol.CoincidenceQuad(*values))
        iox.write_csv(out / "birefringence.csv", ("t", "theta_deg", "delta_rad", "theta_indeterminate"),
                      [(r.t, r.theta, r.delta, r.theta_indeterminate)])
        print(f"T = {r.t:.6g}, theta = {r.theta:.6g} deg, delta = {r.delta:.6g} rad")
        return
    if not args.images or len(args.images) != 4:
        raise UsageError("give --quad or four coincidence images (beta = 0, 45, 90, 135)")
    stack = _read_stack(args.images)
    mask = _background(args, stack.shape[1:])
    maps = pol.birefringence_image(list(stack), mask, strict=args.strict)
    iox.write_matrix(out / "t.csv", maps["t"])
    iox.write_matrix(out / "theta.csv", maps["theta"])
    iox.write_matrix(out / "delta.csv", maps["delta"])
    iox.write_matrix(out / "status.csv", maps["status"].astype(np.int64))
    iox.write_pgm(out / "theta.pgm", maps["theta"], (0.0, 90.0))
    iox.write_pgm(out / "delta.pgm", maps["delta"], (0.0, math.pi))
    iox.write_pgm(out / "t.pgm", maps["t"], (0.0, 1.0))
    print(f"recovered maps for {stack.shape[1]}x{stack.shape[2]} pixels; "
          f"inconsistent pixels = {int((maps['status'] == pol.INCONSISTENT).sum())}")


def _read_xy(path):
    data = _read_image(path)
    if data.ndim != 2 or data.shape[1] < 2:
        raise UsageError(f"{path}: expected two columns")
    return data[:, 0], data[:, 1]


def cmd_fit(args):
    out = _out(args)
    x, y = _read_xy(args.input)
    if args.kind == "esf":
        fit = met.fit_esf(x, y)
        r, se = met.resolution_from_fit(fit)
        extra = [("resolution", r, se)]
        print(f"resolution = {r:.6g} +/- {se:.6g}")
    else:
        fit = met.fit_dof(x, y)
        dof, se = met.dof_from_fit(fit)
        extra = [("dof", dof, se)]
        print(f"R0 = {fit.params['R0']:.6g}, DOF = {dof:.6g} +/- {se:.6g}")
    rows = [(k, v, fit.ci95[k]) for k, v in fit.params.items()] + extra
    iox.write_csv(out / f"fit_{args.kind}.csv", ("parameter", "value", "ci95_half_or_stderr"), rows)
    if args.svg:
        xs = np.linspace(x.min(), x.max(), 400)
        model = met.esf_model(xs, *fit.params.values()) if args.kind == "esf" else met.hyperbola_model(xs, *fit.params.values())
        iox.save_svg_plot(out / f"fit_{args.kind}.svg", [("data", x, y), ("fit", xs, model)], "x", "value")


def cmd_ssim(args):
    a = _read_image(args.image_a)
    b = _read_image(args.image_b)
    print(repr(met.ssim(a, b)))


def cmd_experiment(args):
    params = _load_section(args.config, args.name) if args.config else {}
    spec = ex.ExperimentSpec(args.name, params, args.seed)
    result, directory = ex.run_experiment(spec, _out(args))
    print(f"{args.name}: wrote {len(spec.outputs)} files to {directory}")
    for key, value in sorted(result.summary.items()):
        print(f"  {key} = {value}")


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", f"{self.prog}: {message}", EXIT_USAGE)
        sys.exit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="icesim", description="Simulate and analyse imaging by coincidence from entanglement.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", default="icesim_out", help="output directory (default: icesim_out)")
        if seed:
            p.add_argument("--seed", type=_seed, default=0, help="64-bit seed for every random draw (default: 0)")

    p = sub.add_parser("simulate", help="raster-scan a phantom and write count frames")
    common(p)
    p.add_argument("--config", help="INI file with a [simulate] section")
    p.add_argument("--phantom", help="directory written by save_phantom (overrides the config target)")
    p.add_argument("--format", default="csv,pgm", help="comma list of csv, pgm (default: csv,pgm)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="transmittance from count images")
    common(p, seed=False)
    p.add_argument("--method", choices=est.METHODS, default="cov")
    p.add_argument("--signal", nargs="+", required=True, help="signal or coincidence images, one per frame")
    p.add_argument("--idler", nargs="+", help="idler images, one per frame")
    p.add_argument("--background", help="mask image, non-zero marks background")
    p.add_argument("--background-rect", help="x0,y0,x1,y1 pixel rectangle used as background")
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--mu-spdc", type=float, default=10.0)
    p.add_argument("--mu-stray", type=float, default=0.0)
    p.add_argument("--bins", type=int, default=est.DEFAULT_BINS)
    p.add_argument("--combine", choices=est.COMBINE_MODES, default="mean")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bell", help="CHSH test with Poisson counts")
    common(p)
    p.add_argument("--n0", type=float, default=2000.0)
    p.add_argument("--n1-ratio", type=float)
    p.add_argument("--s-target", type=float)
    p.add_argument("--rounds", type=int, default=10)
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("biref", help="invert coincidence images or a single quad to (T, theta, delta)")
    common(p, seed=False)
    p.add_argument("--quad", help="N0,N45,N90,N135")
    p.add_argument("--images", nargs="+", help="four coincidence images at beta = 0, 45, 90, 135")
    p.add_argument("--background")
    p.add_argument("--background-rect")
    p.add_argument("--strict", action="store_true", help="fail on inconsistent pixels instead of flagging")
    p.set_defaults(func=cmd_biref)

    p = sub.add_parser("fit", help="edge-spread or depth-of-field fit of a two-column CSV")
    common(p, seed=False)
    p.add_argument("kind", choices=("esf", "dof"))
    p.add_argument("input", help="CSV with x (or z) and value (or R) columns")
    p.add_argument("--svg", action="store_true", help="also plot data and fit")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ssim", help="global SSIM of two images (CSV or PGM)")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.set_defaults(func=cmd_ssim)

    p = sub.add_parser("experiment", help="run a registered experiment")
    common(p)
    p.add_argument("--name", required=True, choices=sorted(ex.REGISTRY))
    p.add_argument("--config", help="INI file; the section named after the experiment is used")
    p.set_defaults(func=cmd_experiment)
    return parser


def _fail(kind, message, code):
    text = " ".join(str(message).split())
    print(f"icesim: {kind}: {text}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except (ConfigError, ParameterError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (FitError, InconsistentQuadError, DegenerateInputError) as exc:
        return _fail("computation", exc, EXIT_COMPUTE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
