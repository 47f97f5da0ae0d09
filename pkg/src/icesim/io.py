"""Portable outputs (CSV, 16-bit PGM, SVG) and the INI-style run configuration."""

from __future__ import annotations

import configparser
import csv
import io as _io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParameterError

PGM_MAX = 65535


def write_csv(path, header, rows):
    """Write rows with ``repr``-exact floats so reruns are byte-identical."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into a list of dicts of strings."""
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_matrix(path, array):
    array = np.asarray(array)
    fmt = "%d" if np.issubdtype(array.dtype, np.integer) else "%.17g"
    np.savetxt(path, np.atleast_2d(array), delimiter=",", fmt=fmt)
    return Path(path)


def read_matrix(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def write_pgm(path, image, scale=None):
    """Binary 16-bit PGM (P5, big-endian).

    Integer images in ``[0, 65535]`` are written as is.  Otherwise values are
    mapped linearly from ``scale = (lo, hi)`` (default: image min/max, NaN
    written as 0).
    """
    image = np.asarray(image)
    if image.ndim != 2:
        raise ParameterError("PGM images must be 2-D")
    if scale is None and np.issubdtype(image.dtype, np.integer):
        if image.min(initial=0) < 0 or image.max(initial=0) > PGM_MAX:
            raise ParameterError("integer image exceeds the 16-bit range")
        data = image.astype(">u2")
    else:
        values = np.asarray(image, dtype=np.float64)
        finite = np.isfinite(values)
        if scale is None:
            lo, hi = (values[finite].min(), values[finite].max()) if finite.any() else (0.0, 1.0)
        else:
            lo, hi = scale
        span = hi - lo if hi > lo else 1.0
        scaled = np.where(finite, (values - lo) / span, 0.0)
        data = np.round(np.clip(scaled, 0.0, 1.0) * PGM_MAX).astype(">u2")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n{PGM_MAX}\n".encode("ascii"))
        fh.write(data.tobytes())
    return path


def read_pgm(path):
    """Read a binary (P5) PGM with 8- or 16-bit samples."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ParameterError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=width * height, offset=pos)
    return data.reshape(height, width).astype(np.int64)


def save_frames(directory, frames, prefix="frame"):
    """One CSV matrix per channel per frame plus a JSON metadata sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = []
    for f, frame in enumerate(frames):
        for name in ("s", "i", "c"):
            write_matrix(directory / f"{prefix}{f:03d}_n{name}.csv", frame.channel(name))
        meta.append(frame.metadata)
    (directory / f"{prefix}_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def save_svg_plot(path, series, xlabel, ylabel, title="", logx=False, hlines=()):
    """Line plot as SVG with deterministic ids and no timestamp.

    ``series`` is a list of ``(label, x, y)`` tuples.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "icesim", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        for label, x, y in series:
            ax.plot(x, y, marker="o", markersize=3, label=label)
        for level in hlines:
            ax.axhline(level, color="grey", linestyle="--", linewidth=0.8)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if series:
            ax.legend(fontsize=8)
        fig.tight_layout()
        buf = _io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    Path(path).write_text(buf.getvalue())
    return Path(path)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Param:
    """One typed configuration key.

    ``kind`` is ``float``, ``int``, ``bool``, ``str``, ``floats`` (comma list)
    or ``ints``.  Bounds apply to every element of a list.
    """

    kind: str
    default: object
    lo: float | None = None
    hi: float | None = None
    unit: str = ""
    lo_open: bool = False
    choices: tuple = ()

    def parse(self, key, text):
        text = text.strip()
        try:
            if self.kind == "float":
                value = float(text)
            elif self.kind == "int":
                value = int(text)
            elif self.kind == "bool":
                lowered = text.lower()
                if lowered not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                value = lowered in ("true", "1", "yes")
            elif self.kind == "str":
                value = text
            elif self.kind == "floats":
                value = tuple(float(v) for v in text.split(",") if v.strip())
            elif self.kind == "ints":
                value = tuple(int(v) for v in text.split(",") if v.strip())
            else:
                raise AssertionError(self.kind)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text!r} as {self.kind}") from None
        self.check(key, value)
        return value

    def check(self, key, value):
        items = value if isinstance(value, tuple) else (value,)
        if self.kind in ("floats", "ints") and not items:
            raise ConfigError(f"{key}: empty list")
        for v in items:
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"{key}: value {v!r} is not finite")
            if self.lo is not None and (v < self.lo or (self.lo_open and v == self.lo)):
                raise ConfigError(f"{key}: value {v!r} below allowed minimum {self.lo}{self.unit and ' ' + self.unit}")
            if self.hi is not None and v > self.hi:
                raise ConfigError(f"{key}: value {v!r} above allowed maximum {self.hi}{self.unit and ' ' + self.unit}")
            if self.choices and v not in self.choices:
                raise ConfigError(f"{key}: value {v!r} not one of {self.choices}")

    def format(self, value):
        if self.kind in ("floats", "ints"):
            return ", ".join(_fmt(v) for v in value)
        if self.kind == "bool":
            return "true" if value else "false"
        return _fmt(value)


def defaults(schema):
    return {key: p.default for key, p in schema.items()}


def parse_config_text(text, schemas, section=None):
    """Parse INI text against ``schemas`` (section name -> {key: Param}).

    Returns ``{section: params}`` with defaults filled in for every section
    present.  With ``section`` given, returns that section's parameters
    (defaults when the file does not mention it).  Unknown sections or keys
    are errors.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {str(exc).splitlines()[0]}") from None
    result = {}
    for name in parser.sections():
        if name not in schemas:
            raise ConfigError(f"unknown section [{name}]")
        schema = schemas[name]
        params = defaults(schema)
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            params[key] = schema[key].parse(f"[{name}] {key}", raw)
        result[name] = params
    if section is not None:
        if section not in schemas:
            raise ConfigError(f"unknown section [{section}]")
        return result.get(section, defaults(schemas[section]))
    return result


def parse_config(path, schemas, section=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, schemas, section)


def serialize_config(config, schemas):
    """Inverse of :func:`parse_config_text` for ``{section: params}``."""
    lines = []
    for name in sorted(config):
        schema = schemas[name]
        lines.append(f"[{name}]")
        for key in schema:
            if key in config[name]:
                lines.append(f"{key} = {schema[key].format(config[name][key])}")
        lines.append("")
    return "\n".join(lines)
