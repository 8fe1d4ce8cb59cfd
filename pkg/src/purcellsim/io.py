"""Run configuration and artifact writers.

CSV files start with one ``#`` line listing column units, then a header row.
All writes go to a temporary file in the target directory and are renamed
into place, so readers never see a half-written file.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import DeviceParams, bundled_device


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns: list[tuple[str, str]], rows) -> Path:
    """``columns`` is a list of (name, unit) pairs; ``rows`` an iterable of sequences."""
    buf = io.StringIO()
    buf.write("# units: " + ", ".join(f"{n}={u}" for n, u in columns) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([n for n, _ in columns])
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a CSV written by :func:`write_csv` (or any CSV with ``#`` comment lines)."""
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(lines)
    header = next(reader)
    data = list(reader)
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in data]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _clean(o):
    # JSON has no inf/nan; write them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps_json(obj) -> str:
    return json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default, allow_nan=True))),
                      indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


@dataclass
class RunConfig:
    """Parsed ``--config`` file: the device plus one parameter block per subcommand."""

    device: DeviceParams
    blocks: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def block(self, name: str, defaults: dict) -> dict:
        """Subcommand block merged over ``defaults``; unknown keys are an error."""
        given = self.blocks.get(name, {}) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"config block {name!r} must be an object")
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
        return {**defaults, **given}

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path) -> RunConfig:
    """Read a JSON run configuration.

    ``device`` may be a path to a device file, an inline object with the
    ``*_hz`` keys, or absent (bundled device). Inline objects may also give
    ``base`` (path) plus overrides.
    """
    if path is None:
        return RunConfig(bundled_device())
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    base_dir = path.parent
    dev = raw.pop("device", None)
    if dev is None:
        device = bundled_device()
    elif isinstance(dev, str):
        p = Path(dev)
        device = DeviceParams.from_json(p if p.is_absolute() else base_dir / p)
    elif isinstance(dev, dict):
        dev = dict(dev)
        base = dev.pop("base", None)
        start = (DeviceParams.from_json(base_dir / base) if base else bundled_device()).to_hz_dict()
        unknown = set(dev) - set(start)
        if unknown:
            raise ConfigError(f"unknown device keys: {sorted(unknown)}")
        device = DeviceParams.from_hz_dict({**start, **dev})
    else:
        raise ConfigError("device must be a path or an object")
    return RunConfig(device, raw, base_dir)
