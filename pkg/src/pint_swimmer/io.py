"""Config files, trajectories and CSV/JSON outputs.

Config files are INI-style (``key = value`` under ``[section]`` headers) or
JSON with the same nesting.  Recognised sections and keys::

    [scenario]   rod_count M L mu eps wall_mode lj_well_depth lj_sigma d_z
                 seed fine_dt T placement intervals step_ratio
    [material]   a1 a2 a3 b1 b2 b3
    [waveform]   A f wavelength
    [parareal]   mode workers ratio l_max tol backend
    [output]     stride format

Unknown sections or keys and unparsable values raise :class:`ConfigError`
naming the file line (INI) or key path.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rod import MaterialParams, WaveformParams
from .scenario import ScenarioConfig


class ConfigError(ValueError):
    """Bad config file; the message carries the line and/or key."""


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


SCHEMA = {
    "scenario": {
        "rod_count": int,
        "M": int,
        "L": float,
        "mu": float,
        "eps": _opt_float,
        "wall_mode": str,
        "lj_well_depth": float,
        "lj_sigma": _opt_float,
        "d_z": float,
        "seed": int,
        "fine_dt": float,
        "T": float,
        "placement": str,
        "intervals": int,
        "step_ratio": int,
    },
    "material": {k: float for k in ("a1", "a2", "a3", "b1", "b2", "b3")},
    "waveform": {"A": float, "f": float, "wavelength": float},
    "parareal": {
        "mode": str,
        "workers": int,
        "ratio": _opt_float,
        "l_max": int,
        "tol": float,
        "backend": str,
    },
    "output": {"stride": int, "format": str},
}


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    parareal: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"stride": 1, "format": "csv"})
    source: str = "<defaults>"


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    out = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = i
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip())] = i
    return out


def _where(source, lines, section, key=None):
    ln = lines.get((section, key))
    loc = f"{source}:{ln}" if ln else source
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _convert(raw: dict, source: str, lines: dict) -> RunConfig:
    typed = {}
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(source, lines, section)}: unknown section")
        if not isinstance(entries, dict):
            raise ConfigError(f"{source}: [{section}] must be a table of key = value")
        typed[section] = {}
        for key, value in entries.items():
            conv = SCHEMA[section].get(key)
            if conv is None:
                known = ", ".join(SCHEMA[section])
                raise ConfigError(
                    f"{_where(source, lines, section, key)}: unknown key (expected one of {known})"
                )
            try:
                typed[section][key] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{_where(source, lines, section, key)}: bad value {value!r} ({exc})")

    sc = dict(typed.get("scenario", {}))
    try:
        if "material" in typed:
            sc["material"] = MaterialParams(**typed["material"])
        if "waveform" in typed:
            sc["waveform"] = WaveformParams(**typed["waveform"])
        scenario = ScenarioConfig(**sc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: invalid scenario: {exc}")
    output = {"stride": 1, "format": "csv"}
    output.update(typed.get("output", {}))
    if output["stride"] < 1:
        raise ConfigError(f"{_where(source, lines, 'output', 'stride')}: stride must be >= 1")
    if output["format"] not in ("csv", "json"):
        raise ConfigError(f"{_where(source, lines, 'output', 'format')}: format must be csv or json")
    return RunConfig(scenario, typed.get("parareal", {}), output, source)


def parse_config_text(text: str, source: str = "<string>", fmt: str | None = None) -> RunConfig:
    fmt = fmt or ("json" if text.lstrip().startswith("{") else "ini")
    if fmt == "json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}: invalid JSON ({exc.msg})")
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be an object of sections")
        return _convert(raw, source, {})
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys are case-sensitive (M, T, A)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key outside any [section]: {exc.line.strip()}")
    except configparser.ParsingError as exc:
        first = exc.errors[0] if exc.errors else (None, "")
        raise ConfigError(f"{source}:{first[0]}: cannot parse line {first[1]!s}")
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        raise ConfigError(f"{source}:{ln}: {exc.message if hasattr(exc, 'message') else exc}")
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    return _convert(raw, source, _key_lines(text))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})")
    fmt = "json" if path.suffix.lower() == ".json" else None
    return parse_config_text(text, str(path), fmt)


def dump_config_ini(rc: RunConfig) -> str:
    """INI text that round-trips through :func:`parse_config_text`."""
    sc = rc.scenario
    lines = ["[scenario]"]
    for key in SCHEMA["scenario"]:
        v = getattr(sc, key)
        lines.append(f"{key} = {'none' if v is None else repr(v) if isinstance(v, float) else v}")
    lines.append("\n[material]")
    lines += [f"{k} = {getattr(sc.material, k)!r}" for k in SCHEMA["material"]]
    lines.append("\n[waveform]")
    lines += [f"{k} = {getattr(sc.waveform, k)!r}" for k in SCHEMA["waveform"]]
    if rc.parareal:
        lines.append("\n[parareal]")
        lines += [f"{k} = {v}" for k, v in rc.parareal.items()]
    lines.append("\n[output]")
    lines += [f"{k} = {v}" for k, v in rc.output.items()]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ outputs


def provenance(cfg: ScenarioConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": cfg.config_hash()}


def write_csv(path, header, rows, prov: dict) -> Path:
    """CSV with ``# seed=... config_hash=...`` comment lines before the header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in prov.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def read_csv(path):
    """(provenance, header, rows) from a file written by :func:`write_csv`."""
    prov = {}
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            prov[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return prov, rows[0], rows[1:]


def write_json(path, payload: dict, prov: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps({**prov, **payload}, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_table(out_dir, stem: str, header, rows, prov: dict, fmt: str = "csv") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        recs = [dict(zip(header, r)) for r in rows]
        return write_json(out_dir / f"{stem}.json", {"rows": recs}, prov)
    return write_csv(out_dir / f"{stem}.csv", header, rows, prov)


class TrajectoryWriter:
    """Raw little-endian float64 frames ``[t, X..., D...]`` plus a JSON sidecar."""

    def __init__(self, path, n_rods: int, M: int, dt: float, stride: int, prov: dict):
        self.path = Path(path)
        self.meta = {
            "rod_count": n_rods,
            "node_count": M,
            "dt": dt,
            "stride": stride,
            "frame_layout": ["t", f"X[{n_rods},{M},3]", f"D[{n_rods},{M},3,3]"],
            "dtype": "<f8",
            **prov,
        }
        self.frames = 0
        self._fh = self.path.open("wb")

    @property
    def frame_size(self) -> int:
        return 1 + 12 * self.meta["rod_count"] * self.meta["node_count"]

    def write(self, t: float, vec: np.ndarray):
        row = np.concatenate([[t], vec]).astype("<f8")
        assert row.size == self.frame_size
        self._fh.write(row.tobytes())
        self.frames += 1

    def close(self) -> Path:
        self._fh.close()
        sidecar = self.path.with_suffix(self.path.suffix + ".json")
        sidecar.write_text(json.dumps({**self.meta, "frames": self.frames}, indent=2) + "\n")
        return sidecar


def read_trajectory(path):
    """(meta, times (F,), X (F, R, M, 3), D (F, R, M, 3, 3))."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    R, M = meta["rod_count"], meta["node_count"]
    raw = np.fromfile(path, dtype="<f8").reshape(meta["frames"], 1 + 12 * R * M)
    k = 3 * R * M
    return (
        meta,
        raw[:, 0],
        raw[:, 1 : 1 + k].reshape(-1, R, M, 3),
        raw[:, 1 + k :].reshape(-1, R, M, 3, 3),
    )
