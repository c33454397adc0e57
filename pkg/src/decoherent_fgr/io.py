"""JSON run configs and CSV/JSON/SVG result files."""
from __future__ import annotations

import copy
import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np

from .experiments import (METHODS, SWEPT_COLUMN, VARIABLES, WS2_GAPS, SweepResult,
                          SweepSpec, default_tau_grid, ws2_system)
from .model import BASES, LevelSystem, PropagationConfig, StimulusTerm
from .propagate import Trajectory

FORMATS = ("csv", "json", "svg")
SIG_DIGITS = 12

_number_or_inf = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": list(WS2_GAPS)},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "levels": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 3},
                "gap": {"type": "number", "exclusiveMinimum": 0},
                "three_level": {"type": "boolean"},
                "eta": {"type": "number", "minimum": 0},
                "coupling_scale": {"type": "number", "minimum": 0},
                "stimuli": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["amplitude", "quantum"],
                        "properties": {
                            "amplitude": {"type": "number", "minimum": 0},
                            "quantum": {"type": "number", "exclusiveMinimum": 0},
                            "damping": {"type": "number", "minimum": 0},
                            "target_pair": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                            "minItems": 2, "maxItems": 2},
                        },
                    },
                },
            },
        },
        "propagation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "decoherence_time": _number_or_inf,
                "basis": {"enum": list(BASES)},
                "detailed_balance": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0}]},
                "readout_level": {"type": "integer", "minimum": 0},
                "initial_frame": {"enum": list(BASES)},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variable"],
            "properties": {
                "variable": {"enum": list(VARIABLES)},
                "grid": {
                    "oneOf": [
                        {"type": "array", "items": {"oneOf": [{"type": "number"}, {"const": "inf"}]},
                         "minItems": 1},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["start", "stop", "num"],
                            "properties": {
                                "start": {"type": "number"},
                                "stop": {"type": "number"},
                                "num": {"type": "integer", "minimum": 1},
                                "spacing": {"enum": ["linear", "log"]},
                            },
                        },
                    ]
                },
                "methods": {"type": "array", "items": {"enum": list(METHODS)}, "uniqueItems": True},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": list(FORMATS)}, "uniqueItems": True},
            },
        },
    },
}

DEFAULT_SYSTEM = {"levels": [0.0, 0.03], "stimuli": [{"amplitude": 1e-4, "quantum": 0.03}]}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated run description plus the fully expanded echo."""

    system: LevelSystem
    propagation: PropagationConfig
    sweep: Optional[SweepSpec]
    output_dir: str
    formats: tuple[str, ...]
    echo: dict

    @property
    def digest(self) -> str:
        return config_hash(self.echo)


def config_hash(echo: dict) -> str:
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _path(err) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else (f".{p}" if parts else str(p)))
    return "".join(parts) or "<root>"


def _tau(value):
    return math.inf if value == "inf" else float(value)


def _tau_out(value: float):
    return "inf" if math.isinf(value) else value


def _expand(doc: dict) -> dict:
    """Fill every default so the echo alone reproduces the run."""
    doc = copy.deepcopy(doc)
    preset = doc.get("preset")
    sys_doc = doc.setdefault("system", {})
    if preset is not None:
        clash = sorted({"levels", "stimuli", "gap"} & set(sys_doc))
        if clash:
            raise ConfigError(f"system.{clash[0]}: not allowed together with 'preset'")
        eta = sys_doc.get("eta", 1e-3)
        sys_doc.setdefault("three_level", False)
        sys_doc.setdefault("coupling_scale", 1.0)
        model = ws2_system(preset, eta, sys_doc["three_level"], sys_doc["coupling_scale"])
        sys_doc["eta"] = eta
        sys_doc["levels"] = list(model.levels)
        sys_doc["stimuli"] = [
            {"amplitude": s.amplitude, "quantum": s.quantum, "damping": s.damping,
             "target_pair": list(s.target_pair)} for s in model.stimuli]
        doc.setdefault("propagation", {}).setdefault("basis", "adiabatic")
        doc.setdefault("sweep", {"variable": "decoherence_time",
                                 "methods": ["adiabatic_numeric"]})
    else:
        if "gap" in sys_doc:
            if "levels" in sys_doc:
                raise ConfigError("system: give either 'gap' or 'levels', not both")
            gap = sys_doc.pop("gap")
            n = 3 if sys_doc.pop("three_level", False) else 2
            sys_doc["levels"] = [0.0] + [gap] * (n - 1)
        for key in ("three_level", "eta", "coupling_scale"):
            if key in sys_doc:
                raise ConfigError(f"system.{key}: only valid together with 'preset'")
        sys_doc.setdefault("levels", DEFAULT_SYSTEM["levels"])
        sys_doc.setdefault("stimuli", copy.deepcopy(DEFAULT_SYSTEM["stimuli"]))
        for s in sys_doc["stimuli"]:
            s.setdefault("damping", 1e-3)
            s.setdefault("target_pair", [0, 1])
    prop = doc.setdefault("propagation", {})
    defaults = PropagationConfig()
    for key in ("dt", "t_max", "basis", "detailed_balance", "readout_level", "initial_frame"):
        prop.setdefault(key, getattr(defaults, key))
    prop.setdefault("decoherence_time", "inf")
    sweep = doc.get("sweep")
    if sweep is not None:
        if "grid" not in sweep:
            sweep["grid"] = _default_grid(sweep["variable"], sys_doc)
        elif isinstance(sweep["grid"], dict):
            g = sweep["grid"]
            g.setdefault("spacing", "linear")
            sweep["grid"] = _grid_values(g)
        sweep.setdefault("methods", ["fgr", "fixed_numeric"])
    out = doc.setdefault("output", {})
    out.setdefault("dir", "results")
    out.setdefault("formats", ["csv", "json"])
    return doc


def _grid_values(g: dict) -> list:
    if g["spacing"] == "log":
        if g["start"] <= 0 or g["stop"] <= 0:
            raise ConfigError("sweep.grid: log spacing needs start, stop > 0")
        vals = np.logspace(math.log10(g["start"]), math.log10(g["stop"]), g["num"])
    else:
        vals = np.linspace(g["start"], g["stop"], g["num"])
    return [float(v) for v in vals]


def _default_grid(variable: str, sys_doc: dict) -> list:
    if variable == "decoherence_time":
        return [float(v) for v in default_tau_grid()]
    gap = sys_doc["levels"][1] - sys_doc["levels"][0]
    centre = gap if variable == "drive_energy" else sys_doc["stimuli"][0]["quantum"]
    return [float(v) for v in np.linspace(centre - 0.01, centre + 0.01, 81)]


def _build(doc: dict) -> RunConfig:
    sys_doc = doc["system"]
    try:
        stimuli = [StimulusTerm(s["amplitude"], s["quantum"], s["damping"], tuple(s["target_pair"]))
                   for s in sys_doc["stimuli"]]
    except ValueError as exc:
        raise ConfigError(f"system.stimuli: {exc}") from exc
    try:
        system = LevelSystem(tuple(sys_doc["levels"]), tuple(stimuli))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc
    p = dict(doc["propagation"])
    p["decoherence_time"] = _tau(p["decoherence_time"])
    try:
        prop = PropagationConfig(**p)
    except ValueError as exc:
        raise ConfigError(f"propagation: {exc}") from exc
    if prop.readout_level >= system.dim:
        raise ConfigError(f"propagation.readout_level: {prop.readout_level} outside {system.dim} levels")
    sweep = None
    if doc.get("sweep") is not None:
        s = doc["sweep"]
        grid = [_tau(v) for v in s["grid"]]
        try:
            sweep = SweepSpec(s["variable"], tuple(grid), system, prop, tuple(s["methods"]))
        except ValueError as exc:
            raise ConfigError(f"sweep: {exc}") from exc
    out = doc["output"]
    return RunConfig(system, prop, sweep, out["dir"], tuple(out["formats"]), doc)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: parse error: {exc.msg}") from exc
    return parse_config_dict(doc)


def parse_config_dict(doc) -> RunConfig:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_path(err)}: {err.message}")
    return _build(_expand(doc))


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read, schema-check and expand a JSON run config."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    return parse_config_text(text, str(path))


# tables

def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{SIG_DIGITS}g}"


def _breakdown_columns(result: SweepResult) -> list:
    b = next((r.breakdown for r in result.rows if r.breakdown is not None), None)
    if b is None:
        return []
    return (["breakdown_total"] + [f"breakdown_stimulus_{i + 1}" for i in range(len(b.per_stimulus))]
            + ["breakdown_interference"])


def sweep_table(result: SweepResult) -> tuple[list, list]:
    """Header and rows of formatted strings."""
    bcols = _breakdown_columns(result)
    header = [SWEPT_COLUMN[result.spec.variable], *result.columns, *bcols]
    rows = []
    for r in result.rows:
        line = [fmt(r.value)] + [fmt(r.occupations.get(c, math.nan)) for c in result.columns]
        if bcols:
            b = r.breakdown
            if b is None:
                line += ["nan"] * len(bcols)
            else:
                line += [fmt(b.total)] + [fmt(p) for p in b.per_stimulus] + [fmt(b.interference)]
        rows.append(line)
    return header, rows


def trajectory_table(traj: Trajectory) -> tuple[list, list]:
    pops = traj.populations()
    header = ["t_fs"] + [f"pop_{i}" for i in range(pops.shape[1])]
    rows = [[fmt(t)] + [fmt(p) for p in row] for t, row in zip(traj.times, pops)]
    return header, rows


def table_to_csv(header: list, rows: list) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_num(s: str):
    return s if s in ("nan", "inf", "-inf") else float(s)


def table_to_json(header: list, rows: list, kind: str, echo: Optional[dict],
                  errors: Optional[list] = None) -> str:
    doc = {"kind": kind, "config": echo, "columns": header,
           "rows": [[_json_num(x) for x in row] for row in rows]}
    if errors is not None:
        doc["errors"] = errors
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def json_to_csv(text: str) -> str:
    """Rebuild the CSV from an emitted JSON document."""
    doc = json.loads(text)
    rows = [[x if isinstance(x, str) else fmt(x) for x in row] for row in doc["rows"]]
    return table_to_csv(doc["columns"], rows)


def _svg(header: list, rows: list, logx: bool, title: str) -> str:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.array([[float(x) for x in r] for r in rows]) if rows else np.zeros((0, len(header)))
    with matplotlib.rc_context({"svg.hashsalt": "decoherent-fgr", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for j, name in enumerate(header[1:], start=1):
            ax.plot(data[:, 0], data[:, j], label=name, marker="." if len(rows) < 40 else None)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(header[0])
        ax.set_ylabel("final occupation")
        ax.set_title(title)
        if len(header) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        buf = _io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return buf.getvalue()


def _write_all(out_dir: Path, files: dict) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    written, temps = [], []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".part")
            temps.append(tmp)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for (name, _), tmp in zip(files.items(), temps):
            target = out_dir / name
            os.replace(tmp, target)
            written.append(target)
    except BaseException:
        for p in temps:
            if os.path.exists(p):
                os.unlink(p)
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def emit(result: Union[SweepResult, Trajectory], formats=("csv", "json"),
         out_dir: Union[str, Path] = "results", echo: Optional[dict] = None,
         stem: Optional[str] = None) -> list:
    """Write ``result`` in each of ``formats``; return the paths written.

    File names are ``<stem>-<hash>.<ext>`` with the hash taken from the
    config echo, so identical runs land on identical names. Either all
    files appear or none do.
    """
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ValueError(f"unknown formats {bad}; choose from {FORMATS}")
    if isinstance(result, Trajectory):
        header, rows = trajectory_table(result)
        kind, errors, logx = "trajectory", None, False
    else:
        header, rows = sweep_table(result)
        kind, logx = "sweep", result.spec.variable == "decoherence_time"
        errors = [{"value": fmt(r.value), "errors": r.errors} for r in result.rows if r.errors]
    stem = stem or kind
    name = f"{stem}-{config_hash(echo or {'columns': header, 'rows': rows})}"
    files = {}
    if "csv" in formats:
        files[f"{name}.csv"] = table_to_csv(header, rows)
    if "json" in formats:
        files[f"{name}.json"] = table_to_json(header, rows, kind, echo, errors)
    if "svg" in formats:
        files[f"{name}.svg"] = _svg(header, rows, logx, stem)
    return _write_all(Path(out_dir), files)


def sweep_echo(result: SweepResult, extra: Optional[dict] = None) -> dict:
    """Echo for programmatic runs that did not start from a config file."""
    spec = result.spec
    echo = {
        "system": {
            "levels": list(spec.base_system.levels),
            "stimuli": [{"amplitude": s.amplitude, "quantum": s.quantum, "damping": s.damping,
                         "target_pair": list(s.target_pair)} for s in spec.base_system.stimuli],
        },
        "propagation": {
            "dt": spec.base_config.dt, "t_max": spec.base_config.t_max,
            "decoherence_time": _tau_out(spec.base_config.decoherence_time),
            "basis": spec.base_config.basis, "detailed_balance": spec.base_config.detailed_balance,
            "readout_level": spec.base_config.readout_level,
            "initial_frame": spec.base_config.initial_frame,
        },
        "sweep": {"variable": spec.variable, "grid": [_tau_out(v) for v in spec.grid],
                  "methods": list(spec.methods)},
        "columns": list(result.columns),
    }
    if extra:
        echo.update(extra)
    return echo


def rows_from_json(text: str) -> list:
    """Sweep rows back as floats, in file order (swept value first)."""
    doc = json.loads(text)
    return [[float(x) for x in row] for row in doc["rows"]]


__all__ = [
    "CONFIG_SCHEMA", "ConfigError", "FORMATS", "RunConfig", "config_hash", "emit", "fmt",
    "json_to_csv", "parse_config", "parse_config_dict", "parse_config_text", "rows_from_json",
    "sweep_echo", "sweep_table", "table_to_csv", "trajectory_table",
]
