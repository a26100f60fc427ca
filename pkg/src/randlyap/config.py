"""YAML experiment configuration with strict keys and range checks.

Precedence, lowest to highest: built-in defaults, the config file, command
line flags.  Every key is listed in ``SCHEMA``; unknown keys are errors and
each error names the offending key and its line in the file.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from .errors import ConfigError


def _num(lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "must be a number"
        if integer and int(v) != v:
            return "must be an integer"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None
    return check


def _choice(*opts):
    def check(v):
        return None if v in opts else f"must be one of {list(opts)}"
    return check


def _bool(v):
    return None if isinstance(v, bool) else "must be true or false"


def _list_of(item, min_len=0, length=None):
    def check(v):
        if not isinstance(v, list):
            return "must be a list"
        if length is not None and len(v) != length:
            return f"must have exactly {length} entries"
        if len(v) < min_len:
            return f"must have at least {min_len} entries" if min_len > 1 else "must not be empty"
        for x in v:
            err = item(x)
            if err:
                return f"entry {x!r} {err}"
        return None
    return check


def _psi(v):
    if v == "sin":
        return None
    if isinstance(v, dict) and set(v) <= {"cos", "sin"}:
        for k in v:
            err = _list_of(_num())(v[k])
            if err:
                return f"{k} {err}"
        return None
    return "must be 'sin' or a mapping with 'cos' and/or 'sin' coefficient lists"


def _optional(check):
    return lambda v: None if v is None else check(v)


# section -> key -> (default, validator)
SCHEMA = {
    "map": {
        "psi": ("sin", _psi),
        "L": (10.0, _num(1.0, lo_open=True)),
        "a": (0.0, _num()),
        "standard_map": (False, _bool),
    },
    "noise": {
        "epsilon": (0.01, _num(0.0, 0.5, lo_open=True)),
        "seed": (0, _num(0, integer=True)),
    },
    "chain": {
        "burn_in": (10_000, _num(1000, integer=True)),
        "n_steps": (1_000_000, _num(10_000, integer=True)),
        "n_replicas": (16, _num(2, integer=True)),
        "renorm_every": (25, _num(1, integer=True)),
        "grid": ([32, 32, 64], _list_of(_num(1, integer=True), length=3)),
    },
    "regions": {
        "c": (0.003, _num(0.0, lo_open=True)),
        "c0": (0.2, _optional(_num(0.0, lo_open=True))),
        "p": (0.125, _num(0.0, 0.25, lo_open=True)),
        "beta": (0.5, _num(0.0, 1.0, lo_open=True, hi_open=True)),
        "version": ("thm2", _choice("thm1", "thm2")),
        "N": (6, _num(1, integer=True)),
    },
    "sweep": {
        "L": ([5.0, 10.0, 20.0, 40.0], _list_of(_num(1.0, lo_open=True), min_len=1)),
        "epsilon": ([0.01], _list_of(_num(0.0, 0.5, lo_open=True), min_len=1)),
        "c": ([0.2, 0.1, 0.05, 0.02], _list_of(_num(0.0, lo_open=True), min_len=1)),
        "a_grid": (1024, _num(1, integer=True)),
    },
    "verify": {
        "n_samples": (100_000, _num(1, integer=True)),
        "n_orbits": (1_000_000, _num(1, integer=True)),
        "n_density": (1000, _num(1, integer=True)),
        "n_preimage": (10_000, _num(1, integer=True)),
        "n_blocks": (10_000, _num(1, integer=True)),
        "N_values": ([2, 4, 8, 16], _list_of(_num(1, integer=True), min_len=2)),
        "dps": (60, _num(20, integer=True)),
    },
    "output": {
        "path": (None, _optional(lambda v: None if isinstance(v, str) else "must be a string")),
        "format": ("csv", _choice("csv", "json")),
    },
}


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(d) for k, (d, _) in keys.items()} for sec, keys in SCHEMA.items()}


def _key_lines(text: str) -> dict:
    """Line number (1-based) of every ``section.key`` in the YAML source."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for kn, vn in root.value:
        lines[kn.value] = kn.start_mark.line + 1
        if isinstance(vn, yaml.MappingNode):
            for k2, _ in vn.value:
                lines[f"{kn.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    def canonical(self) -> str:
        """Sorted JSON of every setting that can change results (the output path cannot)."""
        data = copy.deepcopy(self.data)
        data["output"].pop("path", None)
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, **flat) -> "ExperimentConfig":
        """Apply ``section__key=value`` overrides (``None`` values are skipped)."""
        data = copy.deepcopy(self.data)
        for name, value in flat.items():
            if value is None:
                continue
            sec, key = name.split("__", 1)
            data[sec][key] = value
        validate(data)
        return ExperimentConfig(data)


def validate(data: dict, lines: dict | None = None) -> None:
    lines = lines or {}

    def where(path):
        return f" (line {lines[path]})" if path in lines else ""

    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of sections")
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section '{sec}'{where(sec)}; expected one of {sorted(SCHEMA)}")
        if not isinstance(body, dict):
            raise ConfigError(f"section '{sec}'{where(sec)} must be a mapping")
        for key, value in body.items():
            path = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{path}'{where(path)}; expected one of {sorted(SCHEMA[sec])}")
            err = SCHEMA[sec][key][1](value)
            if err:
                raise ConfigError(f"'{path}'{where(path)} {err} (got {value!r})")


def loads(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse YAML: {exc}") from None
    raw = raw or {}
    validate(raw, _key_lines(text))
    data = defaults()
    for sec, body in raw.items():
        data[sec].update(body)
    for sec in data.values():
        for k, v in sec.items():
            if isinstance(v, int) and not isinstance(v, bool) and k in ("L", "a", "epsilon", "c", "c0", "p", "beta"):
                sec[k] = float(v)
    return ExperimentConfig(data)


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return loads(text)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(defaults())
