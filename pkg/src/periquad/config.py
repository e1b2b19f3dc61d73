"""Run configuration: YAML with unit-annotated quantities, strict keys.

Physical quantities may be written as bare numbers (already SI /
nondimensional) or as "value unit" strings ("0.1 m", "1e-6 s", "191 GPa");
everything is normalized to SI floats on load.  Unknown keys anywhere in
the file are rejected with their full path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import yaml

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_quantity",
           "length_unit_factor", "EXPERIMENTS"]


def length_unit_factor(unit: str) -> float:
    """SI meters per one `unit` of length."""
    try:
        return _UNIT_TABLES["length"][unit]
    except KeyError as exc:
        raise ConfigError(f"unknown length unit {unit!r}") from exc


class ConfigError(ValueError):
    pass


_UNIT_TABLES = {
    "length": {"m": 1.0, "mm": 1e-3, "cm": 1e-2, "um": 1e-6, "1": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "1": 1.0},
    "pressure": {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9, "1": 1.0},
    "density": {"kg/m^3": 1.0, "g/cm^3": 1e3, "1": 1.0},
    "velocity": {"m/s": 1.0, "mm/s": 1e-3, "1": 1.0},
    "fracture_energy": {"J/m^2": 1.0, "kJ/m^2": 1e3, "1": 1.0},
    "dimensionless": {"1": 1.0},
}


def parse_quantity(raw: Any, kind: str, path: str) -> float:
    """Normalize a number or "value unit" string of the given kind to SI."""
    if isinstance(raw, bool):
        raise ConfigError(f"{path}: expected a quantity, got a boolean")
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        parts = raw.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}: quantity string must be 'value unit', got {raw!r}")
        try:
            value = float(parts[0])
        except ValueError as exc:
            raise ConfigError(f"{path}: bad numeric value in {raw!r}") from exc
        table = _UNIT_TABLES[kind]
        if parts[1] not in table:
            raise ConfigError(f"{path}: unknown {kind} unit {parts[1]!r} "
                              f"(accepted: {sorted(table)})")
        return value * table[parts[1]]
    raise ConfigError(f"{path}: expected a number or 'value unit' string")


# --- schema nodes -----------------------------------------------------------

def _q(kind, default=None, required=False):
    return ("quantity", kind, default, required)


def _num(default=None, required=False):
    return ("quantity", "dimensionless", default, required)


def _int(default=None, required=False):
    return ("int", None, default, required)


def _str(choices=None, default=None, required=False):
    return ("str", choices, default, required)


def _bool(default):
    return ("bool", None, default, False)


def _pair(kind):
    return ("pair", kind, None, True)


def _list_of(inner, default=None, required=False):
    return ("list", inner, default, required)


def _segments():
    # list of [[x1, y1], [x2, y2]] in length units
    return ("segments", None, (), False)


_COMMON = {
    "experiment": _str(required=True),
    "seed": _int(default=0),
    "output": _str(default=None),
}

_CONVERGE = {
    **_COMMON,
    "domain": {"lower": _pair("length"), "upper": _pair("length")},
    "resolutions": _list_of(_int(required=True), required=True),
    "order": _int(required=True),
    "horizon_ratio": _num(default=None),
    "perturbation": _num(default=0.1),
    "bulk_modulus": _q("pressure", default=1.0),
    "parity_completion": _bool(default=True),
}

_PATCH = {
    **_COMMON,
    "domain": {"lower": _pair("length"), "upper": _pair("length"),
               "cracks": _segments()},
    "resolutions": _list_of(_int(required=True), required=True),
    "order": _int(default=2),
    "horizon_ratio": _num(default=None),
    "perturbation": _num(default=0.1),
    "bulk_modulus": _q("pressure", default=1.0),
    "parity_completion": _bool(default=True),
}

_TYPEI = {
    **_COMMON,
    "domain": {"lower": _pair("length"), "upper": _pair("length")},
    "resolutions": _list_of(_int(required=True), required=True),
    "order": _int(default=3),
    "horizon_ratio": _num(default=3.5),
    "perturbation": _num(default=0.1),
    "crack_half_length": _q("length", default=1.0),
    "load": _q("pressure", default=1.0),
    "bulk_modulus": _q("pressure", default=4.0e4),
    "profile_tip_margin": _q("length", default=0.3),
    "parity_completion": _bool(default=False),
}

_KALTHOFF = {
    **_COMMON,
    "plate": {"width": _q("length", required=True), "height": _q("length", required=True)},
    "grid": _list_of(_int(required=True), required=True),     # [nx, ny]
    "notch_offsets": _list_of(_q("length", required=True), required=True),
    "notch_length": _q("length", required=True),
    "horizon_ratio": _num(default=4.0),
    "order": _int(default=2),
    "perturbation": _num(default=0.1),
    "bulk_modulus": _q("pressure", required=True),
    "density": _q("density", required=True),
    "impact_speed": _q("velocity", required=True),
    "dt": _q("time", required=True),
    "steps": _int(required=True),
    "snapshot_every": _int(default=0),
    "critical_strain": _num(default=None),
    "s0_coefficient": _num(default=None),
    "s0_delta_unit": _str(default="m"),
    "angle_damage_threshold": _num(default=0.35),
    "parity_completion": _bool(default=False),
    "full": {"grid": _list_of(_int(required=True), required=False),
             "dt": _q("time", default=None), "steps": _int(default=None)},
}

_WEIGHTS = {
    **_COMMON,
    "domain": {"lower": _pair("length"), "upper": _pair("length")},
    "resolution": _int(required=True),
    "order": _int(required=True),
    "horizon_ratio": _num(default=None),
    "perturbation": _num(default=0.1),
    "bulk_modulus": _q("pressure", default=1.0),
    "parity_completion": _bool(default=False),
}

EXPERIMENTS = {
    "converge-nonlocal": _CONVERGE,
    "converge-local": _CONVERGE,
    "patch-crack": _PATCH,
    "typeI": _TYPEI,
    "kalthoff": _KALTHOFF,
    "weights-diag": _WEIGHTS,
}


def _validate(schema: dict, raw: dict, path: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    unknown = set(raw) - set(schema)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {path + '.' if path else ''}{key}")
    out = {}
    for key, node in schema.items():
        here = f"{path}.{key}" if path else key
        if isinstance(node, dict):
            sub = raw.get(key, {})
            out[key] = _validate(node, sub if sub is not None else {}, here)
            continue
        tag, arg, default, required = node
        if key not in raw or raw[key] is None:
            if required:
                raise ConfigError(f"missing required key {here}")
            out[key] = default
            continue
        val = raw[key]
        if tag == "quantity":
            out[key] = parse_quantity(val, arg, here)
        elif tag == "int":
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{here}: expected an integer")
            out[key] = val
        elif tag == "str":
            if not isinstance(val, str):
                raise ConfigError(f"{here}: expected a string")
            if arg and val not in arg:
                raise ConfigError(f"{here}: expected one of {sorted(arg)}")
            out[key] = val
        elif tag == "bool":
            if not isinstance(val, bool):
                raise ConfigError(f"{here}: expected a boolean")
            out[key] = val
        elif tag == "pair":
            if not isinstance(val, (list, tuple)) or len(val) != 2:
                raise ConfigError(f"{here}: expected a pair [x, y]")
            out[key] = tuple(parse_quantity(v, arg, f"{here}[{i}]")
                             for i, v in enumerate(val))
        elif tag == "list":
            if not isinstance(val, list):
                raise ConfigError(f"{here}: expected a list")
            inner_tag, inner_arg, _, _ = arg
            items = []
            for i, v in enumerate(val):
                if inner_tag == "int":
                    if isinstance(v, bool) or not isinstance(v, int):
                        raise ConfigError(f"{here}[{i}]: expected an integer")
                    items.append(v)
                else:
                    items.append(parse_quantity(v, inner_arg, f"{here}[{i}]"))
            out[key] = items
        elif tag == "segments":
            segs = []
            for i, seg in enumerate(val):
                arr = seg
                if (not isinstance(arr, list) or len(arr) != 2
                        or any(not isinstance(p, list) or len(p) != 2 for p in arr)):
                    raise ConfigError(f"{here}[{i}]: expected [[x1, y1], [x2, y2]]")
                segs.append(tuple(tuple(parse_quantity(c, "length", f"{here}[{i}]")
                                        for c in p) for p in arr))
            out[key] = tuple(segs)
        else:  # pragma: no cover
            raise AssertionError(tag)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated, SI-normalized configuration for one experiment run."""

    experiment: str
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict) or "experiment" not in raw:
            raise ConfigError("config must be a mapping with an 'experiment' key")
        tag = raw["experiment"]
        if tag not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {tag!r} "
                              f"(expected one of {sorted(EXPERIMENTS)})")
        data = _validate(EXPERIMENTS[tag], raw, "")
        return cls(experiment=tag, data=data)

    def to_dict(self) -> dict:
        """SI-normalized plain dict; reparsing it yields an equal config."""
        def strip(obj):
            if isinstance(obj, dict):
                return {k: strip(v) for k, v in obj.items() if v is not None}
            if isinstance(obj, tuple):
                return [strip(v) for v in obj]
            if isinstance(obj, list):
                return [strip(v) for v in obj]
            return obj
        return strip(self.data)

    def __getitem__(self, key):
        return self.data[key]


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    return RunConfig.from_dict(raw)
