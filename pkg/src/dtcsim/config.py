"""Device, pulse and scenario files.

Every file is a YAML mapping.  Device files use the keys in ``DEVICE_KEYS``
(units in the key name); unknown keys and bad values are reported with the
key and line.  ``--set key=value`` overrides go through ``apply_overrides``.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .circuit import DeviceParams
from .errors import ConfigError, InvalidParameterError

DEVICE_KEYS = {
    "C_q01_fF": "C_q01",
    "C_q02_fF": "C_q02",
    "C_q12_fF": "C_q12",
    "C_c01_fF": "C_c01",
    "C_c02_fF": "C_c02",
    "C_c12_fF": "C_c12",
    "C_1c_fF": "C_1c",
    "C_2c_fF": "C_2c",
    "E_jq_GHz": "E_jq",
    "E_j1_GHz": "E_j1",
    "E_j2_GHz": "E_j2",
    "alpha": "alpha",
    "phi_e_rad": "phi_e",
}


def _load(path):
    """Parse a YAML mapping, returning (data, {key: line}) for its top level."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("file not found", path=path)
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line=line,
                          path=path) from exc
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, path=path)
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    return data, lines


def load_mapping(path) -> dict:
    data, _ = _load(path)
    return data


def parse_override(text: str):
    """'key=value' -> (key, value) with YAML scalar typing."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {raw!r}", key=key) from exc
    return key, value


def _device_from_mapping(data: dict, lines: dict, path=None) -> DeviceParams:
    fields = {}
    for key, value in data.items():
        line = lines.get(key)
        if key not in DEVICE_KEYS:
            raise ConfigError("unknown device key", key=key, line=line, path=path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=key, line=line, path=path)
        fields[DEVICE_KEYS[key]] = float(value)
    try:
        return DeviceParams(**fields)
    except InvalidParameterError as exc:
        # messages start with the offending field name
        field = str(exc).split()[0].split("=")[0]
        bad = next((k for k, f in DEVICE_KEYS.items() if f == field), None)
        raise ConfigError(str(exc), key=bad, line=lines.get(bad), path=path) from exc


def load_device(path=None, overrides=None) -> DeviceParams:
    """DeviceParams from a device file (defaults when ``path`` is None) plus overrides.

    ``overrides`` maps device keys to values; they replace file entries.
    """
    data, lines = _load(path) if path is not None else ({}, {})
    data = dict(data)
    for key, value in (overrides or {}).items():
        if key not in DEVICE_KEYS:
            raise ConfigError("unknown device key in override", key=key)
        data[key] = value
        lines[key] = None
    return _device_from_mapping(data, lines, path)


def device_to_yaml(params: DeviceParams) -> str:
    return "".join(f"{k}: {getattr(params, f)!r}\n" for k, f in DEVICE_KEYS.items())


def split_overrides(pairs, run_defaults: dict):
    """Sort parsed overrides into device keys and run options.

    Run options must already exist in ``run_defaults``.
    """
    device, run = {}, dict(run_defaults)
    for key, value in pairs:
        if key in DEVICE_KEYS:
            device[key] = value
        elif key in run_defaults:
            run[key] = value
        else:
            raise ConfigError("override does not name a device key or run option", key=key)
    return device, run


def resolve(base, ref) -> Path:
    """Path ``ref`` relative to the directory of file ``base``."""
    p = Path(ref)
    return p if p.is_absolute() else Path(base).resolve().parent / p


def load_pulse(path) -> dict:
    """Pulse file: a mapping with ``kind`` in {parametric, cz} and its parameters."""
    data, lines = _load(path)
    kind = data.get("kind")
    required = {"parametric": ("idle", "amplitude", "frequency", "duration"),
                "cz": ("idle", "coupler_flux", "qubit", "qubit_offset", "hold")}
    if kind not in required:
        raise ConfigError(f"kind must be one of {sorted(required)}", key="kind",
                          line=lines.get("kind"), path=path)
    for key in required[kind]:
        if key not in data:
            raise ConfigError("missing pulse parameter", key=key, path=path)
    return data
