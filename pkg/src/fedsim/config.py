"""Experiment config files: TOML with four tables and typed keys.

Grammar (a subset of TOML; see README for a full example)::

    [method]
    name = "fedlada"        # required
    alpha = 0.05            # any MethodConfig field
    [model]
    kind = "softmax"
    [data]
    sep = 3.0
    [run]
    T = 300
    seeds = [0, 1, 2]

Dotted keys (``method.alpha = 0.05``) at top level are equivalent to the
table form. Method hyperparameters not given fall back to the method's
family defaults. Every diagnostic carries the line it refers to.
"""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .methods import METHODS, MethodConfig
from .orchestrator import ConfigError, DataConfig, ExperimentConfig, ModelConfig

__all__ = [
    "apply_override",
    "canonical_json",
    "config_hash",
    "load_config",
    "parse_config",
    "resolve_axis",
]

_SECTIONS = {
    "method": MethodConfig,
    "model": ModelConfig,
    "data": DataConfig,
    "run": ExperimentConfig,
}
_RUN_KEYS = ("m", "rate", "T", "K", "batch", "seeds", "metric_every")


def _schema() -> dict[str, type]:
    """Dotted key -> expected python type."""
    out = {}
    for sec, cls in _SECTIONS.items():
        for f in fields(cls):
            if sec == "run" and f.name not in _RUN_KEYS:
                continue
            out[f"{sec}.{f.name}"] = f.type
    return out


_TYPES = {
    "str": str, "int": int, "float": float, "float | None": float, "tuple": list,
}


def _line_index(text: str) -> dict[str, int]:
    """Map each dotted key to the 1-based line that sets it."""
    where: dict[str, int] = {}
    table = ""
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        head = re.match(r"\[\s*([A-Za-z0-9_.\-]+)\s*\]", s)
        if head:
            table = head.group(1)
            where.setdefault(table, n)
            continue
        key = re.match(r"([A-Za-z0-9_.\-\"]+)\s*=", s)
        if key:
            k = key.group(1).replace('"', "")
            where[f"{table}.{k}" if table else k] = n
    return where


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, path + "."))
        else:
            out[path] = v
    return out


def _coerce(key: str, value, where: str):
    want = _TYPES[_schema()[key]]
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is list:
        if isinstance(value, int) and not isinstance(value, bool):
            return (value,)
        if isinstance(value, list) and value and all(
                isinstance(v, int) and not isinstance(v, bool) for v in value):
            return tuple(value)
        raise ConfigError(f"{where}: {key} must be an integer or a non-empty list of integers")
    if not isinstance(value, want) or isinstance(value, bool):
        raise ConfigError(f"{where}: {key} expects {want.__name__}, got {type(value).__name__} {value!r}")
    return value


def _build(flat: dict, lines: dict, source: str) -> ExperimentConfig:
    schema = _schema()

    def loc(key):
        n = lines.get(key)
        return f"{source}:{n}" if n else source

    for key in flat:
        if key not in schema:
            section = key.split(".", 1)[0]
            hint = ("unknown section" if section not in _SECTIONS
                    else f"unknown key; valid keys in [{section}]: "
                         + ", ".join(k.split(".", 1)[1] for k in schema if k.startswith(section + ".")))
            raise ConfigError(f"{loc(key)}: {key}: {hint}")
    typed = {k: _coerce(k, v, loc(k)) for k, v in flat.items()}

    name = typed.get("method.name")
    if name is None:
        raise ConfigError(f"{source}: method.name is required; valid: {', '.join(METHODS)}")
    if name not in METHODS:
        raise ConfigError(f"{loc('method.name')}: unknown method {name!r}; valid: {', '.join(METHODS)}")

    def section(sec):
        return {k.split(".", 1)[1]: v for k, v in typed.items() if k.startswith(sec + ".")}

    try:
        method_kw = section("method")
        method_kw.pop("name")
        method = MethodConfig.default(name, **method_kw)
    except ValueError as exc:
        raise ConfigError(f"{loc('method.name')}: [method]: {exc}") from None
    cfg = ExperimentConfig(method=method, model=ModelConfig(**section("model")),
                           data=DataConfig(**section("data")), **section("run"))
    try:
        return cfg.validate()
    except ConfigError as exc:
        # point at the offending key when the message names one
        m = re.match(r"([a-z]+\.[A-Za-z_]+)", str(exc))
        raise ConfigError(f"{loc(m.group(1)) if m else source}: {exc}") from None


def _parse_table(text: str, source: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: syntax error: {exc}") from None


def parse_config(text: str, overrides=(), source: str = "<config>") -> ExperimentConfig:
    """Parse config ``text``, then apply ``key=value`` overrides in order."""
    flat = _flatten(_parse_table(text, source))
    lines = _line_index(text)
    for ov in overrides:
        key, value = apply_override(ov)
        flat[key] = value
        lines[key] = None
    return _build(flat, lines, source)


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, overrides, str(path))


def apply_override(text: str) -> tuple[str, object]:
    """Split ``section.key=value``; the value is read as a TOML literal, else a bare string."""
    if "=" not in text:
        raise ConfigError(f"--set {text!r}: expected section.key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    if key not in _schema():
        raise ConfigError(f"--set {text!r}: unknown key {key!r}")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def resolve_axis(axis: str) -> str:
    """Validate a sweep axis such as ``method.alpha`` or ``run.K``."""
    if axis not in _schema() or axis in ("data.path", "data.label_column"):
        raise ConfigError(f"invalid sweep axis {axis!r}; use section.key, e.g. method.alpha or run.K")
    return axis


def with_value(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """``config`` with one dotted field replaced; method defaults are not re-derived."""
    sec, key = resolve_axis(axis).split(".", 1)
    value = _coerce(axis, value, f"sweep value for {axis}")
    try:
        if sec == "run":
            cfg = replace(config, **{key: value})
        elif sec == "method" and key == "name":
            keep = {k: v for k, v in config.method.as_dict().items()
                    if k not in ("name", "eta_l", "eta_g", "alpha")}
            cfg = replace(config, method=MethodConfig.default(value, **keep))
        else:
            sub = getattr(config, sec)
            cfg = replace(config, **{sec: replace(sub, **{key: value})})
    except ValueError as exc:
        raise ConfigError(f"{axis}={value!r}: {exc}") from None
    return cfg.validate()


def canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(config.as_dict(), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 over the resolved config, so key order and spelling style do not matter."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()
