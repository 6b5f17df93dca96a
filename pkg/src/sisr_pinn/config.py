"""Sectioned key-value run configuration.

Files use INI syntax::

    [model]
    a = 0.05
    eps = 0.005

    [sweep]
    sigma_grid = geom:0.005:0.3:9

Every key has a type and a default; unknown keys and bad values raise
:class:`ConfigError` naming the key and the line it came from.
"""
from __future__ import annotations

import configparser
import copy
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    t = text.strip().lower()
    return None if t in ("", "none") else float(t)


def _list(conv):
    def parse(text: str):
        items = [x.strip() for x in text.replace(";", ",").split(",")]
        return [conv(x) for x in items if x]
    return parse


def parse_grid(text: str) -> list[float]:
    """``geom:lo:hi:n``, ``lin:lo:hi:n`` or a comma-separated list."""
    t = text.strip()
    m = re.fullmatch(r"(geom|lin):([^:]+):([^:]+):(\d+)", t)
    if m:
        kind, lo, hi, n = m.group(1), float(m.group(2)), float(m.group(3)), int(m.group(4))
        if n < 1:
            raise ValueError("grid needs at least one point")
        if kind == "geom":
            if lo <= 0 or hi <= 0:
                raise ValueError("geometric grid bounds must be > 0")
            return np.geomspace(lo, hi, n).tolist()
        return np.linspace(lo, hi, n).tolist()
    return _list(float)(t)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    return str(value)


STR = str
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"seed": (int, 42), "threads": (int, 1)},
    "model": {
        "a": (float, 0.05), "b": (float, 1.0), "c": (float, 2.0),
        "eps": (float, 0.00025), "sigma": (float, 0.03061),
    },
    "simulate": {"dt": (float, 0.05), "steps": (int, 20_000), "v0": (float, 0.0), "w0": (float, 0.0)},
    "landscape": {
        "w_points": (int, 201),
        "profiles": (_list(float), [0.0]),
        "v_points": (int, 201),
        "mc_samples": (int, 0),
        "mc_w": (float, 0.0),
        "mc_dt": (float, 0.01),
        "mc_start": (STR, "left"),
        "mc_max_steps": (int, 100_000_000),
    },
    "sweep": {
        "sigma_grid": (parse_grid, parse_grid("geom:0.005:0.3:9")),
        "a_grid": (_list(float), []),
        "eps_grid": (_list(float), []),
        "horizon": (float, 20_000.0),
        "min_spikes": (int, 50),
        "dt": (float, 0.05),
        "max_horizon_factor": (float, 8.0),
    },
    "data": {
        "dataset": (STR, ""),
        "n_points": (int, 50_000),
        "dt": (float, 0.05),
        "split_fraction": (float, 0.8),
        "burn_in": (int, 2000),
        "v0": (float, 0.0),
        "w0": (float, 0.0),
    },
    "train": {
        "epochs": (int, 2000),
        "batch_total": (int, 512),
        "window_len": (int, 32),
        "lr": (float, 1e-3),
        "lr_final": (_opt_float, None),
        "loss_mask": (_list(str), ["data", "ic", "phy1", "phy2"]),
        "lambda_data": (float, 1.0),
        "lambda_ic": (float, 1.0),
        "lambda_phy1": (float, 10.0),
        "lambda_phy2": (float, 1.0),
        "weight_adapt": (STR, "off"),
        "adapt_smoothing": (float, 0.9),
        "phy2_rollout_len": (int, 20_000),
        "phy2_every": (int, 50),
        "prominence_fraction": (float, 0.1),
        "escape_lookback": (int, 100),
        "eval_every": (int, 25),
        "hidden": (_list(int), [128, 128, 128]),
        "head": (STR, "euler"),
        "normalize": (_bool, True),
        "ic_noise": (float, 0.0),
        "phy1_collocation": (int, 2048),
        "collocation_sigma_max": (float, 0.15),
    },
    "eval": {
        "checkpoint": (STR, ""),
        "sigma": (_opt_float, None),
        "steps": (int, 0),
        "horizon_factor": (float, 5.0),
        "v0": (_opt_float, None),
        "w0": (_opt_float, None),
    },
    "predict": {
        "checkpoint": (STR, ""),
        "sigma_grid": (parse_grid, parse_grid("geom:0.01:0.1:7")),
        "horizon": (float, 20_000.0),
        "min_spikes": (int, 50),
    },
}


class Config:
    """Resolved configuration: defaults, then file values, then overrides."""

    def __init__(self, values: dict | None = None, source: str = "<defaults>"):
        self.values = {s: {k: copy.deepcopy(d) for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        self.origin: dict[tuple[str, str], str] = {}
        self.source = source
        for section, items in (values or {}).items():
            for key, value in items.items():
                self.set(section, key, value, origin=source)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def set(self, section: str, key: str, value, origin: str = "<override>") -> None:
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"{origin}: unknown key '{key}' in [{section}]")
        conv = SCHEMA[section][key][0]
        if isinstance(value, str):
            try:
                value = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{origin}: bad value for '{key}' in [{section}]: {exc}") from None
        self.values[section][key] = value
        self.origin[(section, key)] = origin

    def set_text(self, assignment: str) -> None:
        """Apply ``section.key=value``."""
        lhs, sep, rhs = assignment.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set {assignment!r}: expected section.key=value")
        self.set(section, key.strip(), rhs.strip(), origin="--set")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.values)

    def to_ini(self) -> str:
        lines = []
        for section, items in self.values.items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {_format(v)}" for k, v in items.items()]
            lines.append("")
        return "\n".join(lines)


def _line_index(text: str) -> dict[tuple[str, str], int]:
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            continue
        key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
        if section is not None:
            index.setdefault((section, key), n)
    return index


def load_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"{path}:{line}" if line else str(path)
        msg = str(exc).splitlines()[0]
        raise ConfigError(f"{where}: {msg}") from None
    lines = _line_index(text)
    cfg = Config(source=str(path))
    for section in parser.sections():
        for key, raw in parser.items(section):
            cfg.set(section, key, raw, origin=f"{path}:{lines.get((section, key), '?')}")
    return cfg


def config_from_dict(values: dict, source: str = "<manifest>") -> Config:
    cfg = Config(source=source)
    for section, items in values.items():
        for key, value in items.items():
            cfg.set(section, key, value, origin=f"{source} [{section}] {key}")
    return cfg
