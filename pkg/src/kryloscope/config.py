"""Run configuration: TOML files, flag overrides and validation."""

from __future__ import annotations

import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .profiles import LanczosProfile, ProfileFormatError, read_profile_csv

SCHEMA_VERSION = "1"
OUT_ENV = "KRYLOSCOPE_OUT"
DEFAULT_OUT = "kryloscope-out"

FAMILIES = {
    "sqrt_hopping": LanczosProfile.sqrt_hopping,
    "su11": LanczosProfile.su11,
    "linear_shift": LanczosProfile.linear_shift,
    "log_drift": LanczosProfile.log_drift,
    "marginal": LanczosProfile.marginal,
    "power_law": LanczosProfile.power_law,
    "crossover": LanczosProfile.crossover,
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        super().__init__(message)
        self.line = line
        self.source = source

    def report(self) -> dict:
        out = {"error": "config", "message": str(self)}
        if self.line is not None:
            out["line"] = self.line
        if self.source is not None:
            out["source"] = self.source
        return out


# per-subcommand defaults; keys double as the accepted config keys
DEFAULTS: dict[str, dict[str, Any]] = {
    "evolve": {"profile": None, "tmax": 3.0, "steps": 60, "tol": 1e-10, "norm_tol": 1e-9,
               "sites": "auto", "distribution": False},
    "fcs": {"profile": None, "tmax": 3.0, "steps": 60, "tol": 1e-10, "norm_tol": 1e-9, "sites": "auto",
            "chi_points": 64, "cumulants": 4, "s_min": -1.0, "s_max": 1.0, "s_points": 81},
    "semiclassics": {"profile": None, "n0": 1.0, "p0": -math.pi / 2, "tmax": 5.0, "steps": 500},
    "classify": {"profile": None, "nmin": 10.0, "nmax": 1e4, "num": 200},
    "fluct": {"profile": None, "n0": 1.0, "p0": -math.pi / 2, "tmax": 1.0, "steps": 100,
              "noise": "identity", "mc_samples": 0, "seed": None, "mc_dt": 1e-3},
    "sweep": {"family": "crossover", "h_grid": [0.1, 0.01, 0.001, 0.0001], "alpha": 1.0, "gamma": 1.0,
              "c": 1.0, "noise": "identity", "t_ref": None, "quantum_sites": 0, "quantum_tmax": 5.0},
    "overlap": {"profile": None, "w": [1.0], "moments": 2, "tol": 1e-16},
    "validate": {"quick": False},
}

POSITIVE = {"tmax", "tol", "norm_tol", "nmin", "nmax", "alpha", "c", "mc_dt", "n0"}
POSITIVE_INT = {"steps", "chi_points", "cumulants", "num", "s_points"}


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    out: Path
    fmt: str = "csv"
    allow_flagged: bool = False
    config_file: Optional[str] = None
    schema_version: str = SCHEMA_VERSION
    profile_obj: Optional[LanczosProfile] = field(default=None, repr=False)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("profile_obj")
        d["out"] = str(self.out)
        return d


def load_config_file(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", source=str(p)) from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            import re

            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"malformed config: {exc}", line=line, source=str(p)) from exc


def parse_profile_spec(spec) -> LanczosProfile:
    """Build a profile from ``family:key=val,...``, a table, or a CSV path."""
    if isinstance(spec, LanczosProfile):
        return spec
    if spec is None:
        raise ConfigError("a profile is required")
    if isinstance(spec, dict):
        spec = dict(spec)
        family = spec.pop("family", None)
        if family == "tabulated" and "values" in spec:
            return _make("tabulated", spec)
        if "file" in spec:
            return _read_profile_file(spec["file"])
        return _make(family, spec)
    spec = str(spec).strip()
    head, sep, rest = spec.partition(":")
    if head in FAMILIES or head == "tabulated":
        kwargs = {}
        if sep and rest.strip():
            for item in rest.split(","):
                key, eq, val = item.partition("=")
                if not eq:
                    raise ConfigError(f"bad profile parameter {item!r}; expected key=value")
                try:
                    kwargs[key.strip()] = float(val)
                except ValueError:
                    raise ConfigError(f"profile parameter {key.strip()} is not a number: {val!r}") from None
        return _make(head, kwargs)
    return _read_profile_file(spec)


def _read_profile_file(path) -> LanczosProfile:
    if not Path(path).exists():
        raise ConfigError(f"profile is neither a known family nor an existing file: {path!r}")
    try:
        return read_profile_csv(path)
    except ProfileFormatError as exc:
        raise ConfigError(str(exc), line=exc.line, source=str(path)) from exc


def _make(family, kwargs) -> LanczosProfile:
    if family == "tabulated":
        try:
            return LanczosProfile.tabulated(kwargs["values"], kwargs.get("diagonal"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad tabulated profile: {exc}") from exc
    if family not in FAMILIES:
        raise ConfigError(f"unknown profile family {family!r}")
    try:
        return FAMILIES[family](**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {family}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid {family} profile: {exc}") from exc


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def resolve(subcommand: str, flags: dict, config_path=None) -> RunConfig:
    """Merge defaults < config file < command-line flags, then validate."""
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    params = dict(DEFAULTS[subcommand])
    top: dict = {}
    if config_path is not None:
        raw = load_config_file(config_path)
        section = raw.get(subcommand, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{subcommand}] must be a table", source=str(config_path))
        top = {k: v for k, v in raw.items() if not isinstance(v, dict) or k == "profile"}
        for k, v in list(top.items()) + list(section.items()):
            if k in params:
                params[k] = v
            elif k not in ("out", "format", "allow_flagged", "schema_version") and k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r} for {subcommand}", source=str(config_path))
        top.update({k: v for k, v in section.items() if k in ("out", "format", "allow_flagged")})
    for k, v in flags.items():
        if v is not None and k in params:
            params[k] = v
    out = flags.get("out") or top.get("out") or default_out_dir()
    fmt = flags.get("format") or top.get("format") or "csv"
    allow = bool(flags.get("allow_flagged") or top.get("allow_flagged", False))
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    _validate(subcommand, params)
    cfg = RunConfig(subcommand, params, Path(out), fmt, allow, str(config_path) if config_path else None)
    if "profile" in params:
        cfg.profile_obj = parse_profile_spec(params["profile"])
        if isinstance(params["profile"], LanczosProfile):
            params["profile"] = params["profile"].describe()
    return cfg


def _validate(sub: str, p: dict) -> None:
    for k, v in p.items():
        if k in POSITIVE and v is not None:
            if not isinstance(v, (int, float)) or not v > 0 or not math.isfinite(v):
                raise ConfigError(f"{k} must be a positive number, got {v!r}")
        if k in POSITIVE_INT and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            raise ConfigError(f"{k} must be a positive integer, got {v!r}")
    if "sites" in p and p["sites"] != "auto":
        if not isinstance(p["sites"], int) or p["sites"] < 2:
            raise ConfigError("sites must be 'auto' or an integer >= 2")
    if sub == "fluct":
        if not isinstance(p["mc_samples"], int) or p["mc_samples"] < 0:
            raise ConfigError("mc_samples must be a non-negative integer")
        if p["mc_samples"] and p["mc_samples"] < 1000:
            raise ConfigError("mc_samples must be 0 or at least 1000")
        if p["mc_samples"] and p["seed"] is None:
            raise ConfigError("a seed is required for Monte Carlo runs")
    if sub == "sweep":
        h = p["h_grid"]
        if not isinstance(h, list) or not h:
            raise ConfigError("h_grid must be a nonempty list")
        if any((not isinstance(x, (int, float))) or x <= 0 for x in h):
            raise ConfigError("h_grid values must be positive")
        if any(b >= a for a, b in zip(h, h[1:])):
            raise ConfigError("h_grid must be strictly decreasing")
        if p["family"] != "crossover":
            raise ConfigError("sweep supports the crossover family only")
    if sub == "overlap":
        w = p["w"] if isinstance(p["w"], list) else [p["w"]]
        if not w or any((not isinstance(x, (int, float))) or x < 0 for x in w):
            raise ConfigError("w values must be non-negative numbers")
        p["w"] = [float(x) for x in w]
        if not isinstance(p["moments"], int) or p["moments"] < 0:
            raise ConfigError("moments must be a non-negative integer")
        if not p["tol"] > 0:
            raise ConfigError("tol must be positive")
    if sub == "classify" and p["nmax"] / p["nmin"] < 100:
        raise ConfigError("nmax/nmin must span at least two decades")
