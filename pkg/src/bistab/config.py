"""Run configuration: a flat INI document parsed into a validated :class:`RunConfig`.

Frequencies are given in GHz, rates in MHz (both as ν = ω/2π), temperature
in kelvin, and trajectory times in units of 1/(2κ).
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, replace

from .models import TWO_PI, SystemParams, device_preset, ratio_params

__all__ = ["ConfigError", "RunConfig", "parse_config", "resolve_params", "SCHEMA", "MODELS", "PRESETS"]

MODELS = ("jc", "gjc", "duffing", "meanfield", "fpe")
PRESETS = ("ratios", "D1", "D2", "none")
SCHEMES = ("weak2", "euler")


class ConfigError(ValueError):
    pass


def _int(v):
    return int(v)


def _float(v):
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _cutoff(v):
    return "auto" if v.strip().lower() == "auto" else int(v)


def _extent(v):
    return "auto" if v.strip().lower() == "auto" else _float(v)


def _choice(options):
    def conv(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return conv


def _preset(v):
    for p in PRESETS:
        if v.lower() == p.lower():
            return p
    raise ValueError(f"expected one of {', '.join(PRESETS)}")


# section -> key -> (converter, default); defaults of None mean "unset"
SCHEMA = {
    "run": {
        "model": (_choice(MODELS), None),
        "transmon_levels": (_int, 2),
        "cavity_cutoff": (_cutoff, "auto"),
        "drive_scale": (_float, None),
        "drive_GHz": (_float, None),
        "fpe_convention": (_choice(("printed", "consistent")), "printed"),
    },
    "params": {
        "preset": (_preset, None),
        "f_c": (_float, None),
        "f_q": (_float, None),
        "delta": (_float, None),
        "g": (_float, None),
        "chi": (_float, None),
        "kappa": (_float, None),
        "gamma": (_float, None),
        "gamma_phi": (_float, None),
        "temperature": (_float, None),
        "g_over_delta": (_float, None),
        "two_kappa_over_gamma": (_float, None),
    },
    "sweep": {
        "start": (_float, None),
        "stop": (_float, None),
        "points": (_int, None),
    },
    "trajectory": {
        "seed": (_int, 0),
        "M": (_int, 1),
        "t_max": (_float, 100.0),
        "dt": (_float, 0.002),
        "scheme": (_choice(SCHEMES), "weak2"),
        "t_burn": (_float, None),
        "record_every": (_float, 0.05),
    },
    "qfunc": {
        "extent": (_extent, "auto"),
        "resolution": (_int, 101),
    },
    "output": {
        "dir": (str, "out"),
        "format": (_choice(("csv",)), "csv"),
    },
}

REQUIRED = (("run", "model"), ("params", "preset"))
_RATE_KEYS = ("kappa", "gamma", "gamma_phi", "temperature")
_RATIO_ONLY = ("g_over_delta", "two_kappa_over_gamma")


@dataclass(frozen=True)
class RunConfig:
    model: str
    preset: str
    transmon_levels: int = 2
    cavity_cutoff: int | str = "auto"
    drive_scale: float | None = None
    drive_GHz: float | None = None
    fpe_convention: str = "printed"
    overrides: tuple = ()  # sorted (key, value) pairs from [params]
    sweep_start: float | None = None
    sweep_stop: float | None = None
    sweep_points: int | None = None
    seed: int = 0
    M: int = 1
    t_max: float = 100.0
    dt: float = 0.002
    scheme: str = "weak2"
    t_burn: float | None = None
    record_every: float = 0.05
    q_extent: float | str = "auto"
    q_resolution: int = 101
    output_dir: str = "out"
    output_format: str = "csv"

    @property
    def params_overrides(self) -> dict:
        return dict(self.overrides)

    @property
    def has_sweep(self) -> bool:
        return self.sweep_points is not None

    def frequencies_GHz(self):
        import numpy as np

        if not self.has_sweep:
            raise ConfigError("[sweep] start, stop and points are required for this command")
        return np.linspace(self.sweep_start, self.sweep_stop, self.sweep_points)

    def replace(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        """Canonical INI text; ``parse_config(cfg.to_text()) == cfg``."""
        sections = {s: {} for s in SCHEMA}
        for (sec, key), attr in _FIELD_MAP.items():
            v = getattr(self, attr)
            if v is not None:
                sections[sec][key] = v
        for k, v in self.overrides:
            sections["params"][k] = v
        lines = []
        for sec, kv in sections.items():
            if not kv:
                continue
            lines.append(f"[{sec}]")
            for k, v in kv.items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_MAP = {
    ("run", "model"): "model",
    ("run", "transmon_levels"): "transmon_levels",
    ("run", "cavity_cutoff"): "cavity_cutoff",
    ("run", "drive_scale"): "drive_scale",
    ("run", "drive_GHz"): "drive_GHz",
    ("run", "fpe_convention"): "fpe_convention",
    ("params", "preset"): "preset",
    ("sweep", "start"): "sweep_start",
    ("sweep", "stop"): "sweep_stop",
    ("sweep", "points"): "sweep_points",
    ("trajectory", "seed"): "seed",
    ("trajectory", "M"): "M",
    ("trajectory", "t_max"): "t_max",
    ("trajectory", "dt"): "dt",
    ("trajectory", "scheme"): "scheme",
    ("trajectory", "t_burn"): "t_burn",
    ("trajectory", "record_every"): "record_every",
    ("qfunc", "extent"): "q_extent",
    ("qfunc", "resolution"): "q_resolution",
    ("output", "dir"): "output_dir",
    ("output", "format"): "output_format",
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    sec = None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            sec = m.group(1).strip()
            if key is None and sec == section:
                return i
            continue
        if key is not None and sec == section:
            m = re.match(r"^([^=:#;]+?)\s*[=:]", s)
            if m and m.group(1) == key:
                return i
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key)
    name = f"{section}.{key}" if key else f"[{section}]"
    return f"{name} (line {line})" if line else name


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration.

    Raises :class:`ConfigError` naming the offending key and line for unknown
    sections/keys, type mismatches and invariant violations.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (M, drive_GHz)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values: dict[tuple[str, str], object] = {}
    errors = []
    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"unknown section {_where(text, sec)}")
            continue
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                errors.append(f"unknown key {_where(text, sec, key)}")
                continue
            conv, _ = SCHEMA[sec][key]
            try:
                values[(sec, key)] = conv(raw.strip())
            except ValueError as exc:
                errors.append(f"bad value for {_where(text, sec, key)}: {raw.strip()!r} ({exc})")
    missing = [f"{s}.{k}" for s, k in REQUIRED if (s, k) not in values]
    if missing and not errors:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    if errors:
        raise ConfigError("; ".join(errors + ([f"missing required keys: {', '.join(missing)}"] if missing else [])))

    kw = {}
    for (sec, key), attr in _FIELD_MAP.items():
        if (sec, key) in values:
            kw[attr] = values[(sec, key)]
    overrides = tuple(sorted((k, values[("params", k)]) for s, k in values
                             if s == "params" and k != "preset"))
    cfg = RunConfig(overrides=overrides, **kw)
    _validate(cfg, text)
    return cfg


def _validate(cfg: RunConfig, text: str) -> None:
    def fail(sec, key, msg):
        raise ConfigError(f"{_where(text, sec, key)}: {msg}")

    if cfg.transmon_levels < 2:
        fail("run", "transmon_levels", "must be >= 2")
    if cfg.model == "jc" and cfg.transmon_levels != 2:
        fail("run", "transmon_levels", "the jc model has exactly 2 levels")
    if cfg.cavity_cutoff != "auto" and cfg.cavity_cutoff < 2:
        fail("run", "cavity_cutoff", "must be >= 2 or 'auto'")
    if cfg.drive_scale is not None and cfg.drive_scale < 0:
        fail("run", "drive_scale", "must be >= 0")
    ov = cfg.params_overrides
    for k in _RATE_KEYS:
        if k in ov and ov[k] < 0:
            fail("params", k, "must be >= 0")
    if cfg.preset != "ratios":
        for k in _RATIO_ONLY:
            if k in ov:
                fail("params", k, "only valid with preset = ratios")
    elif "g_over_delta" in ov and ov["g_over_delta"] <= 0:
        fail("params", "g_over_delta", "must be > 0")
    elif "two_kappa_over_gamma" in ov and ov["two_kappa_over_gamma"] <= 0:
        fail("params", "two_kappa_over_gamma", "must be > 0")
    if "f_q" in ov and "delta" in ov:
        fail("params", "delta", "give f_q or delta, not both")
    if cfg.preset == "none":
        need = [k for k in ("f_c", "g", "kappa", "gamma") if k not in ov]
        if "f_q" not in ov and "delta" not in ov:
            need.append("f_q")
        if need:
            raise ConfigError("preset = none requires params." + ", params.".join(need))
    if cfg.preset in ("D1", "D2", "none") and cfg.drive_scale is None:
        fail("run", "drive_scale", f"required with preset = {cfg.preset}")
    sweep_set = [cfg.sweep_start, cfg.sweep_stop, cfg.sweep_points]
    if any(v is not None for v in sweep_set) and any(v is None for v in sweep_set):
        fail("sweep", None, "start, stop and points must be given together")
    if cfg.sweep_points is not None:
        if cfg.sweep_points < 2:
            fail("sweep", "points", "must be >= 2")
        if cfg.sweep_start == cfg.sweep_stop:
            fail("sweep", "stop", "must differ from start")
    if cfg.M < 1:
        fail("trajectory", "M", "must be >= 1")
    if cfg.t_max <= 0:
        fail("trajectory", "t_max", "must be > 0")
    if cfg.dt <= 0 or cfg.dt > cfg.t_max:
        fail("trajectory", "dt", "must satisfy 0 < dt <= t_max")
    if cfg.record_every <= 0:
        fail("trajectory", "record_every", "must be > 0")
    if cfg.t_burn is not None and not (0 <= cfg.t_burn < cfg.t_max):
        fail("trajectory", "t_burn", "must satisfy 0 <= t_burn < t_max")
    if cfg.seed < 0:
        fail("trajectory", "seed", "must be >= 0")
    if cfg.q_resolution < 32:
        fail("qfunc", "resolution", "must be >= 32")
    if cfg.q_extent != "auto" and cfg.q_extent <= 0:
        fail("qfunc", "extent", "must be > 0")


def resolve_params(cfg: RunConfig, f_d_GHz: float | None = None) -> SystemParams:
    """Preset plus overrides, with ε_d = drive_scale·2κ and ω_d from ``f_d_GHz``/``drive_GHz``."""
    ov = cfg.params_overrides
    f_d = f_d_GHz if f_d_GHz is not None else cfg.drive_GHz
    ghz = TWO_PI * 1e9
    mhz = TWO_PI * 1e6
    if cfg.preset == "ratios":
        kw = {}
        for k in ("g_over_delta", "two_kappa_over_gamma", "f_c", "temperature"):
            if k in ov:
                kw[k] = ov[k]
        if "kappa" in ov:
            kw["kappa"] = ov["kappa"] * mhz
        if "g" in ov:
            kw["g"] = ov["g"] * ghz
        if "gamma_phi" in ov:
            kw["gamma_phi"] = ov["gamma_phi"] * mhz
        p = ratio_params(**kw)
        rest = {k: v for k, v in ov.items() if k in ("f_q", "delta", "chi", "gamma")}
    elif cfg.preset == "none":
        p = SystemParams(omega_c=ov["f_c"] * ghz, omega_q=0.0, g=0.0)
        rest = ov
    else:
        p = device_preset(cfg.preset)
        rest = ov
    changes = {}
    if "f_c" in rest:
        changes["omega_c"] = rest["f_c"] * ghz
    omega_c = changes.get("omega_c", p.omega_c)
    if "f_q" in rest:
        changes["omega_q"] = rest["f_q"] * ghz
    elif "delta" in rest:
        changes["omega_q"] = omega_c - rest["delta"] * ghz
    if "g" in rest:
        changes["g"] = rest["g"] * ghz
    if "chi" in rest:
        changes["chi"] = rest["chi"] * ghz
    for k in ("kappa", "gamma", "gamma_phi"):
        if k in rest:
            changes[k] = rest[k] * mhz
    if "temperature" in rest:
        changes["temperature"] = rest["temperature"]
    p = p.replace(**changes)
    scale = cfg.drive_scale if cfg.drive_scale is not None else (25 / 3 if cfg.preset == "ratios" else 0.0)
    changes = {"eps_d": scale * 2 * p.kappa}
    if f_d is not None:
        changes["omega_d"] = f_d * ghz
    elif cfg.preset != "ratios":
        changes["omega_d"] = p.omega_c
    return p.replace(**changes)
