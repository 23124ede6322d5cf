"""Experiment configuration: an INI-style ``key = value`` file.

Sections: ``[run]`` (experiment, seed, numerics), ``[triplet]`` (the Lévy
process xi driving X) and ``[params]`` (experiment-specific settings).
Lists are comma separated.  Only ``seed`` is mandatory; every other key
has a default listed in ``RUN_DEFAULTS``/``TRIPLET_DEFAULTS``/``PARAM_DEFAULTS``.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import re
from dataclasses import dataclass, field

from .. import levy
from ..levy import LevyTriplet

EXPERIMENTS = ("simulate", "tail", "entrance-check", "reversal-check", "decomposition",
               "integral-test", "lil", "report")

RUN_DEFAULTS = {
    "experiment": "simulate",
    "alpha": 1.0,
    "step": 1e-3,
    "horizon": 10.0,
    "n_paths": 1000,
    "tol": 1e-4,
}

# Default triplet: squared Bessel process of dimension 6 (xi = 2B + 4t).
TRIPLET_DEFAULTS = {
    "drift": 4.0,
    "gaussian_var": 4.0,
    "kill_rate": 0.0,
    "jumps": "none",
    "rate": 1.0,
    "law": "exponential",
    "law_rate": 1.0,
    "up_rate": 1.0,
    "down_rate": 1.0,
    "p_up": 0.5,
    "atom": 1.0,
    "beta": 0.5,
    "theta": 1.0,
    "scale": 1.0,
}

PARAM_DEFAULTS = {
    "x": 1.0,
    "x1": 1.0,
    "t": 1.0,
    "k": 2.0,
    "x_small": 1e-3,
    "depth": 0.0,          # 0 means 20 / E(xi_1)
    "levels": [0.5, 0.25, 0.125, 0.0625, 0.03125],
    "z_fraction": 0.9,     # lower-bound z_n = x_{n+1} + fraction (x_n - x_{n+1})
    "thresholds": [],
    "qs": [1.0, 2.0, 4.0],
    "oracle": "auto",
    "tail": "regular",
    "gamma": 2.0,
    "lam": 1.0,
    "tail_beta": 0.5,
    "c": 1.0,
    "a": 1.0,
    "b": -0.6,
    "d": 0.0,
    "side": "zero",
    "expect": "",
    "window_lo": 1e-6,
    "window_hi": 1e-1,
    "grid_ratio": 1.1,
    "band_lo": 0.5,
    "band_hi": 2.0,
    "alpha_level": 0.01,
}

_INT_KEYS = {"n_paths"}
_POSITIVE = {"alpha", "step", "horizon", "n_paths", "tol", "x", "x1", "t", "k", "x_small",
             "rate", "law_rate", "up_rate", "down_rate", "scale", "grid_ratio",
             "window_lo", "window_hi"}
_SEED_MAX = 2 ** 64 - 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int
    experiment: str = "simulate"
    alpha: float = 1.0
    step: float = 1e-3
    horizon: float = 10.0
    n_paths: int = 1000
    tol: float = 1e-4
    triplet: dict = field(default_factory=lambda: dict(TRIPLET_DEFAULTS))
    params: dict = field(default_factory=lambda: dict(PARAM_DEFAULTS))

    def fingerprint(self) -> str:
        return hashlib.sha256(emit_config(self).encode()).hexdigest()[:16]

    def levy_triplet(self) -> LevyTriplet:
        return build_triplet(self.triplet)


def build_triplet(spec: dict) -> LevyTriplet:
    kind = spec["jumps"]
    if kind == "none":
        jumps = None
    elif kind == "compound-poisson":
        law = {
            "exponential": lambda: levy.Exponential(spec["law_rate"]),
            "neg-exponential": lambda: levy.NegExponential(spec["law_rate"]),
            "point-mass": lambda: levy.PointMass(spec["atom"]),
            "two-sided-exponential": lambda: levy.TwoSidedExponential(
                spec["up_rate"], spec["down_rate"], spec["p_up"]),
        }.get(spec["law"])
        if law is None:
            raise ConfigError(f"unknown jump law {spec['law']!r}")
        jumps = levy.CompoundPoisson(spec["rate"], law())
    elif kind == "tempered-stable":
        jumps = levy.TemperedStable(spec["beta"], spec["theta"], spec["scale"])
    elif kind == "negated-tempered-stable":
        jumps = levy.NegatedTemperedStable(spec["beta"], spec["theta"], spec["scale"])
    else:
        raise ConfigError(f"unknown jump kind {kind!r}")
    return LevyTriplet(spec["drift"], spec["gaussian_var"], jumps, spec["kill_rate"])


def _key_lines(text: str) -> dict:
    """(section, key) -> line number, for error messages."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
        elif s and not s.startswith(("#", ";")) and "=" in s:
            where.setdefault((section, s.split("=", 1)[0].strip().lower()), no)
    return where


def _coerce(key: str, raw: str, default, line: int):
    try:
        if isinstance(default, list):
            return [float(v) for v in raw.split(",") if v.strip()]
        if key in _INT_KEYS or key == "seed":
            val = int(raw)
        elif isinstance(default, float):
            val = float(raw)
        else:
            return raw.strip()
    except ValueError:
        raise ConfigError(f"line {line}: cannot parse {key} = {raw!r}") from None
    if key in _POSITIVE and not val > 0:
        raise ConfigError(f"line {line}: {key} must be > 0, got {raw}")
    return val


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(strict=True, interpolation=None)
    try:
        cp.read_string(text)
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"line {exc.lineno}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    lines = _key_lines(text)
    known = {"run": dict(RUN_DEFAULTS, seed=0), "triplet": TRIPLET_DEFAULTS,
             "params": PARAM_DEFAULTS}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"line {lines.get((section, None), '?')}: unknown section [{section}]")
        for key in cp[section]:
            if key not in known[section]:
                raise ConfigError(f"line {lines.get((section, key), '?')}: "
                                  f"unknown key {key!r} in [{section}]")
    if not cp.has_option("run", "seed"):
        raise ConfigError("missing mandatory key 'seed' in [run]")
    vals = {}
    for section, defaults in known.items():
        out = {}
        for key, default in defaults.items():
            if cp.has_option(section, key):
                out[key] = _coerce(key, cp[section][key], default, lines.get((section, key), 0))
            else:
                out[key] = list(default) if isinstance(default, list) else default
        vals[section] = out
    run = vals["run"]
    if not 0 <= run["seed"] <= _SEED_MAX:
        raise ConfigError(f"line {lines.get(('run', 'seed'))}: seed must fit in 64 bits")
    if run["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"line {lines.get(('run', 'experiment'))}: unknown experiment "
                          f"{run['experiment']!r}")
    cfg = ExperimentConfig(triplet=vals["triplet"], params=vals["params"], **run)
    try:
        cfg.levy_triplet()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [triplet]: {exc}") from None
    return cfg


def _fmt(v) -> str:
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config(emit_config(c)) reproduces c."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {"experiment": cfg.experiment, "seed": str(cfg.seed),
                 "alpha": _fmt(cfg.alpha), "step": _fmt(cfg.step),
                 "horizon": _fmt(cfg.horizon), "n_paths": str(cfg.n_paths),
                 "tol": _fmt(cfg.tol)}
    cp["triplet"] = {k: _fmt(v) for k, v in cfg.triplet.items()}
    cp["params"] = {k: _fmt(v) for k, v in cfg.params.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
