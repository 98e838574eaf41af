"""Flat ``key = value`` run configuration.

Power and noise keys carry a unit suffix (``_dbm``, ``_dbw``, ``_watt``),
SINR thresholds take ``_db`` or ``_linear``.  Keys of the simulator, the SCA
solver, the sweep and validation live under ``sim.``, ``sca.``, ``sweep.`` and
``validate.``.  Anything else is an error, as is giving one quantity twice
with different suffixes.  ``#`` starts a comment.

Example::

    pd_dbm = 15
    pc_dbm = 20
    noise_a_dbm = -90
    theta_d_db = -10
    sim.n_trials = 100000
    sweep.variable = pd_dbm
    sweep.start = 0
    sweep.stop = 20
    sweep.count = 11
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .game import SCAOptions
from .montecarlo import SimConfig
from .params import NetworkParams, PowerPair, db_to_linear, linear_to_db, validate

POWER_SUFFIXES = {"_dbm": "dBm", "_dbw": "dBW", "_watt": None}
RATIO_SUFFIXES = {"_db": "dB", "_linear": None}

# quantities that need a unit suffix, with their defaults in linear units
_PARAM_POWERS = ("noise_rx", "noise_u", "noise_a", "pd_min", "pd_max", "pc_min", "pc_max")
_PARAM_RATIOS = ("theta_d",)
_PARAM_PLAIN = tuple(
    n for n in NetworkParams.field_names() if n not in _PARAM_POWERS + _PARAM_RATIOS
)
_RUN_POWERS = ("pd", "pc", "t_max", "sim.censor_at", "sca.start_pd", "sca.start_pc")
_RUN_RATIOS = ("theta_c",)

_INT_KEYS = {
    "seed", "sim.n_trials", "sim.workers", "sca.max_iters", "sca.n_majorize", "sca.grid",
    "sweep.count", "sweep.workers", "validate.points", "detect.points", "sim.tau_points",
}
_FLOAT_KEYS = {
    "sim.window_radius", "sca.gamma", "sca.delta", "sca.tol", "sca.fd_step", "sca.feas_tol",
    "sca.majorize_radius", "sweep.start", "sweep.stop", "validate.iota_scale",
    "validate.max_se", "validate.pc_dbm",
}
_STR_KEYS = {"sweep.variable", "sweep.values", "sweep.spacing", "sweep.mode", "sweep.series"}

SWEEP_MODES = ("equilibrium", "evaluate", "cover")
SPACINGS = ("linear", "log", "db")


class ConfigError(ValueError):
    pass


def _split_suffix(key, suffixes):
    for suf in suffixes:
        if key.endswith(suf):
            return key[: -len(suf)], suf
    return None, None


def canonical_key(key: str):
    """``(base, kind, suffix)`` for a raw key; kind is power, ratio, param or option."""
    base, suf = _split_suffix(key, POWER_SUFFIXES)
    if base in _PARAM_POWERS or base in _RUN_POWERS:
        return base, "power", suf
    base, suf = _split_suffix(key, RATIO_SUFFIXES)
    if base in _PARAM_RATIOS or base in _RUN_RATIOS:
        return base, "ratio", suf
    if key in _PARAM_PLAIN:
        return key, "param", None
    if key in _INT_KEYS or key in _FLOAT_KEYS or key in _STR_KEYS:
        return key, "option", None
    if key in _PARAM_POWERS or key in _RUN_POWERS or key in _PARAM_RATIOS or key in _RUN_RATIOS:
        raise ConfigError(f"key {key!r} needs a unit suffix")
    raise ConfigError(f"unknown config key {key!r}")


def _to_linear(value: float, kind: str, suffix: str) -> float:
    ref = (POWER_SUFFIXES if kind == "power" else RATIO_SUFFIXES)[suffix]
    return value if ref is None else db_to_linear(value, ref)


def parse_lines(lines, source="<config>"):
    """Raw ``{key: value-string}`` from config lines, with line-numbered errors."""
    out = {}
    for n, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, str(path))


def _number(key, text, integer=False):
    try:
        v = int(text) if integer else float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {'an integer' if integer else 'a number'}, got {text!r}") from None
    if not integer and not math.isfinite(v):
        raise ConfigError(f"{key}: value must be finite, got {text!r}")
    return v


def resolve(raw: dict) -> dict:
    """Convert raw strings to canonical linear-unit values keyed by base name."""
    out = {}
    seen = {}
    for key, text in raw.items():
        base, kind, suffix = canonical_key(key)
        if base in seen:
            raise ConfigError(f"{key!r} and {seen[base]!r} set the same quantity")
        seen[base] = key
        if kind in ("power", "ratio"):
            try:
                out[base] = _to_linear(_number(key, text), kind, suffix)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        elif kind == "param":
            out[base] = _number(key, text)
        elif key in _INT_KEYS:
            out[base] = _number(key, text, integer=True)
        elif key in _FLOAT_KEYS:
            out[base] = _number(key, text)
        else:
            out[base] = text
    return out


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple
    mode: str = "equilibrium"
    series: tuple = ((),)

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep has no values")
        v = np.asarray(self.values, dtype=float)
        d = np.diff(v)
        if v.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError("sweep values must be strictly monotone")
        if self.mode not in SWEEP_MODES:
            raise ConfigError(f"sweep.mode must be one of {SWEEP_MODES}, got {self.mode!r}")


def sweep_values(start, stop, count, spacing, db_valued=False):
    """``count`` points from ``start`` to ``stop``.

    ``db`` spacing is uniform in decibels: plain linear steps when the
    variable is already in dB (``_dbm``, ``_dbw``, ``_db`` keys), otherwise
    geometric steps like ``log``.
    """
    if count < 1:
        raise ConfigError("sweep.count must be >= 1")
    if spacing not in SPACINGS:
        raise ConfigError(f"sweep.spacing must be one of {SPACINGS}, got {spacing!r}")
    if spacing == "linear" or (spacing == "db" and db_valued):
        return tuple(float(x) for x in np.linspace(start, stop, count))
    if start <= 0 or stop <= 0:
        raise ConfigError(f"{spacing} spacing needs positive end points")
    return tuple(float(x) for x in np.geomspace(start, stop, count))


def _parse_series(text):
    # "eps_covert=0.01, eps_qos=0.05; eps_covert=0.02" -> one tuple of overrides per series
    series = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        items = []
        for item in chunk.split(","):
            if "=" not in item:
                raise ConfigError(f"sweep.series: expected key=value, got {item.strip()!r}")
            k, v = (s.strip() for s in item.split("=", 1))
            canonical_key(k)
            items.append((k, v))
        series.append(tuple(items))
    return tuple(series) or ((),)


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    values: dict
    params: NetworkParams
    powers: PowerPair | None
    theta_c: float
    t_max: float
    sim: SimConfig
    sca: SCAOptions
    sweep: SweepSpec | None
    options: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        """Resolved configuration in linear units; enough to reproduce the run."""
        snap = {"params": self.params.as_dict()}
        snap["powers"] = None if self.powers is None else {"pd": self.powers.pd, "pc": self.powers.pc}
        snap["theta_c"] = self.theta_c
        snap["t_max"] = self.t_max
        snap["sim"] = {k: getattr(self.sim, k) for k in ("window_radius", "n_trials", "seed", "censor_at")}
        snap["sca"] = {k: getattr(self.sca, k) for k in SCAOptions.__dataclass_fields__}
        snap["sweep"] = None if self.sweep is None else {
            "variable": self.sweep.variable,
            "values": list(self.sweep.values),
            "mode": self.sweep.mode,
            "series": [list(map(list, s)) for s in self.sweep.series],
        }
        snap["options"] = dict(sorted(self.options.items()))
        return snap

    def digest(self) -> str:
        text = json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, items) -> "RunConfig":
        raw = dict(self.raw)
        for k, v in items:
            base = canonical_key(k)[0]
            for old in [o for o in raw if canonical_key(o)[0] == base]:
                del raw[old]
            raw[k] = v
        return build(raw, seed=self.sim.seed, workers=self.sim.workers,
                     allow_no_d2d=self.params.lambda_d == 0)


def build(raw: dict, seed: int | None = None, workers: int | None = None, allow_no_d2d: bool = False) -> RunConfig:
    """Turn raw key/value strings into a validated :class:`RunConfig`."""
    vals = resolve(raw)
    if seed is not None:
        vals["seed"] = seed
    pkw = {k: vals[k] for k in NetworkParams.field_names() if k in vals}
    params = validate(NetworkParams(**pkw), allow_no_d2d)

    powers = None
    if "pd" in vals or "pc" in vals:
        if not ("pd" in vals and "pc" in vals):
            missing = "pc" if "pd" in vals else "pd"
            raise ConfigError(f"missing required key {missing}_dbm (or {missing}_dbw / {missing}_watt)")
        try:
            powers = PowerPair(vals["pd"], vals["pc"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    t_max = vals.get("t_max", 1e6 * params.noise_u)
    if not t_max > 0:
        raise ConfigError("t_max must be > 0")
    theta_c = vals.get("theta_c", 1.0)
    if not theta_c > 0:
        raise ConfigError("theta_c must be > 0")
    try:
        sim = SimConfig(
            window_radius=vals.get("sim.window_radius", 100.0),
            n_trials=vals.get("sim.n_trials", 100_000),
            seed=vals.get("seed", 0),
            censor_at=vals.get("sim.censor_at", t_max),
            workers=workers if workers is not None else vals.get("sim.workers", 1),
        )
        sca = SCAOptions(
            gamma=vals.get("sca.gamma", 0.5),
            delta=vals.get("sca.delta", 1.0),
            tol=vals.get("sca.tol", 1e-4),
            max_iters=vals.get("sca.max_iters", 100),
            fd_step=vals.get("sca.fd_step", 1e-3),
            t_max=t_max,
            n_majorize=vals.get("sca.n_majorize", 16),
            majorize_radius=vals.get("sca.majorize_radius", 0.1),
            feas_tol=vals.get("sca.feas_tol", 1e-3),
            grid=vals.get("sca.grid", 64),
            seed=vals.get("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sweep = None
    if "sweep.variable" in vals:
        var = vals["sweep.variable"]
        canonical_key(var)
        if "sweep.values" in vals:
            try:
                values = tuple(float(x) for x in vals["sweep.values"].split(","))
            except ValueError:
                raise ConfigError(f"sweep.values: expected comma-separated numbers, got {vals['sweep.values']!r}") from None
        else:
            need = [k for k in ("sweep.start", "sweep.stop", "sweep.count") if k not in vals]
            if need:
                raise ConfigError(f"sweep needs sweep.values or {', '.join(need)}")
            values = sweep_values(vals["sweep.start"], vals["sweep.stop"], vals["sweep.count"],
                                  vals.get("sweep.spacing", "linear"), var.endswith(("_dbm", "_dbw", "_db")))
        sweep = SweepSpec(var, values, vals.get("sweep.mode", "equilibrium"),
                          _parse_series(vals.get("sweep.series", "")))

    options = {k: v for k, v in vals.items() if k.startswith(("validate.", "detect.", "sim.tau_points", "sca.start"))}
    return RunConfig(raw=dict(raw), values=vals, params=params, powers=powers, theta_c=theta_c,
                     t_max=t_max, sim=sim, sca=sca, sweep=sweep, options=options)


def dbm(watts: float) -> float:
    return float(linear_to_db(watts, "dBm"))
