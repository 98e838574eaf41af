"""Network parameters, power pairs and unit conversions.

Everything inside the package works in linear units (watts, linear SINR
ratios, dimensionless distances).  Decibel quantities only appear at the
configuration boundary, see :mod:`covertnet.config`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

_REFERENCES = {"dbm": 1e-3, "dbw": 1.0, "db": 1.0}


class ParameterError(ValueError):
    """Raised when a parameter set violates one or more invariants.

    ``errors`` holds one message per violated invariant.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _reference(reference: str) -> float:
    try:
        return _REFERENCES[reference.lower()]
    except KeyError:
        raise ValueError(f"unknown decibel reference {reference!r}; use dBm, dBW or dB") from None


def db_to_linear(value, reference: str = "dB"):
    """Convert a decibel quantity to watts (dBm, dBW) or a linear ratio (dB)."""
    scale = _reference(reference)
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"decibel value must be finite, got {value!r}")
    out = scale * 10.0 ** (arr / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(value, reference: str = "dB"):
    """Inverse of :func:`db_to_linear`.  ``value`` must be strictly positive."""
    scale = _reference(reference)
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError(f"linear value must be finite and positive, got {value!r}")
    out = 10.0 * np.log10(arr / scale)
    return float(out) if out.ndim == 0 else out


def sinc(x):
    """Normalized sinc, ``sin(pi x) / (pi x)``, defined here on the open interval (0, 1).

    With this convention ``2 * sinc(2/alpha) * int_0^inf r / (1 + r^alpha) dr == 1``,
    which is what turns the PPP Laplace functional into the closed forms used
    by :mod:`covertnet.analytic`.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ValueError(f"sinc argument must lie in (0, 1), got {x!r}")
    out = np.sin(np.pi * arr) / (np.pi * arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NetworkParams:
    """Densities, access probabilities, channel and economic parameters.

    Defaults reproduce the reference parameter table: densities of D2D
    transmitters, base stations, cellular users and adversaries; ALOHA
    activation probabilities; path-loss exponent; noise powers (-90 dBm);
    the D2D SINR threshold (-10 dB); covertness and QoS tolerances; reward
    and price weights; and the power boxes ``[0, 20] dBm`` for D2D and
    ``[-10, 10] dBW`` for cellular transmission.  All powers are in watts.
    """

    lambda_d: float = 0.1
    lambda_b: float = 0.01
    lambda_u: float = 0.1
    lambda_a: float = 0.01
    p_active_d: float = 0.3
    p_active_c: float = 0.7
    alpha: float = 4.0
    link_dist: float = 1.0
    noise_rx: float = 1e-12
    noise_u: float = 1e-12
    noise_a: float = 1e-12
    theta_d: float = 0.1
    eps_covert: float = 0.01
    eps_qos: float = 0.05
    phi_d: float = 10.0
    phi_c: float = 0.05
    pd_min: float = 1e-3
    pd_max: float = 0.1
    pc_min: float = 0.1
    pc_max: float = 10.0

    @property
    def delta(self) -> float:
        """Stability index ``2 / alpha`` of the aggregate interference."""
        return 2.0 / self.alpha

    def replace(self, **changes) -> "NetworkParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class PowerPair:
    """Leader decision: D2D power ``pd`` and cellular power ``pc`` in watts."""

    pd: float
    pc: float

    def __post_init__(self):
        for name in ("pd", "pc"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a finite positive power in watts, got {v!r}")

    def in_box(self, params: NetworkParams, rtol: float = 1e-12) -> bool:
        lo_d, hi_d = params.pd_min * (1 - rtol), params.pd_max * (1 + rtol)
        lo_c, hi_c = params.pc_min * (1 - rtol), params.pc_max * (1 + rtol)
        return lo_d <= self.pd <= hi_d and lo_c <= self.pc <= hi_c

    @classmethod
    def from_dbm(cls, pd_dbm: float, pc_dbm: float) -> "PowerPair":
        return cls(db_to_linear(pd_dbm, "dBm"), db_to_linear(pc_dbm, "dBm"))


def check(params: NetworkParams, allow_no_d2d: bool = False) -> list[str]:
    """Return one message per violated invariant (empty when valid).

    ``allow_no_d2d`` admits ``lambda_d = 0``, the degenerate network used
    as a sanity check where every with/without-D2D pair must coincide.
    """
    errors = []
    p = params
    for name in NetworkParams.field_names():
        v = getattr(p, name)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            errors.append(f"{name} must be a finite number, got {v!r}")
    if errors:
        return errors
    for name in ("lambda_d", "lambda_b", "lambda_u", "lambda_a"):
        v = getattr(p, name)
        if v < 0 or (v == 0 and not (allow_no_d2d and name == "lambda_d")):
            errors.append(f"{name} must be > 0 (got {v})")
    for name in ("p_active_d", "p_active_c"):
        v = getattr(p, name)
        if not 0 < v <= 1:
            errors.append(f"{name} must lie in (0, 1] (got {v})")
    if p.alpha <= 2:
        errors.append(f"alpha must exceed 2 (got {p.alpha})")
    if p.link_dist <= 0:
        errors.append(f"link_dist must be > 0 (got {p.link_dist})")
    for name in ("noise_rx", "noise_u", "noise_a"):
        if getattr(p, name) < 0:
            errors.append(f"{name} must be >= 0 (got {getattr(p, name)})")
    if p.theta_d <= 0:
        errors.append(f"theta_d must be > 0 (got {p.theta_d})")
    for name in ("eps_covert", "eps_qos"):
        v = getattr(p, name)
        if not 0 < v < 1:
            errors.append(f"{name} must lie in (0, 1) (got {v})")
    for name in ("phi_d", "phi_c"):
        if getattr(p, name) < 0:
            errors.append(f"{name} must be >= 0 (got {getattr(p, name)})")
    for name in ("pd_min", "pd_max", "pc_min", "pc_max"):
        if getattr(p, name) <= 0:
            errors.append(f"{name} must be > 0 watts (got {getattr(p, name)})")
    if p.pd_min > p.pd_max:
        errors.append(f"empty power box: pd_min ({p.pd_min}) > pd_max ({p.pd_max})")
    if p.pc_min > p.pc_max:
        errors.append(f"empty power box: pc_min ({p.pc_min}) > pc_max ({p.pc_max})")
    if p.lambda_u < p.lambda_b:
        errors.append(f"lambda_u must be >= lambda_b (got {p.lambda_u} < {p.lambda_b})")
    return errors


def validate(params: NetworkParams, allow_no_d2d: bool = False) -> NetworkParams:
    """Return ``params`` unchanged when valid; raise :class:`ParameterError` otherwise."""
    errors = check(params, allow_no_d2d)
    if errors:
        raise ParameterError(errors)
    if params.lambda_u < 10 * params.lambda_b:
        warnings.warn(
            f"lambda_u = {params.lambda_u} is less than 10x lambda_b = {params.lambda_b}; "
            "the typical-user model assumes many users per cell",
            stacklevel=2,
        )
    return params
