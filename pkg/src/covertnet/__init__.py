"""Covert D2D underlay networks: stochastic-geometry metrics, Monte-Carlo
checks and the Stackelberg power game against a warden."""
from __future__ import annotations

__version__ = "0.1.0"

from . import analytic, game, montecarlo  # noqa: E402
from ._kernels import BACKEND  # noqa: E402
from .params import NetworkParams, ParameterError, PowerPair  # noqa: E402

__all__ = [
    "BACKEND",
    "NetworkParams",
    "ParameterError",
    "PowerPair",
    "__version__",
    "analytic",
    "game",
    "montecarlo",
]
