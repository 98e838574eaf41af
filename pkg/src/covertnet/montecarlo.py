"""Monte-Carlo ground truth for the analytic metrics.

Each trial realizes the interferer PPPs on a disk around a typical node at
the origin (adversary, D2D receiver or cellular user).  Its own link
distance is drawn from the contact distribution instead of being read off
the sampled points.  Random numbers come from a counter-based generator
keyed by ``(seed, trial, stream)``, so every trial is reproducible on its
own and results do not depend on how trials are split across workers.

A scene stores power-independent gains (``sum h r^-alpha`` per tier), so a
power sweep reuses the same realizations: common random numbers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from . import _kernels
from .params import NetworkParams, PowerPair

# stream ids; one independent random stream per (scene, tier)
ADV_D2D, ADV_BS, ADV_LINK = 1, 2, 3
RX_D2D, RX_BS, RX_LINK = 4, 5, 6
CU_BS, CU_D2D, CU_LINK = 7, 8, 9
LAPLACE = 10

_CHUNK = 8192


@dataclass(frozen=True)
class SimConfig:
    """Simulation window, trial count and seed.  ``workers`` never changes results."""

    window_radius: float = 100.0
    n_trials: int = 100_000
    seed: int = 0
    censor_at: float | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.window_radius > 0:
            raise ValueError("window_radius must be > 0")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.censor_at is not None and not self.censor_at > 0:
            raise ValueError("censor_at must be > 0 when set")


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n: int
    rejected: int = 0

    def deviation(self, value: float) -> float:
        """``|value - mean|`` in standard errors; the error is floored at one count, ``1/n``."""
        return abs(value - self.mean) / max(self.std_error, 1.0 / self.n)


def _estimate(samples, rejected=0) -> Estimate:
    n = samples.size
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(np.mean(samples)), se, int(n), int(rejected))


def sample_ppp_disk(density: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP on a disk centred at the origin, as an ``(n, 2)`` array."""
    if density < 0:
        raise ValueError("density must be >= 0")
    n = rng.poisson(density * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * math.pi * rng.random(n)
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


@lru_cache(maxsize=32)
def _count_table(mean: float) -> np.ndarray:
    kmax = int(mean + 14.0 * math.sqrt(mean) + 20.0)
    return np.ascontiguousarray(stats.poisson.cdf(np.arange(kmax), mean))


def _map_chunks(sim: SimConfig, fn):
    starts = list(range(0, sim.n_trials, _CHUNK))
    spans = [(s, min(_CHUNK, sim.n_trials - s)) for s in starts]
    if sim.workers == 1 or len(spans) == 1:
        parts = [fn(s, n) for s, n in spans]
    else:
        with ThreadPoolExecutor(max_workers=sim.workers) as pool:
            parts = list(pool.map(lambda sn: fn(*sn), spans))
    return np.concatenate(parts)


def _tier_gain(sim, stream, density, activation, alpha, excl_sq=None):
    """Per-trial ``sum h r^-alpha`` over one tier, and a mask of saturated draws."""
    mean = density * math.pi * sim.window_radius ** 2
    cdf = _count_table(mean)

    def chunk(start, n):
        excl = None if excl_sq is None else np.ascontiguousarray(excl_sq[start:start + n])
        return _kernels.population_gain(
            sim.seed, start, n, stream, cdf, activation, sim.window_radius, alpha, excl
        )

    gain = _map_chunks(sim, chunk)
    trials = np.arange(sim.n_trials, dtype=np.uint64)
    counts = np.searchsorted(cdf, _kernels.uniforms(sim.seed, trials, stream, 0), side="right")
    return gain, counts >= cdf.size


def _link(sim, stream, counter):
    trials = np.arange(sim.n_trials, dtype=np.uint64)
    return _kernels.uniforms(sim.seed, trials, stream, counter)


@dataclass(frozen=True, eq=False)
class Scene:
    """Power-independent per-trial quantities of one typical-node geometry."""

    g_d: np.ndarray
    g_b: np.ndarray
    link: np.ndarray
    valid: np.ndarray
    serving_sq: np.ndarray | None = None

    @property
    def rejected(self) -> int:
        return int(np.count_nonzero(~self.valid))


@lru_cache(maxsize=8)
def adversary_scene(params: NetworkParams, sim: SimConfig) -> Scene:
    """Nearest adversary at the origin; ``link = h0 * x0**(-alpha/2)``, ``x0`` its squared distance."""
    p = params
    g_d, bad_d = _tier_gain(sim, ADV_D2D, p.lambda_d, p.p_active_d, p.alpha)
    g_b, bad_b = _tier_gain(sim, ADV_BS, p.lambda_b, p.p_active_c, p.alpha)
    x0 = -np.log(_link(sim, ADV_LINK, 0)) / (math.pi * p.lambda_a)
    h0 = -np.log(_link(sim, ADV_LINK, 1))
    return Scene(g_d, g_b, h0 * x0 ** (-0.5 * p.alpha), ~(bad_d | bad_b))


@lru_cache(maxsize=8)
def receiver_scene(params: NetworkParams, sim: SimConfig) -> Scene:
    """D2D receiver at the origin; ``link`` is the fading of its own link."""
    p = params
    g_d, bad_d = _tier_gain(sim, RX_D2D, p.lambda_d, p.p_active_d, p.alpha)
    g_b, bad_b = _tier_gain(sim, RX_BS, p.lambda_b, p.p_active_c, p.alpha)
    h0 = -np.log(_link(sim, RX_LINK, 0))
    return Scene(g_d, g_b, h0, ~(bad_d | bad_b))


@lru_cache(maxsize=8)
def cellular_scene(params: NetworkParams, sim: SimConfig) -> Scene:
    """Typical cellular user; interfering BSs lie outside the serving distance."""
    p = params
    xb = -np.log(_link(sim, CU_LINK, 0)) / (math.pi * p.lambda_b)
    h0 = -np.log(_link(sim, CU_LINK, 1))
    g_b, bad_b = _tier_gain(sim, CU_BS, p.lambda_b, p.p_active_c, p.alpha, excl_sq=xb)
    g_d, bad_d = _tier_gain(sim, CU_D2D, p.lambda_d, p.p_active_d, p.alpha)
    return Scene(g_d, g_b, h0 * xb ** (-0.5 * p.alpha), ~(bad_d | bad_b), serving_sq=xb)


def estimate_fa_md(powers: PowerPair, tau_grid, params: NetworkParams, sim: SimConfig):
    """Empirical false-alarm and miss-detection probabilities, one ``(fa, md)`` pair per threshold."""
    taus = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    if taus.size == 0:
        raise ValueError("tau_grid must be nonempty")
    sc = adversary_scene(params, sim)
    interf = (powers.pd * sc.g_d + powers.pc * sc.g_b)[sc.valid]
    total = interf + powers.pd * sc.link[sc.valid]
    out = []
    for tau in taus:
        width = tau - params.noise_a
        if width <= 0:
            n = interf.size
            out.append((Estimate(1.0, 0.0, n, sc.rejected), Estimate(0.0, 0.0, n, sc.rejected)))
            continue
        fa = _estimate((interf > width).astype(float), sc.rejected)
        md = _estimate((total <= width).astype(float), sc.rejected)
        out.append((fa, md))
    return out


def estimate_d2d_success(powers: PowerPair, params: NetworkParams, sim: SimConfig) -> Estimate:
    """Fraction of trials with D2D receiver SINR above ``theta_d``."""
    p = params
    sc = receiver_scene(params, sim)
    v = sc.valid
    signal = powers.pd * sc.link[v] * p.link_dist ** (-p.alpha)
    noise = powers.pd * sc.g_d[v] + powers.pc * sc.g_b[v] + p.noise_rx
    return _estimate((signal > p.theta_d * noise).astype(float), sc.rejected)


def _cellular_sinr(powers, params, sim, include_d2d):
    sc = cellular_scene(params, sim)
    v = sc.valid
    interf = powers.pc * sc.g_b[v] + params.noise_u
    if include_d2d:
        interf = interf + powers.pd * sc.g_d[v]
    return powers.pc * sc.link[v] / interf, sc.rejected


def estimate_cu_success(powers: PowerPair, theta_c, params: NetworkParams, sim: SimConfig, include_d2d=True):
    """Fraction of trials with cellular-user SINR above ``theta_c``."""
    sinr, rej = _cellular_sinr(powers, params, sim, include_d2d)
    return _estimate((sinr > theta_c).astype(float), rej)


def estimate_ergodic_rate(powers: PowerPair, params: NetworkParams, sim: SimConfig, include_d2d=True) -> Estimate:
    """Mean instantaneous rate ``log2(1 + SINR_u)`` in bits per channel use."""
    sinr, rej = _cellular_sinr(powers, params, sim, include_d2d)
    return _estimate(np.log2(1.0 + sinr), rej)


def estimate_mean_interference(powers: PowerPair, params: NetworkParams, sim: SimConfig) -> Estimate:
    """Censored mean ``E[min(I, censor_at)]`` of the D2D interference at a cellular user."""
    if sim.censor_at is None:
        raise ValueError("estimate_mean_interference needs sim.censor_at (the untruncated mean is infinite)")
    sc = cellular_scene(params, sim)
    return _estimate(np.minimum(powers.pd * sc.g_d[sc.valid], sim.censor_at), sc.rejected)


def estimate_laplace(s, density, activation, power, alpha, sim: SimConfig) -> Estimate:
    """Empirical ``E[exp(-s I)]`` for one thinned PPP of transmitters at ``power``."""
    g, bad = _tier_gain(sim, LAPLACE, density, activation, alpha)
    return _estimate(np.exp(-s * power * g[~bad]), int(np.count_nonzero(bad)))
