"""Analytic performance metrics of the covert D2D underlay.

Every metric is a one- or two-dimensional integral.  They are evaluated with
fixed composite Gauss-Legendre rules (no adaptive refinement), so each metric
is a smooth, deterministic function of the powers; the game solver relies on
that for its finite-difference gradients.  At ``alpha == 4`` the interference
law is the one-sided Levy distribution and closed forms replace quadrature.

Notation: ``a = 2/alpha`` is the stability index, ``p = alpha/2 = 1/a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, special
from scipy.interpolate import CubicSpline

from . import _kernels
from .params import NetworkParams, PowerPair, sinc

OSC_ORDER = 16
_KANTER_ORDER = 16


@dataclass(frozen=True)
class QuadratureSettings:
    """Knobs of the fixed composite rules.

    ``panels`` x ``order`` nodes are used per log-spaced half-line integral;
    ``log_span`` e-folds below the upper limit are covered, which follows
    from ``abs_tol`` unless given.  ``tail_cutoff`` is the integrand level at
    which the semi-infinite rate integral is cut.  :meth:`refined` halves
    the tolerances and doubles the panel count, which is how convergence is
    checked.
    """

    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 2000
    tail_cutoff: float = 1e-8
    panels: int = 60
    order: int = 8

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.tail_cutoff > 0):
            raise ValueError("quadrature tolerances must be > 0")
        if self.max_subdivisions < 1 or self.panels < 1 or self.order < 1:
            raise ValueError("max_subdivisions, panels and order must be >= 1")
        if self.panels > self.max_subdivisions:
            raise ValueError(f"panels ({self.panels}) exceeds max_subdivisions ({self.max_subdivisions})")

    @property
    def log_span(self) -> float:
        return 3.0 * math.log(1.0 / self.abs_tol)

    def refined(self) -> "QuadratureSettings":
        return replace(
            self,
            abs_tol=self.abs_tol / 2,
            rel_tol=self.rel_tol / 2,
            tail_cutoff=self.tail_cutoff / 2,
            panels=min(2 * self.panels, self.max_subdivisions),
        )


DEFAULT_QUADRATURE = QuadratureSettings()


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def composite_rule(edges, order):
    """Nodes and weights of Gauss-Legendre ``order`` on each panel of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    width = np.diff(edges)
    nodes = edges[:-1, None] + width[:, None] * x[None, :]
    return nodes.ravel(), (width[:, None] * w[None, :]).ravel()


@lru_cache(maxsize=None)
def _log_rule(span: float, panels: int, order: int):
    # offsets l in [-span, 0] for integrals over t = T * exp(l)
    return composite_rule(np.linspace(-span, 0.0, panels + 1), order)


# ---------------------------------------------------------------------------
# stable interference law


@dataclass(frozen=True)
class StableScale:
    """Scale ``iota`` of a one-sided stable law with Laplace transform ``exp(-iota s^(2/alpha))``."""

    iota: float
    alpha: float

    def __post_init__(self):
        if not (self.iota >= 0 and math.isfinite(self.iota)):
            raise ValueError(f"iota must be finite and >= 0, got {self.iota!r}")
        if not self.alpha > 2:
            raise ValueError(f"alpha must exceed 2, got {self.alpha!r}")

    @property
    def median_scale(self) -> float:
        """``iota**(alpha/2)``: the natural scale of the interference in watts."""
        return self.iota ** (0.5 * self.alpha)


def population_scale(density, activation, power, alpha) -> float:
    """``iota`` contributed by one thinned PPP of transmitters at ``power``."""
    a = 2.0 / alpha
    return math.pi * density * activation * power ** a / sinc(a)


def adversary_scale(powers: PowerPair, params: NetworkParams) -> StableScale:
    """Aggregate D2D plus cellular interference seen by the adversary."""
    p = params
    iota = population_scale(p.lambda_b, p.p_active_c, powers.pc, p.alpha) + population_scale(
        p.lambda_d, p.p_active_d, powers.pd, p.alpha
    )
    return StableScale(iota, p.alpha)


def cu_d2d_scale(pd: float, params: NetworkParams) -> StableScale:
    """D2D interference seen by a cellular user (positive magnitude)."""
    p = params
    return StableScale(population_scale(p.lambda_d, p.p_active_d, pd, p.alpha), p.alpha)


def interference_laplace(s, density, activation, power, alpha):
    """Laplace transform ``E[exp(-s I)]`` of the interference from a thinned PPP."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("Laplace argument must be >= 0")
    a = 2.0 / alpha
    out = np.exp(-math.pi * density * activation * (s * power) ** a / sinc(a))
    out = np.where(s == 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def _levy_cdf(t, iota):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        arg = iota / (2.0 * np.sqrt(t))
    return np.where(t > 0, special.erfc(arg), 0.0)


def _oscillatory_tail(z, alpha):
    """``P(I > z)`` for the standardized law (iota = 1) via the oscillatory integral; NaN if unsafe."""
    a = 2.0 / alpha
    s = math.sin(math.pi * a)
    kappa = np.asarray(z, dtype=float) * s ** (-0.5 * alpha)
    x, w = np.polynomial.legendre.leggauss(OSC_ORDER)
    return _kernels.stable_tail_integral(kappa, alpha, x, w)


def _kanter_cdf(z, alpha):
    """Standardized CDF from the Kanter/Zolotarev representation, a positive integrand on (0, pi)."""
    a = 2.0 / alpha
    z = np.atleast_1d(np.asarray(z, dtype=float))
    # panels crowd toward both ends: the mass sits near phi = 0 for small z,
    # and the cutoff near phi = pi becomes abrupt for large z
    left = np.geomspace(2.0 ** -40, 0.5, 61)
    edges = math.pi * np.concatenate(([0.0], left, 1.0 - left[-2::-1], [1.0]))
    phi, w = composite_rule(edges, _KANTER_ORDER)
    amp = (np.sin(a * phi) / np.sin(phi)) ** (1.0 / (1.0 - a)) * np.sin((1.0 - a) * phi) / np.sin(a * phi)
    out = np.zeros(z.shape)
    pos = z > 0
    xi = z[pos] ** (-a / (1.0 - a))
    out[pos] = np.exp(-xi[:, None] * amp[None, :]) @ w / math.pi
    return out


def _standard_cdf(z, alpha, method):
    z = np.asarray(z, dtype=float)
    if method == "closed":
        if alpha != 4.0:
            raise ValueError("closed-form CDF exists only for alpha = 4")
        return _levy_cdf(z, 1.0)
    if method == "kanter":
        return _kanter_cdf(z.ravel(), alpha).reshape(z.shape)
    if method == "oscillatory":
        flat = z.ravel()
        out = np.zeros(flat.shape)
        pos = flat > 0
        out[pos] = 1.0 - _oscillatory_tail(flat[pos], alpha)
        bad = np.isnan(out)
        if bad.any():
            out[bad] = _kanter_cdf(flat[bad], alpha)
        return np.clip(out, 0.0, 1.0).reshape(z.shape)
    if method == "table":
        return _stable_table(alpha)(z)
    raise ValueError(f"unknown CDF method {method!r}")


class _StableTable:
    """Cubic-spline table of the standardized CDF in ``ln z``.

    The lower part interpolates ``ln F`` and the upper part ``ln(1 - F)``,
    so both tails keep relative accuracy.  Beyond the upper end the
    power-law tail ``z**-a / Gamma(1 - a)`` takes over.
    """

    def __init__(self, alpha, hi=45.0, step=0.05):
        self.alpha = alpha
        a = 2.0 / alpha
        # low enough that F has underflowed: F ~ exp(-C z^(-a/(1-a)))
        lo = min(-15.0, -(math.log(700.0) + 2.0) * (1.0 - a) / a - 2.0)
        lz = np.arange(lo, hi + step / 2, step)
        z = np.exp(lz)
        tail = _oscillatory_tail(z, alpha)
        cdf = np.where(np.isnan(tail), np.nan, 1.0 - tail)
        bad = np.isnan(cdf) | (cdf < 0.5)
        cdf[bad] = _kanter_cdf(z[bad], alpha)
        tail[bad] = 1.0 - cdf[bad]
        keep = cdf > 1e-300
        self.lz_min = lz[keep][0]
        self.lz_max = lz[-1]
        self.split = lz[np.argmax(cdf >= 0.5)]
        low = keep & (lz <= self.split + 1.0)
        high = lz >= self.split - 1.0
        self._low = CubicSpline(lz[low], np.log(cdf[low]))
        self._high = CubicSpline(lz[high], np.log(tail[high]))
        self._tail_coef = tail[-1] * z[-1] ** a
        self._a = a

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape)
        pos = z > 0
        lz = np.log(z[pos])
        res = np.zeros(lz.shape)
        lower = (lz >= self.lz_min) & (lz < self.split)
        res[lower] = np.exp(self._low(lz[lower]))
        upper = (lz >= self.split) & (lz <= self.lz_max)
        res[upper] = -np.expm1(self._high(lz[upper]))
        beyond = lz > self.lz_max
        res[beyond] = 1.0 - self._tail_coef * np.exp(-self._a * lz[beyond])
        out[pos] = res
        return out


@lru_cache(maxsize=8)
def _stable_table(alpha):
    return _StableTable(alpha)


def interference_cdf(t, scale: StableScale, method: str = "auto"):
    """CDF ``P(I <= t)`` of the one-sided stable interference law.

    ``method``: ``"closed"`` (Levy law, alpha = 4 only), ``"oscillatory"``
    (panel-wise quadrature of the real inversion integral, with the Kanter
    form substituted where the integrand grows too much to cancel),
    ``"kanter"``, ``"table"`` (spline over the oscillatory values) or
    ``"auto"`` (closed form at alpha = 4, table otherwise).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("interference_cdf needs t >= 0")
    if method == "auto":
        method = "closed" if scale.alpha == 4.0 else "table"
    if scale.iota == 0:
        out = np.ones(t.shape)
    else:
        z = t * scale.iota ** (-0.5 * scale.alpha)
        out = np.clip(_standard_cdf(z, scale.alpha, method), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _cdf_fast(t, scale):
    # internal: t may contain zeros or negatives, which map to F = 0
    t = np.maximum(np.asarray(t, dtype=float), 0.0)
    if scale.iota == 0:
        return np.ones(t.shape)
    if scale.alpha == 4.0:
        return _levy_cdf(t, scale.iota)
    return _stable_table(scale.alpha)(t * scale.iota ** (-0.5 * scale.alpha))


# ---------------------------------------------------------------------------
# signal received by the nearest adversary


class _SignalTable:
    """Splines of the auxiliary integrals behind the signal law at the adversary.

    With ``y = pi*lambda_A*r**2`` (exponential) the received power is
    ``S = pd * c**p * h / y**p``, ``c = pi*lambda_A``.  In the scaled
    variable ``u = t / (pd * c**p)``:

    * ``psi(u) = int exp(-u y^p - y) y^p dy``, so ``f_S(t) = psi(u) / (pd c^p)``
    * ``chi(u) = int (1 - exp(-u y^p)) exp(-y) dy``, so ``F_S(t) = chi(u)``.

    Both are computed by the trapezoidal rule in ``ln y``, which converges
    geometrically for these integrands.
    """

    def __init__(self, alpha, lo=-60.0, hi=60.0, step=0.05):
        p = 0.5 * alpha
        self.p = p
        lu = np.arange(lo, hi + step / 2, step)
        h = min(0.05, 0.25 / p)
        s = np.arange(-hi / p - 60.0, math.log(50.0) + h / 2, h)
        ys = np.exp(s)
        psi = np.empty(lu.shape)
        chi = np.empty(lu.shape)
        for i, l in enumerate(lu):
            uy = np.exp(l + p * s)
            base = np.exp(-ys) * ys
            psi[i] = h * np.sum(np.exp(-uy) * uy * base) / math.exp(l)
            chi[i] = h * np.sum(-np.expm1(-uy) * base)
        self.lu_min, self.lu_max = lu[0], lu[-1]
        self._psi = CubicSpline(lu, np.log(psi))
        self._chi = CubicSpline(lu, np.log(chi))
        # complement 1 - chi, for the upper half of the range
        comp = np.maximum(1.0 - chi, 1e-300)
        upper = lu >= 0
        self._comp = CubicSpline(lu[upper], np.log(comp[upper]))
        self._psi0 = math.gamma(p + 1.0)
        self._psi_inf = psi[-1] * math.exp((1.0 + 1.0 / p) * lu[-1])
        self._comp_inf = comp[-1] * math.exp(lu[-1] / p)

    def psi(self, u):
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape, self._psi0)
        pos = u > 0
        lu = np.log(u[pos])
        res = np.full(lu.shape, self._psi0)
        mid = (lu >= self.lu_min) & (lu <= self.lu_max)
        res[mid] = np.exp(self._psi(lu[mid]))
        big = lu > self.lu_max
        res[big] = self._psi_inf * np.exp(-(1.0 + 1.0 / self.p) * lu[big])
        out[pos] = res
        return out

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape)
        pos = u > 0
        lu = np.log(u[pos])
        res = np.empty(lu.shape)
        small = lu < self.lu_min
        res[small] = self._psi0 * np.exp(lu[small])
        low = (lu >= self.lu_min) & (lu < 0)
        res[low] = np.exp(self._chi(lu[low]))
        high = (lu >= 0) & (lu <= self.lu_max)
        res[high] = -np.expm1(self._comp(lu[high]))
        big = lu > self.lu_max
        res[big] = 1.0 - self._comp_inf * np.exp(-lu[big] / self.p)
        out[pos] = res
        return out


@lru_cache(maxsize=8)
def _signal_table(alpha):
    return _SignalTable(alpha)


def _signal_unit(pd, params):
    return pd * (math.pi * params.lambda_a) ** (0.5 * params.alpha)


def signal_pdf_at_adversary(t, pd: float, params: NetworkParams):
    """Density of the faded D2D signal power at the nearest adversary, per watt."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("signal_pdf_at_adversary needs t >= 0")
    unit = _signal_unit(pd, params)
    out = _signal_table(params.alpha).psi(t / unit) / unit
    return float(out) if out.ndim == 0 else out


def signal_cdf_at_adversary(t, pd: float, params: NetworkParams):
    """CDF of the same signal power."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("signal_cdf_at_adversary needs t >= 0")
    out = _signal_table(params.alpha).cdf(t / _signal_unit(pd, params))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# detection at the adversary


def fa_probability(powers: PowerPair, tau, params: NetworkParams, scale: StableScale | None = None):
    """False-alarm probability ``P(I + N_a > tau)`` of an energy detector with threshold ``tau``.

    ``scale`` overrides the interference scale derived from ``powers``.
    """
    tau = np.asarray(tau, dtype=float)
    scale = scale or adversary_scale(powers, params)
    out = np.where(tau <= params.noise_a, 1.0, 1.0 - _cdf_fast(tau - params.noise_a, scale))
    return float(out) if out.ndim == 0 else out


def md_probability(
    powers: PowerPair,
    tau,
    params: NetworkParams,
    settings: QuadratureSettings = DEFAULT_QUADRATURE,
    scale: StableScale | None = None,
):
    """Miss-detection probability ``P(S + I + N_a <= tau)``.

    The convolution of the signal density with the interference CDF is split
    at the midpoint; each half is integrated in log distance from its
    singular-looking end point, where both factors vary over many decades.
    """
    tau = np.asarray(tau, dtype=float)
    flat = np.atleast_1d(tau).ravel()
    width = flat - params.noise_a
    out = np.zeros(flat.shape)
    pos = width > 0
    if np.any(pos):
        scale = scale or adversary_scale(powers, params)
        unit = _signal_unit(powers.pd, params)
        table = _signal_table(params.alpha)
        lnodes, lw = _log_rule(settings.log_span, settings.panels, settings.order)
        w = width[pos]
        half = 0.5 * w
        x = half[:, None] * np.exp(lnodes)[None, :]
        fs_low = table.psi(x / unit) / unit
        fs_high = table.psi((w[:, None] - x) / unit) / unit
        fi_low = _cdf_fast(w[:, None] - x, scale)
        fi_high = _cdf_fast(x, scale)
        body = (x * (fs_low * fi_low + fs_high * fi_high)) @ lw
        # mass of S below the first node, where F_I is flat
        t0 = half * math.exp(-settings.log_span)
        head = table.cdf(t0 / unit) * _cdf_fast(w - t0, scale)
        out[pos] = np.clip(body + head, 0.0, 1.0)
    out = out.reshape(tau.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# D2D link and cellular user


def d2d_success_probability(powers: PowerPair, params: NetworkParams) -> float:
    """``P(SINR > theta_d)`` at the D2D receiver at distance ``link_dist``."""
    p = params
    a = p.delta
    noise = p.theta_d * p.link_dist ** p.alpha * p.noise_rx / powers.pd
    load = p.lambda_d * p.p_active_d + p.lambda_b * p.p_active_c * (powers.pc / powers.pd) ** a
    interf = math.pi * p.theta_d ** a * p.link_dist ** 2 / sinc(a) * load
    return math.exp(-noise - interf)


def tail_integral(theta, alpha):
    """``int_{theta^(-1/alpha)}^inf u / (1 + u^alpha) du`` for ``theta >= 0``.

    Equal to ``(1/alpha) int_0^theta v^(-a) / (1 + v) dv``; the hypergeometric
    form is used below ``theta = 1`` and its complement above.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("theta must be >= 0")
    a = 2.0 / alpha
    out = np.empty(theta.shape)
    small = theta <= 1.0
    ts = theta[small]
    out[small] = ts ** (1.0 - a) / (1.0 - a) * special.hyp2f1(1.0, 1.0 - a, 2.0 - a, -ts)
    tb = theta[~small]
    out[~small] = math.pi / math.sin(math.pi * a) - tb ** (-a) / a * special.hyp2f1(1.0, a, 1.0 + a, -1.0 / tb)
    out /= alpha
    return float(out) if out.ndim == 0 else out


_CU_EDGES = np.array([0.0, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0])
_CU_CUT = 45.0


def _cu_success(theta, powers, params, include_d2d):
    p = params
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    a = p.delta
    half = 0.5 * p.alpha
    load = 2.0 * math.pi * p.lambda_b * p.p_active_c * theta ** a * tail_integral(theta, p.alpha)
    if include_d2d:
        load = load + math.pi * p.lambda_d * p.p_active_d * (theta * powers.pd / powers.pc) ** a / sinc(a)
    k = math.pi * p.lambda_b + load
    # integrate over y = k x, x the squared serving distance
    b = theta * p.noise_u * k ** (-half) / powers.pc
    with np.errstate(divide="ignore"):
        cut = np.minimum(_CU_CUT, (_CU_CUT / b) ** (1.0 / half))
    nodes, weights = composite_rule(_CU_EDGES, 16)
    y = cut[:, None] * nodes[None, :]
    vals = np.exp(-y - b[:, None] * y ** half) @ weights * cut
    return math.pi * p.lambda_b / k * vals


def cu_success_with_d2d(powers: PowerPair, theta_c, params: NetworkParams):
    """Coverage ``P(SINR_u > theta_c)`` of the typical cellular user, D2D interference included."""
    theta = np.asarray(theta_c, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("theta_c must be > 0")
    out = _cu_success(theta, powers, params, True).reshape(theta.shape)
    return float(out) if out.ndim == 0 else out


def cu_success_without_d2d(powers: PowerPair, theta_c, params: NetworkParams):
    """Same coverage with the D2D tier switched off."""
    theta = np.asarray(theta_c, dtype=float)
    if np.any(theta <= 0):
        raise ValueError("theta_c must be > 0")
    out = _cu_success(theta, powers, params, False).reshape(theta.shape)
    return float(out) if out.ndim == 0 else out


def _rate_threshold(rate):
    return np.expm1(np.minimum(rate, 1000.0) * math.log(2.0))


def ergodic_rate(
    powers: PowerPair,
    params: NetworkParams,
    include_d2d: bool = True,
    settings: QuadratureSettings = DEFAULT_QUADRATURE,
) -> float:
    """Ergodic rate ``E[log2(1 + SINR_u)]`` in bits per channel use.

    Integrates the coverage over rate thresholds up to the point where the
    coverage drops below ``settings.tail_cutoff``.
    """

    def succ(r):
        return _cu_success(_rate_threshold(r), powers, params, include_d2d)

    cutoff = settings.tail_cutoff
    grid = np.arange(0.0, 1025.0, 8.0)
    vals = succ(grid)
    below = np.nonzero(vals < cutoff)[0]
    if below.size == 0:
        r_cut = grid[-1]
    else:
        i = below[0]
        r_cut = optimize.brentq(
            lambda r: math.log(max(succ(np.array([r]))[0], 1e-300)) - math.log(cutoff), grid[i - 1], grid[i], xtol=1e-10
        )
    # coverage behaves like 1 - c * R**(2/alpha) near R = 0: grade the panels there
    edges = np.concatenate(([0.0], np.geomspace(1e-9, 1.0 / 16, 25), np.linspace(1.0 / 16, 1.0, settings.panels + 1)[1:]))
    nodes, weights = composite_rule(r_cut * edges, settings.order)
    return float(succ(nodes) @ weights)


def _levy_truncated_mean(t_max, iota):
    b = 0.5 * iota
    r = b / math.sqrt(t_max)
    return (
        t_max * math.erf(r)
        + 2.0 * b * math.sqrt(t_max) * math.exp(-r * r) / math.sqrt(math.pi)
        - 2.0 * b * b * math.erfc(r)
    )


def default_t_max(params: NetworkParams) -> float:
    """Default truncation level of the interference mean: ``1e6 * N_u``."""
    return 1e6 * params.noise_u


def mean_d2d_interference(
    powers: PowerPair,
    params: NetworkParams,
    t_max: float | None = None,
    settings: QuadratureSettings = DEFAULT_QUADRATURE,
) -> float:
    """Truncated mean ``int_0^t_max P(I > t) dt`` of the D2D interference at a cellular user.

    The stable law has no finite mean, so the truncation is part of the
    definition; it equals ``E[min(I, t_max)]``.
    """
    if t_max is None:
        t_max = default_t_max(params)
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    scale = cu_d2d_scale(powers.pd, params)
    if scale.iota == 0:
        return 0.0
    if scale.alpha == 4.0:
        return _levy_truncated_mean(t_max, scale.iota)
    lnodes, lw = _log_rule(settings.log_span, settings.panels, settings.order)
    t = t_max * np.exp(lnodes)
    t0 = t_max * math.exp(-settings.log_span)
    return float((t * (1.0 - _cdf_fast(t, scale))) @ lw + t0 * (1.0 - _cdf_fast(t0, scale)))
