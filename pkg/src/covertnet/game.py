"""Two-stage power-control game.

Lower stage: the adversary picks the energy-detector threshold that
minimizes its detection error (false alarm + miss detection).  Upper stage:
the legitimate side picks ``(pd, pc)`` to maximize the D2D reward minus an
interference price, subject to the adversary's best-response error staying
above ``1 - eps_covert`` and the cellular rate loss staying below
``eps_qos``.  The upper stage is solved by successive convex approximation:
proximal-linear majorizers of the objective and constraints are minimized
on the power box, with damped updates.

The upper stage works in normalized log coordinates ``z`` in ``[0, 1]^2``
(``ln pd`` and ``ln pc`` mapped onto the box), since the powers span
several decades.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import analytic as an
from .params import NetworkParams, PowerPair

_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DetectorSolution:
    tau_star: float
    fa: float
    md: float
    error: float
    flat: bool = False


@dataclass(frozen=True)
class XiValues:
    """Negated utility and the two constraint residuals (feasible iff both <= 0)."""

    xi0: float
    xi1: float
    xi2: float
    detector: DetectorSolution | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.xi0, self.xi1, self.xi2])

    def feasible(self, tol: float = 0.0) -> bool:
        return self.xi1 <= tol and self.xi2 <= tol


def detection_error(powers: PowerPair, tau, params: NetworkParams, settings=an.DEFAULT_QUADRATURE):
    """False-alarm plus miss-detection probability at threshold ``tau``."""
    return an.fa_probability(powers, tau, params) + an.md_probability(powers, tau, params, settings)


def golden_section(f, a: float, b: float, xtol: float, fa=None, fb=None):
    """Minimize a unimodal ``f`` on ``[a, b]`` to an interval width ``xtol``.

    Returns ``(x, f(x))`` for the best point evaluated, end points included
    when their values are supplied.
    """
    best = []
    if fa is not None:
        best.append((fa, a))
    if fb is not None:
        best.append((fb, b))
    c = b - _PHI * (b - a)
    d = a + _PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = f(d)
    best.extend([(fc, c), (fd, d)])
    fx, x = min(best)
    return x, fx


def tau_grid(powers: PowerPair, params: NetworkParams, points: int = 128) -> np.ndarray:
    """Log-spaced thresholds from ``N_a (1 + 1e-6)`` to ``N_a + 1e3 (pd + iota^(alpha/2))``."""
    med = an.adversary_scale(powers, params).median_scale
    lo = 1e-6 * params.noise_a
    hi = 1e3 * (powers.pd + med)
    return params.noise_a + np.geomspace(lo, hi, points)


def best_response_tau(
    powers: PowerPair,
    params: NetworkParams,
    points: int = 128,
    rel_tol: float = 1e-6,
    settings=an.DEFAULT_QUADRATURE,
) -> DetectorSolution:
    """Adversary's error-minimizing threshold: grid scan, then golden section in ``ln(tau - N_a)``."""
    na = params.noise_a
    taus = tau_grid(powers, params, points)
    errs = detection_error(powers, taus, params, settings)
    if errs.max() - errs.min() <= 1e-12:
        return DetectorSolution(na, 1.0, 0.0, 1.0, flat=True)
    i = int(np.argmin(errs))
    lw = np.log(taus - na)
    lo, hi = lw[max(i - 1, 0)], lw[min(i + 1, points - 1)]

    def obj(x):
        return float(detection_error(powers, na + math.exp(x), params, settings))

    x, fx = golden_section(obj, lo, hi, rel_tol)
    if errs[i] <= fx:
        tau = float(taus[i])
    else:
        tau = na + math.exp(x)
    fa = float(an.fa_probability(powers, tau, params))
    md = float(an.md_probability(powers, tau, params, settings))
    return DetectorSolution(tau, fa, md, fa + md)


def utility(powers: PowerPair, params: NetworkParams, t_max=None, settings=an.DEFAULT_QUADRATURE) -> float:
    """D2D reliability reward minus the per-pair price of interference at cellular users."""
    p = params
    reward = p.phi_d * an.d2d_success_probability(powers, p)
    cost = p.phi_c * p.lambda_u / p.lambda_d * an.mean_d2d_interference(powers, p, t_max, settings)
    return reward - cost


def xi(powers: PowerPair, params: NetworkParams, t_max=None, settings=an.DEFAULT_QUADRATURE) -> XiValues:
    """Objective and constraint residuals, with the adversary's best response recomputed."""
    p = params
    det = best_response_tau(powers, p, settings=settings)
    rate_with = an.ergodic_rate(powers, p, True, settings)
    rate_without = an.ergodic_rate(powers, p, False, settings)
    return XiValues(
        -utility(powers, p, t_max, settings),
        (1.0 - p.eps_covert) - det.error,
        (1.0 - p.eps_qos) * rate_without - rate_with,
        det,
    )


# ---------------------------------------------------------------------------
# upper stage


@dataclass(frozen=True)
class LogBox:
    """Power box in normalized log coordinates."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_params(cls, params: NetworkParams) -> "LogBox":
        lo = np.log([params.pd_min, params.pc_min])
        hi = np.log([params.pd_max, params.pc_max])
        return cls(lo, hi)

    @property
    def free(self) -> np.ndarray:
        return self.hi > self.lo

    def to_powers(self, z) -> PowerPair:
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        x = np.exp(self.lo + z * (self.hi - self.lo))
        return PowerPair(float(x[0]), float(x[1]))

    def to_z(self, powers: PowerPair) -> np.ndarray:
        span = np.where(self.free, self.hi - self.lo, 1.0)
        z = (np.log([powers.pd, powers.pc]) - self.lo) / span
        return np.where(self.free, np.clip(z, 0.0, 1.0), 0.0)


@dataclass(frozen=True)
class Surrogate:
    """``Xi_i(c) + g_i.(z - c) + |z - c|^2 / (2 delta)`` for ``i = 0, 1, 2``."""

    center: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    delta: float

    def __call__(self, z) -> np.ndarray:
        d = np.asarray(z, dtype=float) - self.center
        lin = d @ self.gradients.T
        return self.values + lin + (d * d).sum(axis=-1, keepdims=True) / (2.0 * self.delta)

    def gradient(self, z) -> np.ndarray:
        d = np.asarray(z, dtype=float) - self.center
        return self.gradients + d[None, :] / self.delta


def surrogate(center, values, gradients, delta: float) -> Surrogate:
    """Build the majorizer family around ``center`` (log-box coordinates)."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    return Surrogate(
        np.asarray(center, dtype=float),
        np.asarray(values, dtype=float),
        np.asarray(gradients, dtype=float).reshape(3, 2),
        float(delta),
    )


def _pick(obj, z, tie=1e-12):
    # lowest objective; near ties go to smaller pd, then smaller pc
    best = obj.min()
    cand = np.nonzero(obj <= best + tie)[0]
    order = np.lexsort((z[cand, 1], z[cand, 0]))
    return cand[order[0]]


def solve_surrogate(model: Surrogate, free=(True, True), grid: int = 64):
    """Minimize the model objective subject to both model constraints on ``[0, 1]^2``.

    Returns ``(z, feasible)``.  When no point satisfies the constraints the
    minimum-violation point is returned with ``feasible = False``.
    """
    free = np.asarray(free, dtype=bool)
    if grid < 1:
        raise ValueError("grid must be >= 1")
    c = model.center
    lo = np.where(free, 0.0, c)
    hi = np.where(free, 1.0, c)
    bounds = list(zip(lo, hi))
    # unconstrained prox step; exact when it is feasible
    step = np.clip(c - model.delta * model.gradients[0], lo, hi)
    if np.all(model(step)[1:] <= 0):
        return step, True

    axes = [np.linspace(lo[j], hi[j], grid) if free[j] else np.array([c[j]]) for j in range(2)]
    zz = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    # the center is feasible whenever the true residuals are, even if the grid misses the lens
    zz = np.vstack((zz, c))
    vals = model(zz)
    viol = np.maximum(vals[:, 1], vals[:, 2])
    ok = viol <= 0

    def cons(i):
        return {"type": "ineq", "fun": lambda z: -model(z)[i], "jac": lambda z: -model.gradient(z)[i]}

    if ok.any():
        idx = np.nonzero(ok)[0]
        z0 = zz[idx[_pick(vals[idx, 0], zz[idx])]]
        res = optimize.minimize(
            lambda z: model(z)[0],
            z0,
            jac=lambda z: model.gradient(z)[0],
            method="SLSQP",
            bounds=bounds,
            constraints=[cons(1), cons(2)],
            options={"ftol": 1e-15, "maxiter": 200},
        )
        z1 = np.clip(res.x, lo, hi)
        v1 = model(z1)
        if np.all(v1[1:] <= 1e-12) and v1[0] <= model(z0)[0]:
            return z1, True
        return z0, True

    # infeasible model: minimize the larger violation, written as an epigraph
    z0 = zz[_pick(viol, zz)]
    x0 = np.append(z0, viol.min())
    epi = [
        {"type": "ineq", "fun": lambda x, i=i: x[2] - model(x[:2])[i], "jac": lambda x, i=i: np.append(-model.gradient(x[:2])[i], 1.0)}
        for i in (1, 2)
    ]
    res = optimize.minimize(
        lambda x: x[2],
        x0,
        jac=lambda x: np.array([0.0, 0.0, 1.0]),
        method="SLSQP",
        bounds=bounds + [(None, None)],
        constraints=epi,
        options={"ftol": 1e-15, "maxiter": 200},
    )
    z1 = np.clip(res.x[:2], lo, hi)
    if model(z1)[1:].max() < viol.min():
        return z1, False
    return z0, False


@dataclass(frozen=True)
class SCAOptions:
    gamma: float = 0.5
    delta: float = 1.0
    tol: float = 1e-4
    max_iters: int = 100
    fd_step: float = 1e-3
    t_max: float | None = None
    n_majorize: int = 16
    majorize_radius: float = 0.1
    feas_tol: float = 1e-3
    grid: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not (self.tol > 0 and self.delta > 0 and self.fd_step > 0):
            raise ValueError("tol, delta and fd_step must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class SCAState:
    """One accepted iterate and the model that produced the next one."""

    iteration: int
    powers: PowerPair
    xi: XiValues
    gradients: np.ndarray
    delta: float
    surrogate_feasible: bool
    step: float

    @property
    def utility(self) -> float:
        return -self.xi.xi0


@dataclass(frozen=True)
class EquilibriumResult:
    powers: PowerPair
    detector: DetectorSolution
    utility: float
    constraint_slacks: tuple
    converged: bool
    feasible: bool
    iterations: int
    history: list = field(default_factory=list)

    @property
    def reported_utility(self) -> float:
        """Utility as shown in sweeps: 0 when no feasible power pair was found."""
        return self.utility if self.feasible else 0.0


class _XiCache:
    def __init__(self, params, box, t_max, settings):
        self.params, self.box, self.t_max, self.settings = params, box, t_max, settings
        self._memo = {}
        self.calls = 0

    def __call__(self, z) -> XiValues:
        key = tuple(np.round(np.asarray(z, dtype=float), 15))
        if key not in self._memo:
            self.calls += 1
            self._memo[key] = xi(self.box.to_powers(z), self.params, self.t_max, self.settings)
        return self._memo[key]


def _fd_gradients(f, z, free, h):
    grads = np.zeros((3, 2))
    center = f(z).as_array()
    for j in range(2):
        if not free[j]:
            continue
        e = np.zeros(2)
        e[j] = h
        up_ok, dn_ok = z[j] + h <= 1.0, z[j] - h >= 0.0
        if up_ok and dn_ok:
            grads[:, j] = (f(z + e).as_array() - f(z - e).as_array()) / (2 * h)
        elif up_ok:
            grads[:, j] = (f(z + e).as_array() - center) / h
        else:
            grads[:, j] = (center - f(z - e).as_array()) / h
    return center, grads


def _majorizes(model, z, actual, slack=1e-9):
    return bool(np.all(actual <= model(z) + slack))


def _calibrate_delta(f, z, free, values, grads, opts, rng):
    # largest delta = delta0 / 2^k with the model above Xi at sampled nearby points
    n_free = int(free.sum())
    if n_free == 0 or opts.n_majorize == 0:
        return opts.delta
    pts = []
    while len(pts) < opts.n_majorize:
        d = rng.normal(size=2) * free
        d *= opts.majorize_radius * rng.random() ** (1.0 / n_free) / max(np.linalg.norm(d), 1e-300)
        pts.append(np.clip(z + d, 0.0, 1.0))
    bound = math.inf
    for q in pts:
        d = q - z
        dd = float(d @ d)
        if dd == 0:
            continue
        excess = f(q).as_array() - values - grads @ d
        for e in excess:
            if e > 1e-12:
                bound = min(bound, dd / (2.0 * e))
    delta = opts.delta
    while delta > bound and delta > 1e-12:
        delta *= 0.5
    return delta


def run_algorithm1(start: PowerPair, params: NetworkParams, options: SCAOptions = SCAOptions(),
                   settings=an.DEFAULT_QUADRATURE) -> EquilibriumResult:
    """Damped successive convex approximation for the leader's power control."""
    opts = options
    box = LogBox.from_params(params)
    if not start.in_box(params):
        raise ValueError(f"start {start} lies outside the power box")
    free = box.free
    f = _XiCache(params, box, opts.t_max, settings)
    rng = np.random.default_rng(opts.seed)
    z = box.to_z(start)
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        values, grads = _fd_gradients(f, z, free, opts.fd_step)
        delta = _calibrate_delta(f, z, free, values, grads, opts, rng)
        while True:
            model = surrogate(z, values, grads, delta)
            z_tmp, feas = solve_surrogate(model, free, opts.grid)
            z_new = np.where(free, opts.gamma * z + (1.0 - opts.gamma) * z_tmp, z)
            if delta <= 1e-12 or _majorizes(model, z_new, f(z_new).as_array()):
                break
            delta *= 0.5
        step = float(np.linalg.norm(z_new - z))
        history.append(SCAState(it, box.to_powers(z), f(z), grads, delta, feas, step))
        z = z_new
        if step <= opts.tol:
            converged = True
            break
    final = f(z)
    powers = box.to_powers(z)
    feasible = final.feasible(opts.feas_tol)
    history.append(SCAState(it + 1, powers, final, np.zeros((3, 2)), math.nan, feasible, 0.0))
    return EquilibriumResult(
        powers=powers,
        detector=final.detector,
        utility=-final.xi0,
        constraint_slacks=(-final.xi1, -final.xi2),
        converged=converged and feasible,
        feasible=feasible,
        iterations=it,
        history=history,
    )


def min_cover_power(pd: float, params: NetworkParams, t_max=None, settings=an.DEFAULT_QUADRATURE):
    """Smallest ``pc`` in the box meeting both constraints at this ``pd``, or ``None``.

    Both residuals decrease in ``pc``, so each is solved for its root in
    ``ln pc`` and the larger root is taken.
    """
    lo, hi = math.log(params.pc_min), math.log(params.pc_max)

    def res(lpc):
        v = xi(PowerPair(pd, math.exp(lpc)), params, t_max, settings)
        return v.xi1, v.xi2

    r_lo, r_hi = res(lo), res(hi)
    if max(r_hi) > 0:
        return None
    roots = [lo]
    for i in (0, 1):
        if r_lo[i] > 0:
            roots.append(optimize.brentq(lambda x: res(x)[i], lo, hi, xtol=1e-13, rtol=1e-13))
    return math.exp(max(roots))


def feasible_starts(params: NetworkParams, n: int, seed: int = 0, max_draws: int = 400, settings=an.DEFAULT_QUADRATURE):
    """Up to ``n`` random feasible power pairs, drawn uniformly in log coordinates."""
    box = LogBox.from_params(params)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(max_draws):
        z = np.where(box.free, rng.random(2), 0.0)
        pw = box.to_powers(z)
        if xi(pw, params, settings=settings).feasible():
            out.append(pw)
            if len(out) == n:
                break
    return out
