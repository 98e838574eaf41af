"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation, so both backends draw
the same random variates and visit the same quadrature nodes.
"""
import math

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x243F6A8885A308D3)
_STREAM_MULT = np.uint64(0xD1B54A32D192ED03)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))
_INV53 = 2.0 ** -53

# rows of (trial, point) pairs materialised per chunk in population_gain
_POINTS_PER_CHUNK = 1 << 21

# oscillatory quadrature constants; keep in sync with _ckernels.pyx
LOG_ENV_TOL = math.log(1e-13)
LOG_GROWTH_LIMIT = 10.0
DIRECT_PANELS = 256
ACCEL_PANELS = 64


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, trials, stream):
    """Per-trial 64-bit keys for an independent random stream."""
    with np.errstate(over="ignore"):
        s = np.asarray([seed], dtype=np.uint64) ^ _SEED_SALT
        k = _mix(s)
        t = np.asarray(trials, dtype=np.uint64)
        k = _mix(k ^ (t * GOLDEN))
        k = _mix(k ^ (np.uint64(stream) * _STREAM_MULT))
    return k


def uniforms_from_keys(keys, counters):
    """Uniform variates in (0, 1) for (key, counter) pairs; broadcasts."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix(keys + (counters + np.uint64(1)) * GOLDEN)
    return ((x >> _S11).astype(np.float64) + 0.5) * _INV53


def uniforms(seed, trials, stream, counter):
    """Uniform variate number ``counter`` of ``stream`` for each trial."""
    return uniforms_from_keys(stream_keys(seed, trials, stream), counter)


def population_gain(seed, trial0, n_trials, stream, cdf, p_active, radius, alpha, excl_sq=None):
    """Sum of ``h * r**-alpha`` over the active points of a disk PPP, one value per trial.

    Point ``j`` of a trial uses counters ``1+3j`` (activation), ``2+3j``
    (squared radius) and ``3+3j`` (fading); counter 0 drives the Poisson
    count through ``cdf`` by inversion.  Points with squared radius below
    ``excl_sq[trial]`` are skipped.
    """
    trials = np.arange(trial0, trial0 + n_trials, dtype=np.uint64)
    keys = stream_keys(seed, trials, stream)
    counts = np.searchsorted(cdf, uniforms_from_keys(keys, 0), side="right")
    out = np.zeros(n_trials)
    r2max = radius * radius
    half = 0.5 * alpha
    start = 0
    while start < n_trials:
        stop = start + 1
        total = int(counts[start])
        while stop < n_trials and total + counts[stop] <= _POINTS_PER_CHUNK:
            total += int(counts[stop])
            stop += 1
        c = counts[start:stop]
        if total:
            owner = np.repeat(np.arange(start, stop), c)
            first = np.cumsum(c) - c
            j = (np.arange(total) - np.repeat(first, c)).astype(np.uint64)
            k = keys[owner]
            base = np.uint64(3) * j
            ua = uniforms_from_keys(k, base + np.uint64(1))
            x = r2max * uniforms_from_keys(k, base + np.uint64(2))
            h = -np.log(uniforms_from_keys(k, base + np.uint64(3)))
            keep = ua < p_active
            if excl_sq is not None:
                keep &= x >= excl_sq[owner]
            gain = h / (x * x) if half == 2.0 else h * np.power(x, -half)
            w = np.where(keep, gain, 0.0)
            out[start:stop] = np.bincount(owner - start, weights=w, minlength=stop - start)
        start = stop
    return out


def _envelope_end(beta, kappa, p):
    """Return (log_peak, x_end) for exp(-beta x - kappa x^p), or log_peak only if ill-conditioned."""
    if beta < 0:
        xm = (-beta / (kappa * p)) ** (1.0 / (p - 1.0))
    else:
        xm = 0.0
    peak = -beta * xm - kappa * xm ** p
    if peak > LOG_GROWTH_LIMIT:
        return peak, math.nan
    target = LOG_ENV_TOL
    lo = xm
    hi = max(xm, 1.0)
    while -beta * hi - kappa * hi ** p > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if -beta * mid - kappa * mid ** p > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return peak, hi


def _panel_edges(beta, kappa, p, x_end):
    n_full = max(1, int(math.ceil(x_end / math.pi)))
    scale = kappa ** (-1.0 / p)
    if beta > 0:
        scale = min(scale, 1.0 / beta)
    head = [0.0]
    # geometric refinement toward the origin, where x**p is not smooth
    v = min(scale, math.pi) / 4096.0
    limit = min(math.pi, x_end)
    while v < limit:
        head.append(v)
        v *= 2.0
    if limit < math.pi:
        head.append(limit)
        return np.asarray(head), 0
    head.append(math.pi)
    return np.asarray(head), n_full


def _wynn(sums):
    prev = np.zeros(len(sums) + 1)
    cur = np.asarray(sums, dtype=float)
    best = cur[-1]
    j = 0
    while len(cur) > 1:
        diff = cur[1:] - cur[:-1]
        if np.any(diff == 0.0):
            break
        nxt = prev[1:len(cur)] + 1.0 / diff
        prev, cur = cur, nxt
        j += 1
        if j % 2 == 0 and np.isfinite(cur[-1]):
            best = cur[-1]
    return best


def _integrand(x, beta, kappa, p):
    return np.exp(-beta * x - kappa * x ** p) * np.sin(x) / x


def stable_tail_integral(kappa, alpha, nodes, weights):
    """``(1/(pi*a)) * int_0^inf exp(-beta x - kappa x^p) sin(x)/x dx`` per kappa.

    Here ``a = 2/alpha``, ``p = alpha/2``, ``beta = cot(pi*a)``.  Panels run
    between the zeros ``k*pi`` of the sine; past ``DIRECT_PANELS`` panels the
    alternating partial sums are extrapolated with Wynn's epsilon algorithm.
    NaN marks arguments where the envelope grows too much to cancel safely.
    """
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    a = 2.0 / alpha
    p = 0.5 * alpha
    beta = math.cos(math.pi * a) / math.sin(math.pi * a)
    xs = 0.5 * (np.asarray(nodes) + 1.0)
    ws = 0.5 * np.asarray(weights)
    out = np.empty(kappa.shape)
    for i, kp in enumerate(kappa):
        if kp <= 0.0:
            out[i] = 1.0 if beta > 0 or alpha == 4.0 else math.nan
            continue
        _, x_end = _envelope_end(beta, kp, p)
        if math.isnan(x_end):
            out[i] = math.nan
            continue
        head, n_full = _panel_edges(beta, kp, p, x_end)
        lo, hi = head[:-1], head[1:]
        x = lo[:, None] + (hi - lo)[:, None] * xs[None, :]
        total = float(np.sum((hi - lo)[:, None] * ws[None, :] * _integrand(x, beta, kp, p)))
        if n_full > 1:
            accel = n_full > DIRECT_PANELS
            n_panels = ACCEL_PANELS if accel else n_full
            k = np.arange(1, n_panels, dtype=float)
            x = math.pi * (k[:, None] + xs[None, :])
            panels = math.pi * np.sum(ws[None, :] * _integrand(x, beta, kp, p), axis=1)
            if accel:
                total = total + _wynn(np.cumsum(panels))
            else:
                total += float(np.sum(panels))
        out[i] = total / (math.pi * a)
    return out
