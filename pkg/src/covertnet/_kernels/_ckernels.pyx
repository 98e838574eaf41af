# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the Monte-Carlo and oscillatory-quadrature kernels.

Same algorithms, constants and random-variate layout as ``_pykernels``.
"""
import numpy as np

from libc.math cimport ceil, cos, exp, isfinite, log, M_PI, NAN, pow, sin
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t SEED_SALT = 0x243F6A8885A308D3ULL
cdef uint64_t STREAM_MULT = 0xD1B54A32D192ED03ULL
cdef double INV53 = 1.0 / 9007199254740992.0

cdef double LOG_ENV_TOL = log(1e-13)
cdef double LOG_GROWTH_LIMIT = 10.0
cdef int DIRECT_PANELS = 256
cdef int ACCEL_PANELS = 64
cdef int MAX_HEAD = 80


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline uint64_t _key(uint64_t seed, uint64_t trial, uint64_t stream) noexcept nogil:
    cdef uint64_t k = _mix(seed ^ SEED_SALT)
    k = _mix(k ^ (trial * GOLDEN))
    return _mix(k ^ (stream * STREAM_MULT))


cdef inline double _uniform(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t x = _mix(key + (counter + 1) * GOLDEN)
    return (<double>(x >> 11) + 0.5) * INV53


cdef inline Py_ssize_t _upper_bound(const double[::1] cdf, double u) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


def population_gain(uint64_t seed, uint64_t trial0, Py_ssize_t n_trials, uint64_t stream,
                    const double[::1] cdf, double p_active, double radius, double alpha,
                    excl_sq=None):
    out = np.zeros(n_trials)
    cdef double[::1] res = out
    cdef const double[::1] excl
    cdef bint has_excl = excl_sq is not None
    if has_excl:
        excl = np.ascontiguousarray(excl_sq, dtype=np.float64)
    else:
        excl = np.zeros(1)
    cdef double r2max = radius * radius
    cdef double half = 0.5 * alpha
    cdef Py_ssize_t i, j, n
    cdef uint64_t key, base
    cdef double acc, x, h, lim
    cdef bint quartic = half == 2.0
    with nogil:
        for i in range(n_trials):
            key = _key(seed, trial0 + <uint64_t>i, stream)
            n = _upper_bound(cdf, _uniform(key, 0))
            lim = excl[i] if has_excl else 0.0
            acc = 0.0
            for j in range(n):
                base = 3 * <uint64_t>j
                if not (_uniform(key, base + 1) < p_active):
                    continue
                x = r2max * _uniform(key, base + 2)
                if has_excl and not (x >= lim):
                    continue
                h = -log(_uniform(key, base + 3))
                if quartic:
                    acc = acc + h / (x * x)
                else:
                    acc = acc + h * pow(x, -half)
            res[i] = acc
    return out


cdef inline double _integrand(double x, double beta, double kappa, double p) noexcept nogil:
    return exp(-beta * x - kappa * pow(x, p)) * sin(x) / x


cdef double _envelope_end(double beta, double kappa, double p) noexcept nogil:
    cdef double xm = 0.0, peak, lo, hi, mid
    cdef int it
    if beta < 0:
        xm = pow(-beta / (kappa * p), 1.0 / (p - 1.0))
    peak = -beta * xm - kappa * pow(xm, p)
    if peak > LOG_GROWTH_LIMIT:
        return NAN
    lo = xm
    hi = xm if xm > 1.0 else 1.0
    while -beta * hi - kappa * pow(hi, p) > LOG_ENV_TOL:
        hi *= 2.0
    for it in range(200):
        mid = 0.5 * (lo + hi)
        if -beta * mid - kappa * pow(mid, p) > LOG_ENV_TOL:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


cdef double _wynn(double* s, double* prev, double* nxt, int n) noexcept nogil:
    # s is overwritten; prev/nxt are scratch of length n + 1
    cdef int m = n, j = 0, k
    cdef double best = s[n - 1], d
    cdef double* cur = s
    for k in range(n + 1):
        prev[k] = 0.0
    while m > 1:
        for k in range(m - 1):
            if cur[k + 1] - cur[k] == 0.0:
                return best
        for k in range(m - 1):
            d = cur[k + 1] - cur[k]
            nxt[k] = prev[k + 1] + 1.0 / d
        # rotate: prev <- cur, cur <- nxt
        for k in range(m):
            prev[k] = cur[k]
        for k in range(m - 1):
            cur[k] = nxt[k]
        m -= 1
        j += 1
        if j % 2 == 0 and isfinite(cur[m - 1]):
            best = cur[m - 1]
    return best


def stable_tail_integral(kappa, double alpha, nodes, weights):
    cdef const double[::1] kap = np.ascontiguousarray(np.atleast_1d(kappa), dtype=np.float64)
    cdef const double[::1] xs = np.ascontiguousarray(0.5 * (np.asarray(nodes, dtype=np.float64) + 1.0))
    cdef const double[::1] ws = np.ascontiguousarray(0.5 * np.asarray(weights, dtype=np.float64))
    out = np.empty(kap.shape[0])
    cdef double[::1] res = out
    cdef double[::1] sums = np.empty(ACCEL_PANELS + 1)
    cdef double[::1] prev = np.empty(ACCEL_PANELS + 2)
    cdef double[::1] nxt = np.empty(ACCEL_PANELS + 2)
    cdef double[::1] head = np.empty(MAX_HEAD)
    cdef double a = 2.0 / alpha
    cdef double p = 0.5 * alpha
    cdef double beta = cos(M_PI * a) / sin(M_PI * a)
    cdef Py_ssize_t i, q, nq = xs.shape[0]
    cdef int n_head, n_full, k, n_panels, h
    cdef bint accel
    cdef double kp, x_end, scale, v, limit, total, lo, hi, pan, acc
    with nogil:
        for i in range(kap.shape[0]):
            kp = kap[i]
            if kp <= 0.0:
                res[i] = 1.0 if (beta > 0 or alpha == 4.0) else NAN
                continue
            x_end = _envelope_end(beta, kp, p)
            if x_end != x_end:
                res[i] = NAN
                continue
            n_full = <int>ceil(x_end / M_PI)
            if n_full < 1:
                n_full = 1
            scale = pow(kp, -1.0 / p)
            if beta > 0 and 1.0 / beta < scale:
                scale = 1.0 / beta
            n_head = 0
            head[n_head] = 0.0
            n_head += 1
            v = (scale if scale < M_PI else M_PI) / 4096.0
            limit = x_end if x_end < M_PI else M_PI
            while v < limit:
                head[n_head] = v
                n_head += 1
                v *= 2.0
            if limit < M_PI:
                head[n_head] = limit
                n_full = 0
            else:
                head[n_head] = M_PI
            n_head += 1
            total = 0.0
            for h in range(n_head - 1):
                lo = head[h]
                hi = head[h + 1]
                acc = 0.0
                for q in range(nq):
                    acc = acc + (hi - lo) * ws[q] * _integrand(lo + (hi - lo) * xs[q], beta, kp, p)
                total = total + acc
            if n_full > 1:
                accel = n_full > DIRECT_PANELS
                n_panels = ACCEL_PANELS if accel else n_full
                pan = 0.0
                for k in range(1, n_panels):
                    acc = 0.0
                    for q in range(nq):
                        acc = acc + ws[q] * _integrand(M_PI * (k + xs[q]), beta, kp, p)
                    acc = M_PI * acc
                    if accel:
                        pan = pan + acc
                        sums[k - 1] = pan
                    else:
                        total = total + acc
                if accel:
                    total = total + _wynn(&sums[0], &prev[0], &nxt[0], n_panels - 1)
            res[i] = total / (M_PI * a)
    return out
