"""Compiled inner loops.

Everything here works on plain float64 arrays so the public modules can stay
in numpy.  The linear program solved by :func:`solve_qr2` is

    min_theta  sum_m c[m] * rho_{tau[m]}(y[m] - z0[m]*theta0 - z1[m]*theta1)

which covers the single-level QR problem (z0 = 1, z1 = geometric sum) and
the stacked composite problem (z = Q_k * (1, x_t), per-row tau_k).
"""

import numpy as np
from numba import njit

_MAX_ITER = 10_000


@njit(cache=True)
def arch_sums(abs_y, beta):
    """Return s_1..s_{n+1} with s_1 = 0 and s_t = |y_{t-1}| + beta * s_{t-1}."""
    n = abs_y.shape[0]
    s = np.empty(n + 1)
    s[0] = 0.0
    for t in range(1, n + 1):
        s[t] = abs_y[t - 1] + beta * s[t - 1]
    return s


@njit(cache=True)
def arch_sums_derivs(abs_y, beta):
    """Geometric sum plus its first and second derivatives in beta (length n+1)."""
    n = abs_y.shape[0]
    s = np.empty(n + 1)
    ds = np.empty(n + 1)
    d2s = np.empty(n + 1)
    s[0] = 0.0
    ds[0] = 0.0
    d2s[0] = 0.0
    for t in range(1, n + 1):
        s[t] = abs_y[t - 1] + beta * s[t - 1]
        ds[t] = s[t - 1] + beta * ds[t - 1]
        d2s[t] = 2.0 * ds[t - 1] + beta * d2s[t - 1]
    return s, ds, d2s


@njit(cache=True)
def weighted_select(u, a, idx, n, target):
    """Index into ``u`` of the smallest value whose cumulative weight reaches ``target``.

    ``idx`` holds a permutation of 0..n-1 and is reordered in place.  Expected
    linear time (three-way quickselect carrying the weight below the window).
    """
    lo = 0
    hi = n
    acc = 0.0
    while True:
        if hi - lo <= 1:
            return idx[lo]
        p0 = u[idx[lo]]
        p1 = u[idx[(lo + hi) // 2]]
        p2 = u[idx[hi - 1]]
        if p0 > p1:
            p0, p1 = p1, p0
        if p1 > p2:
            p1, p2 = p2, p1
        if p0 > p1:
            p0, p1 = p1, p0
        pivot = p1
        # Dutch national flag partition of idx[lo:hi]
        i = lo
        lt = lo
        gt = hi - 1
        while i <= gt:
            v = u[idx[i]]
            if v < pivot:
                tmp = idx[lt]
                idx[lt] = idx[i]
                idx[i] = tmp
                lt += 1
                i += 1
            elif v > pivot:
                tmp = idx[gt]
                idx[gt] = idx[i]
                idx[i] = tmp
                gt -= 1
            else:
                i += 1
        wl = 0.0
        for k in range(lo, lt):
            wl += a[idx[k]]
        we = 0.0
        for k in range(lt, gt + 1):
            we += a[idx[k]]
        if lt > lo and acc + wl >= target:
            hi = lt
        elif acc + wl + we >= target:
            return idx[lt]
        else:
            acc += wl + we
            lo = gt + 1
            if lo >= hi:
                # rounding pushed target past the total weight
                return idx[hi - 1]


@njit(cache=True)
def objective(y, z0, z1, c, tau, t0, t1):
    f = 0.0
    for m in range(y.shape[0]):
        r = y[m] - t0 * z0[m] - t1 * z1[m]
        if r < 0.0:
            f += c[m] * r * (tau[m] - 1.0)
        else:
            f += c[m] * r * tau[m]
    return f


@njit(cache=True)
def line_minimize(r, d, c, tau, ubuf, abuf, gmap, ibuf):
    """Exact minimizer over s of sum c*rho_tau(r - s*d).

    Returns (s, m) where m is the row that becomes interpolated, or (0, -1)
    when every d is zero.
    """
    k = 0
    target = 0.0
    for m in range(r.shape[0]):
        dm = d[m]
        if dm != 0.0:
            ubuf[k] = r[m] / dm
            if dm > 0.0:
                a = c[m] * dm
                target += a * tau[m]
            else:
                a = -c[m] * dm
                target += a * (1.0 - tau[m])
            abuf[k] = a
            gmap[k] = m
            ibuf[k] = k
            k += 1
    if k == 0:
        return 0.0, -1
    j = weighted_select(ubuf, abuf, ibuf, k, target)
    return ubuf[j], gmap[j]


@njit(cache=True)
def select_inplace(u, a, ix, n, target):
    """Smallest value of ``u[:n]`` whose cumulative weight in ``a`` reaches ``target``.

    Reorders ``u``, ``a`` and the labels ``ix`` in place (three-way
    quickselect).  Returns ``(value, label)``; the largest value is returned
    when the total weight falls short of ``target``.
    """
    lo = 0
    hi = n
    acc = 0.0
    while hi - lo > 1:
        p0 = u[lo]
        p1 = u[(lo + hi) // 2]
        p2 = u[hi - 1]
        if p0 > p1:
            p0, p1 = p1, p0
        if p1 > p2:
            p1, p2 = p2, p1
        if p0 > p1:
            p0, p1 = p1, p0
        pivot = p1
        i = lo
        lt = lo
        gt = hi - 1
        while i <= gt:
            v = u[i]
            if v < pivot:
                u[i], u[lt] = u[lt], u[i]
                a[i], a[lt] = a[lt], a[i]
                ix[i], ix[lt] = ix[lt], ix[i]
                lt += 1
                i += 1
            elif v > pivot:
                u[i], u[gt] = u[gt], u[i]
                a[i], a[gt] = a[gt], a[i]
                ix[i], ix[gt] = ix[gt], ix[i]
                gt -= 1
            else:
                i += 1
        wl = 0.0
        for k in range(lo, lt):
            wl += a[k]
        if lt > lo and acc + wl >= target:
            hi = lt
            continue
        we = 0.0
        for k in range(lt, gt + 1):
            we += a[k]
        if acc + wl + we >= target:
            return pivot, ix[lt]
        acc += wl + we
        lo = gt + 1
        if lo >= hi:
            return u[hi - 1], ix[hi - 1]
    return u[lo], ix[lo]


@njit(cache=True)
def _direction_slopes(r, z0, z1, g0, g1, c, tau, rtol, d):
    """Fill ``d = z0*g0 + z1*g1``; return right/left derivatives at 0 and a scale."""
    right = 0.0
    left = 0.0
    scale = 0.0
    for m in range(r.shape[0]):
        dm = z0[m] * g0 + z1[m] * g1
        d[m] = dm
        if dm == 0.0:
            continue
        cm = c[m]
        tm = tau[m]
        scale += cm * abs(dm)
        rm = r[m]
        if rm > rtol:
            g = -cm * dm * tm
            right += g
            left += g
        elif rm < -rtol:
            g = cm * dm * (1.0 - tm)
            right += g
            left += g
        elif dm > 0.0:
            right += cm * dm * (1.0 - tm)
            left -= cm * dm * tm
        else:
            right -= cm * dm * tm
            left += cm * dm * (1.0 - tm)
    return right, left, scale


@njit(cache=True)
def _forward_step(r, d, c, sign, slope0, rtol, ubuf, abuf, ibuf):
    """Exact minimizer ``s >= 0`` of the objective along ``sign * d``.

    Only rows whose residual crosses zero ahead contribute breakpoints; each
    crossing raises the slope by ``c |d|``.  ``slope0 < 0`` is the slope at 0+.
    """
    k = 0
    for m in range(r.shape[0]):
        dm = sign * d[m]
        rm = r[m]
        if dm == 0.0 or abs(rm) <= rtol:
            continue
        if (rm > 0.0) == (dm > 0.0):
            ubuf[k] = rm / dm
            abuf[k] = c[m] * abs(dm)
            ibuf[k] = m
            k += 1
    if k == 0:
        return -1.0, -1
    return select_inplace(ubuf, abuf, ibuf, k, -slope0)


@njit(cache=True)
def solve_qr2(y, z0, z1, c, tau, t0, t1):
    """Exact 2-parameter weighted (mixed-level) quantile regression.

    Starts from (t0, t1), moves the first coordinate to an interpolating point,
    then walks vertices: at each vertex every line that keeps one interpolated
    row fixed is checked for a descent direction, and an exact line search is
    taken along the first one found.  Stops when no such line descends, which
    is the optimality condition of the piecewise-linear objective.

    Returns (theta0, theta1, objective, iterations).
    """
    n = y.shape[0]
    r = np.empty(n)
    d = np.empty(n)
    ubuf = np.empty(n)
    abuf = np.empty(n)
    gmap = np.empty(n, dtype=np.int64)
    ibuf = np.empty(n, dtype=np.int64)
    last = -1
    ymax = 0.0
    for m in range(n):
        if abs(y[m]) > ymax:
            ymax = abs(y[m])
    for m in range(n):
        r[m] = y[m] - t0 * z0[m] - t1 * z1[m]
    # first coordinate: forward step along +-z0, or a full line search
    right, left, scale = _direction_slopes(r, z0, z1, 1.0, 0.0, c, tau, 0.0, d)
    done = False
    if right < 0.0:
        s, last = _forward_step(r, d, c, 1.0, right, 0.0, ubuf, abuf, ibuf)
        if s > 0.0:
            t0 += s
            done = True
    elif left > 0.0:
        s, last = _forward_step(r, d, c, -1.0, -left, 0.0, ubuf, abuf, ibuf)
        if s > 0.0:
            t0 -= s
            done = True
    if not done:
        s, last = line_minimize(r, z0, c, tau, ubuf, abuf, gmap, ibuf)
        if last >= 0:
            t0 += s
    it = 0
    cand = np.empty(n, dtype=np.int64)
    while it < _MAX_ITER:
        it += 1
        rtol = 1e-10 * (ymax + abs(t0) + abs(t1) + 1.0)
        ncand = 0
        for m in range(n):
            rm = y[m] - t0 * z0[m] - t1 * z1[m]
            r[m] = rm
            if abs(rm) <= rtol:
                cand[ncand] = m
                ncand += 1
        # try the most recently interpolated row first
        for q in range(ncand):
            if cand[q] == last:
                cand[0], cand[q] = cand[q], cand[0]
                break
        moved = False
        for q in range(ncand):
            p = cand[q]
            g0 = -z1[p]
            g1 = z0[p]
            if g0 == 0.0 and g1 == 0.0:
                continue
            right, left, scale = _direction_slopes(r, z0, z1, g0, g1, c, tau, rtol, d)
            eps = 1e-12 * (scale + 1e-300)
            if right < -eps:
                sign = 1.0
                slope0 = right
            elif left > eps:
                sign = -1.0
                slope0 = -left
            else:
                continue
            s, entering = _forward_step(r, d, c, sign, slope0, rtol, ubuf, abuf, ibuf)
            if s <= 0.0:
                continue
            t0 += sign * s * g0
            t1 += sign * s * g1
            last = entering
            moved = True
            break
        if not moved:
            break
    f = objective(y, z0, z1, c, tau, t0, t1)
    return t0, t1, f, it


@njit(cache=True)
def solve_qr1(y, z0, c, tau, base):
    """Exact minimizer over a scalar of sum c*rho_tau(y - base - a*z0)."""
    n = y.shape[0]
    r = np.empty(n)
    ubuf = np.empty(n)
    abuf = np.empty(n)
    gmap = np.empty(n, dtype=np.int64)
    ibuf = np.empty(n, dtype=np.int64)
    for m in range(n):
        r[m] = y[m] - base[m]
    s, piv = line_minimize(r, z0, c, tau, ubuf, abuf, gmap, ibuf)
    return s


@njit(cache=True)
def simulate_path(omega_u, alpha_u, beta_u, n_total, max_lag):
    """Random-coefficient ARCH(inf) recursion with zero pre-sample values.

    Row t uses sum_{j=1}^{min(t, max_lag)} beta_u[t]^(j-1) |y[t-j]|.
    """
    y = np.zeros(n_total)
    for t in range(n_total):
        b = beta_u[t]
        acc = 0.0
        pw = 1.0
        jmax = t if t < max_lag else max_lag
        for j in range(1, jmax + 1):
            acc += pw * abs(y[t - j])
            pw *= b
            if pw == 0.0:
                break
        y[t] = omega_u[t] + alpha_u[t] * acc
    return y
