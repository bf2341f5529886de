"""Compiled inner loops for the method-of-steps integrator."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _hermite_row(s, h, y0, y1, m0, m1, out):
    s2 = s * s
    s3 = s2 * s
    a = 2 * s3 - 3 * s2 + 1
    b = (s3 - 2 * s2 + s) * h
    c = -2 * s3 + 3 * s2
    d = (s3 - s2) * h
    for i in range(out.size):
        out[i] = a * y0[i] + b * m0[i] + c * y1[i] + d * m1[i]


@njit(cache=True, nogil=True)
def _locate(u, mesh, known):
    """Interval index j in [0, known - 1] with mesh[j] <= u < mesh[j + 1] (clamped)."""
    if known < 1:
        return 0
    # exact for uniform meshes; a few local corrections otherwise
    h = (mesh[known] - mesh[0]) / known
    j = int((u - mesh[0]) / h) if h > 0.0 else 0
    if j > known - 1:
        j = known - 1
    if j < 0:
        j = 0
    for _ in range(4):
        if u < mesh[j] and j > 0:
            j -= 1
        elif u >= mesh[j + 1] and j < known - 1:
            j += 1
        else:
            return j
    j = np.searchsorted(mesh[: known + 1], u, side="right") - 1
    if j > known - 1:
        j = known - 1
    if j < 0:
        j = 0
    return j


@njit(cache=True, nogil=True)
def _lookup(u, mesh, states, derivs, known, th_t, th_v, th_d, out):
    if u <= 0.0:
        if u < th_t[0]:
            u = th_t[0]
        j = np.searchsorted(th_t, u, side="right") - 1
        if j > th_t.size - 2:
            j = th_t.size - 2
        if j < 0:
            j = 0
        h = th_t[j + 1] - th_t[j]
        _hermite_row((u - th_t[j]) / h, h, th_v[j], th_v[j + 1], th_d[j], th_d[j + 1], out)
        return
    j = _locate(u, mesh, known)
    h = mesh[j + 1] - mesh[j]
    _hermite_row((u - mesh[j]) / h, h, states[j], states[j + 1], derivs[j], derivs[j + 1], out)


@njit(cache=True, nogil=True)
def _monomials(x, alpha, p, c, q, src, out):
    n = x.size
    g = np.empty(n)
    for i in range(n):
        xi = x[i] if x[i] > 0.0 else 0.0
        g[i] = alpha[i] * xi ** p[i]
        if q[i] != 0.0:
            g[i] /= (c[i] + xi) ** q[i]
    for k in range(src.shape[0]):
        v = 1.0
        for i in range(n):
            e = src[k, i]
            if e != 0.0:
                v *= g[i] ** e
        out[k] = v


@njit(cache=True, nogil=True)
def _rhs(t, x, known, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, out):
    m, n = src.shape
    now = np.empty(m)
    _monomials(x, alpha, p, c, q, src, now)
    mono_d = np.empty(m)
    xd = np.empty(n)
    for i in range(n):
        out[i] = 0.0
    last_tau = -1.0
    for k in range(m):
        rate_now = kappa[k] * now[k]
        if delays[k] > 0.0:
            if delays[k] != last_tau:
                _lookup(t - delays[k], mesh, states, derivs, known, th_t, th_v, th_d, xd)
                _monomials(xd, alpha, p, c, q, src, mono_d)
                last_tau = delays[k]
            rate_del = kappa[k] * mono_d[k]
        else:
            rate_del = rate_now
        for i in range(n):
            out[i] += rate_del * prod[k, i] - rate_now * src[k, i]


@njit(cache=True, nogil=True)
def rk4_integrate(dt, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, floor):
    """Fill states/derivs in place; returns the failing step index or -1."""
    nsteps = mesh.size - 1
    n = states.shape[1]
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    _rhs(mesh[0], states[0], 0, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, derivs[0])
    for j in range(nsteps):
        t = mesh[j]
        x = states[j]
        k1 = derivs[j]
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _rhs(t + 0.5 * dt, tmp, j, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, k2)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _rhs(t + 0.5 * dt, tmp, j, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, k3)
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        _rhs(t + dt, tmp, j, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d, k4)
        bad = False
        for i in range(n):
            v = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            states[j + 1, i] = v
            if v < floor:
                bad = True
        if bad:
            return j + 1
        _rhs(mesh[j + 1], states[j + 1], j + 1, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q,
             th_t, th_v, th_d, derivs[j + 1])
    return -1


@njit(cache=True, nogil=True)
def fill_derivs(mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d):
    for j in range(mesh.size):
        _rhs(mesh[j], states[j], j, mesh, states, derivs, kappa, src, prod, delays, alpha, p, c, q, th_t, th_v, th_d,
             derivs[j])


@njit(cache=True, nogil=True)
def _panel_count(length, h_q, minimum):
    k = int(np.ceil(length / h_q - 1e-9))
    return k if k > minimum else minimum


@njit(cache=True, nogil=True)
def _log_monomial(x, alpha, p, c, q, y):
    """log gamma^y(x); -inf when a needed component is zero."""
    out = 0.0
    for i in range(x.size):
        e = y[i]
        if e == 0.0:
            continue
        xi = x[i]
        if xi <= 0.0:
            return -np.inf
        r = np.log(alpha[i]) + p[i] * np.log(xi)
        if q[i] != 0.0:
            r -= q[i] * np.log(c[i] + xi)
        out += e * r
    return out


@njit(cache=True, nogil=True)
def window_integrals(times, h_q, min_panels, gl_x, gl_w, mesh, states, derivs, src, delays, alpha, p, c, q,
                     th_t, th_v, th_d, ref_mono, ref_log, krasovskii, out):
    """Per-reaction integrals over the windows [t - tau_k, t], one row per time.

    The integrand is gamma^{y_k}(x(s)), or with ``krasovskii`` set
    b_k (r e^r - expm1(r)) with r = log(gamma^{y_k}(x(s)) / b_k).  Panels
    match the Python quadrature: a window crossing t = 0 is split there,
    otherwise it gets at least ``min_panels`` panels.
    """
    m, n = src.shape
    known = mesh.size - 1
    x = np.empty(n)
    cuts = np.empty(3)
    for it in range(times.size):
        t = times[it]
        for k in range(m):
            tau = delays[k]
            if tau <= 0.0:
                out[it, k] = 0.0
                continue
            a = t - tau
            cuts[0] = a
            if a < 0.0 < t:
                cuts[1] = 0.0
                cuts[2] = t
                nseg = 2
                minimum = 1
            else:
                cuts[1] = t
                nseg = 1
                minimum = min_panels
            b = ref_mono[k]
            acc = 0.0
            for seg in range(nseg):
                lo = cuts[seg]
                hi = cuts[seg + 1]
                panels = _panel_count(hi - lo, h_q, minimum)
                width = (hi - lo) / panels
                for j in range(panels):
                    mid = lo + (j + 0.5) * width
                    for g in range(gl_x.size):
                        _lookup(mid + 0.5 * width * gl_x[g], mesh, states, derivs, known, th_t, th_v, th_d, x)
                        lm = _log_monomial(x, alpha, p, c, q, src[k])
                        if not krasovskii:
                            val = np.exp(lm)
                        elif lm == -np.inf:
                            val = b
                        else:
                            r = lm - ref_log[k]
                            val = b * (r * np.exp(r) - np.expm1(r))
                        acc += 0.5 * width * gl_w[g] * val
            out[it, k] = acc
