"""Compiled RK4 loop for the observer and closed-loop modes.

Mirrors ``scenario._Network.rhs`` operation for operation; the numpy
implementation stays the reference and the test suite cross-checks both.
State layout: ``[eta (N*m), omega (N*l), e_hat (N*n*m), q (N*2), qdot (N*2)]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _leader(t, omega, amp, phase, e_out, v, y):
    ell = omega.shape[0]
    for k in range(ell):
        arg = omega[k] * t + phase[k]
        v[2 * k] = amp[k] * np.sin(arg)
        v[2 * k + 1] = amp[k] * np.cos(arg)
    for r in range(e_out.shape[0]):
        acc = 0.0
        for c in range(e_out.shape[1]):
            acc += e_out[r, c] * v[c]
        y[r] = acc


@njit(cache=True)
def _rhs(t, x, out, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
         closed, theta, grav, kmat, alpha, work):
    n = adj.shape[0]
    n_out, m = e_out.shape
    ell = m // 2
    o_eta = 0
    o_om = n * m
    o_e = o_om + n * ell
    o_q = o_e + n * n_out * m
    o_qd = o_q + 2 * n
    v = work[0, :m]
    y = work[1, :n_out]
    _leader(t, omega, amp, phase, e_out, v, y)
    yhat = np.empty((n, n_out))
    for i in range(n):
        for r in range(n_out):
            acc = 0.0
            for c in range(m):
                acc += x[o_e + (i * n_out + r) * m + c] * x[o_eta + i * m + c]
            yhat[i, r] = acc
    ev = np.empty(m)
    ey = np.empty(n_out)
    for i in range(n):
        deg = pin[i]
        for j in range(n):
            deg += adj[i, j]
        for c in range(m):
            acc = pin[i] * v[c] - deg * x[o_eta + i * m + c]
            for j in range(n):
                if adj[i, j] != 0.0:
                    acc += adj[i, j] * x[o_eta + j * m + c]
            ev[c] = acc
        for r in range(n_out):
            acc = pin[i] * y[r] - deg * yhat[i, r]
            for j in range(n):
                if adj[i, j] != 0.0:
                    acc += adj[i, j] * yhat[j, r]
            ey[r] = acc
        for k in range(ell):
            w = x[o_om + i * ell + k]
            e0 = x[o_eta + i * m + 2 * k]
            e1 = x[o_eta + i * m + 2 * k + 1]
            out[o_eta + i * m + 2 * k] = w * e1 + mu1 * d[i] * ev[2 * k]
            out[o_eta + i * m + 2 * k + 1] = -w * e0 + mu1 * d[i] * ev[2 * k + 1]
            out[o_om + i * ell + k] = mu2 * d[i] * (-ev[2 * k + 1] * e0 + ev[2 * k] * e1)
        for r in range(n_out):
            for c in range(m):
                out[o_e + (i * n_out + r) * m + c] = d[i] * ey[r] * x[o_eta + i * m + c]
    if not closed:
        return
    seta = np.empty(m)
    sdeta = np.empty(m)
    sdom = np.empty(m)
    for i in range(n):
        eta = x[o_eta + i * m:o_eta + (i + 1) * m]
        deta = out[o_eta + i * m:o_eta + (i + 1) * m]
        for k in range(ell):
            w = x[o_om + i * ell + k]
            dw = out[o_om + i * ell + k]
            seta[2 * k] = w * eta[2 * k + 1]
            seta[2 * k + 1] = -w * eta[2 * k]
            sdeta[2 * k] = w * deta[2 * k + 1]
            sdeta[2 * k + 1] = -w * deta[2 * k]
            sdom[2 * k] = dw * eta[2 * k + 1]
            sdom[2 * k + 1] = -dw * eta[2 * k]
        q0 = x[o_q + 2 * i]
        q1 = x[o_q + 2 * i + 1]
        qd = np.array([x[o_qd + 2 * i], x[o_qd + 2 * i + 1]])
        qrd = np.empty(2)
        qrdd = np.empty(2)
        for r in range(2):
            e_s = 0.0
            e_eta = 0.0
            de_s = 0.0
            e_sdeta = 0.0
            e_sdom = 0.0
            de_eta = 0.0
            e_deta = 0.0
            for c in range(m):
                ec = x[o_e + (i * n_out + r) * m + c]
                dec = out[o_e + (i * n_out + r) * m + c]
                e_s += ec * seta[c]
                e_eta += ec * eta[c]
                de_s += dec * seta[c]
                e_sdeta += ec * sdeta[c]
                e_sdom += ec * sdom[c]
                de_eta += dec * eta[c]
                e_deta += ec * deta[c]
            qr = q0 if r == 0 else q1
            qrd[r] = e_s - alpha[i] * (qr - e_eta)
            qrdd[r] = de_s + e_sdeta + e_sdom - alpha[i] * (qd[r] - de_eta - e_deta)
        s0 = qd[0] - qrd[0]
        s1 = qd[1] - qrd[1]
        a1, a2, a3, a4, a5 = theta[i, 0], theta[i, 1], theta[i, 2], theta[i, 3], theta[i, 4]
        c2 = np.cos(q1)
        hs = a3 * np.sin(q1)
        m00 = a1 + a2 + 2 * a3 * c2
        m01 = a2 + a3 * c2
        m11 = a2
        c00 = -hs * qd[1]
        c01 = -hs * (qd[0] + qd[1])
        c10 = hs * qd[0]
        c12 = np.cos(q0 + q1)
        g0 = a4 * grav[i] * np.cos(q0) + a5 * grav[i] * c12
        g1 = a5 * grav[i] * c12
        tau0 = (-(kmat[i, 0, 0] * s0 + kmat[i, 0, 1] * s1) + m00 * qrdd[0] + m01 * qrdd[1]
                + c00 * qrd[0] + c01 * qrd[1] + g0)
        tau1 = (-(kmat[i, 1, 0] * s0 + kmat[i, 1, 1] * s1) + m01 * qrdd[0] + m11 * qrdd[1]
                + c10 * qrd[0] + g1)
        r0 = tau0 - (c00 * qd[0] + c01 * qd[1]) - g0
        r1 = tau1 - c10 * qd[0] - g1
        det = m00 * m11 - m01 * m01
        out[o_q + 2 * i] = qd[0]
        out[o_q + 2 * i + 1] = qd[1]
        out[o_qd + 2 * i] = (m11 * r0 - m01 * r1) / det
        out[o_qd + 2 * i + 1] = (m00 * r1 - m01 * r0) / det


@njit(cache=True)
def _lyap(t, x, omega, amp, phase, e_out, p, w, mu2, closed, theta, alpha, n, vi_out, work):
    n_out, m = e_out.shape
    ell = m // 2
    v = work[0, :m]
    y = work[1, :n_out]
    _leader(t, omega, amp, phase, e_out, v, y)
    val = 0.0
    for i in range(n):
        for j in range(n):
            if p[i, j] != 0.0:
                acc = 0.0
                for c in range(m):
                    acc += (x[i * m + c] - v[c]) * (x[j * m + c] - v[c])
                val += p[i, j] * acc
            if w[i, j] != 0.0:
                acc = 0.0
                for k in range(ell):
                    acc += ((x[n * m + i * ell + k] - omega[k])
                            * (x[n * m + j * ell + k] - omega[k]))
                val += w[i, j] * acc / mu2
    if closed:
        o_om = n * m
        o_e = o_om + n * ell
        o_q = o_e + n * n_out * m
        o_qd = o_q + 2 * n
        for i in range(n):
            s = np.empty(2)
            for r in range(2):
                e_s = 0.0
                e_eta = 0.0
                for k in range(ell):
                    wk = x[o_om + i * ell + k]
                    e0 = x[i * m + 2 * k]
                    e1 = x[i * m + 2 * k + 1]
                    base = o_e + (i * n_out + r) * m
                    e_s += x[base + 2 * k] * wk * e1 - x[base + 2 * k + 1] * wk * e0
                    e_eta += x[base + 2 * k] * e0 + x[base + 2 * k + 1] * e1
                qrd = e_s - alpha[i] * (x[o_q + 2 * i + r] - e_eta)
                s[r] = x[o_qd + 2 * i + r] - qrd
            c2 = np.cos(x[o_q + 2 * i + 1])
            a1, a2, a3 = theta[i, 0], theta[i, 1], theta[i, 2]
            m00 = a1 + a2 + 2 * a3 * c2
            m01 = a2 + a3 * c2
            vi_out[i] = 0.5 * (m00 * s[0] * s[0] + 2 * m01 * s[0] * s[1] + a2 * s[1] * s[1])
    return val


@njit(cache=True)
def run_rk4(x0, step, n_steps, rec_idx, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
            closed, theta, grav, kmat, alpha, track, p, w):
    """Returns ``(states at rec_idx, per-step V, per-step V_i, status, fail_step)``."""
    dim = x0.shape[0]
    n = adj.shape[0]
    states = np.empty((rec_idx.shape[0], dim))
    states[0] = x0
    n_track = n_steps + 1 if track else 1
    step_v = np.full(n_track, np.nan)
    step_vi = np.full((n_track, n), np.nan)
    work = np.empty((2, max(e_out.shape[1], e_out.shape[0])))
    x = x0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    vi = np.empty(n)
    if track:
        step_v[0] = _lyap(0.0, x, omega, amp, phase, e_out, p, w, mu2, closed, theta,
                          alpha, n, vi, work)
        if closed:
            step_vi[0] = vi
    slot = 1
    h = step
    for k in range(n_steps):
        t = k * h
        _rhs(t, x, k1, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
             closed, theta, grav, kmat, alpha, work)
        for c in range(dim):
            tmp[c] = x[c] + 0.5 * h * k1[c]
        _rhs(t + 0.5 * h, tmp, k2, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
             closed, theta, grav, kmat, alpha, work)
        for c in range(dim):
            tmp[c] = x[c] + 0.5 * h * k2[c]
        _rhs(t + 0.5 * h, tmp, k3, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
             closed, theta, grav, kmat, alpha, work)
        for c in range(dim):
            tmp[c] = x[c] + h * k3[c]
        _rhs(t + h, tmp, k4, adj, pin, d, mu1, mu2, omega, amp, phase, e_out,
             closed, theta, grav, kmat, alpha, work)
        finite = True
        for c in range(dim):
            x[c] = x[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            if not np.isfinite(x[c]):
                finite = False
        if not finite:
            return states, step_v, step_vi, 1, k + 1
        if track:
            step_v[k + 1] = _lyap((k + 1) * h, x, omega, amp, phase, e_out, p, w, mu2,
                                  closed, theta, alpha, n, vi, work)
            if closed:
                step_vi[k + 1] = vi
        if slot < rec_idx.shape[0] and rec_idx[slot] == k + 1:
            states[slot] = x
            slot += 1
    return states, step_v, step_vi, 0, 0
