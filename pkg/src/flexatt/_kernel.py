"""Compiled closed-loop right-hand side and fixed-step RK4 segment loop.

Mirrors ``sim.closed_loop_rhs`` term by term on flat arrays; the test suite
checks the two against each other.
"""

import numpy as np
from numba import njit

# status codes returned by rk4_segment
OK = 0
DIVERGED = 1


@njit(cache=True)
def deriv(x, t, out, qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
          bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell):
    # layout: q(4) w(3) eta(n) etad(n) v(r) zeta(r*nmu) Rhat(nR) z(2n)
    i_w = 4
    i_eta = 7
    i_etad = 7 + n
    i_v = 7 + 2 * n
    i_zeta = i_v + r
    i_R = i_zeta + r * nmu
    nR = nmu + ell * nmu + ell
    i_z = i_R + nR

    w0 = x[4]
    w1 = x[5]
    w2 = x[6]

    # attitude error vector part against the fixed desired attitude
    q0, q1, q2, q3 = x[0], x[1], x[2], x[3]
    e0 = qd[3] * q0 - (qd[1] * q2 - qd[2] * q1) - q3 * qd[0]
    e1 = qd[3] * q1 - (qd[2] * q0 - qd[0] * q2) - q3 * qd[1]
    e2 = qd[3] * q2 - (qd[0] * q1 - qd[1] * q0) - q3 * qd[2]

    # L(w) is sparse: row i picks inertia entries (J11,J22,J33,J23,J13,J12)
    Lw = np.zeros((3, 6))
    Lw[0, 0] = w0; Lw[0, 4] = w2; Lw[0, 5] = w1
    Lw[1, 1] = w1; Lw[1, 3] = w2; Lw[1, 5] = w0
    Lw[2, 2] = w2; Lw[2, 3] = w1; Lw[2, 4] = w0
    L1 = np.zeros((3, nmu))
    L0 = np.zeros(3)
    for i in range(3):
        s0 = 0.0
        for k in range(6):
            lk = Lw[i, k]
            if lk != 0.0:
                s0 += lk * Lbar0[k]
                for j in range(nmu):
                    L1[i, j] += lk * Lbar1[k, j]
        L0[i] = s0
    # F = -w x L
    F1 = np.empty((3, nmu))
    for j in range(nmu):
        a0, a1, a2 = L1[0, j], L1[1, j], L1[2, j]
        F1[0, j] = -(w1 * a2 - w2 * a1)
        F1[1, j] = -(w2 * a0 - w0 * a2)
        F1[2, j] = -(w0 * a1 - w1 * a0)
    F0_0 = -(w1 * L0[2] - w2 * L0[1])
    F0_1 = -(w2 * L0[0] - w0 * L0[2])
    F0_2 = -(w0 * L0[1] - w1 * L0[0])

    # N L1 + zeta, N L0 - v
    A1 = np.empty((r, nmu))
    NL1 = np.empty((r, nmu))
    NL0 = np.empty(r)
    res = np.empty(r)
    for i in range(r):
        for j in range(nmu):
            s = N[i, 0] * L1[0, j] + N[i, 1] * L1[1, j] + N[i, 2] * L1[2, j]
            NL1[i, j] = s
            A1[i, j] = s + x[i_zeta + i * nmu + j]
        s = N[i, 0] * L0[0] + N[i, 1] * L0[1] + N[i, 2] * L0[2]
        NL0[i] = s
        res[i] = s - x[i_v + i]

    # regressor rho = [F1 + E0 A1, E o A1, E o (N L0 - v)]
    rho = np.empty((3, nR))
    for i in range(3):
        for j in range(nmu):
            s = F1[i, j]
            for k in range(r):
                s += E0[i, k] * A1[k, j]
            rho[i, j] = s
        for b in range(ell):
            for j in range(nmu):
                s = 0.0
                for k in range(r):
                    s += Eb[b, i, k] * A1[k, j]
                rho[i, nmu + b * nmu + j] = s
            s = 0.0
            for k in range(r):
                s += Eb[b, i, k] * res[k]
            rho[i, nmu + ell * nmu + b] = s

    # control torque u = -k1 qev - k2 w - rho Rhat - E0 (N L0 - v) + dCdT w - F0
    u = np.empty(3)
    ev = (e0, e1, e2)
    wv = (w0, w1, w2)
    F0 = (F0_0, F0_1, F0_2)
    for i in range(3):
        s = -k1 * ev[i] - k2 * wv[i] - F0[i]
        for j in range(nR):
            s -= rho[i, j] * x[i_R + j]
        for k in range(r):
            s -= E0[i, k] * res[k]
        s += dCdT[i, 0] * w0 + dCdT[i, 1] * w1 + dCdT[i, 2] * w2
        u[i] = s

    # disturbance
    d0 = bias[0]
    d1 = bias[1]
    d2 = bias[2]
    for j in range(amp.shape[0]):
        val = amp[j] * np.sin(freq[j] * t + phase[j])
        ax = tone_axis[j]
        if ax == 0:
            d0 += val
        elif ax == 1:
            d1 += val
        else:
            d2 += val

    # coupled rigid/modal dynamics
    modal = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(n):
            s += C[i, k] * x[i_etad + k] + K[i, k] * x[i_eta + k]
        modal[i] = s
    Jw0 = J[0, 0] * w0 + J[0, 1] * w1 + J[0, 2] * w2
    Jw1 = J[1, 0] * w0 + J[1, 1] * w1 + J[1, 2] * w2
    Jw2 = J[2, 0] * w0 + J[2, 1] * w1 + J[2, 2] * w2
    rhs = np.empty(3)
    rhs[0] = -(w1 * Jw2 - w2 * Jw1) + u[0] + d0
    rhs[1] = -(w2 * Jw0 - w0 * Jw2) + u[1] + d1
    rhs[2] = -(w0 * Jw1 - w1 * Jw0) + u[2] + d2
    for i in range(3):
        s = 0.0
        for k in range(n):
            s += delta[i, k] * modal[k]
        rhs[i] += s
    wd = np.empty(3)
    for i in range(3):
        wd[i] = Jmb_inv[i, 0] * rhs[0] + Jmb_inv[i, 1] * rhs[1] + Jmb_inv[i, 2] * rhs[2]

    out[0] = 0.5 * (q3 * w0 + q1 * w2 - q2 * w1)
    out[1] = 0.5 * (q3 * w1 + q2 * w0 - q0 * w2)
    out[2] = 0.5 * (q3 * w2 + q0 * w1 - q1 * w0)
    out[3] = -0.5 * (q0 * w0 + q1 * w1 + q2 * w2)
    out[4] = wd[0]
    out[5] = wd[1]
    out[6] = wd[2]
    for i in range(n):
        out[i_eta + i] = x[i_etad + i]
        out[i_etad + i] = -modal[i] - (delta[0, i] * wd[0] + delta[1, i] * wd[1] + delta[2, i] * wd[2])

    # internal model v' = M v + N (u + F0) - M N L0 and compensator
    # zeta' = M zeta + M N L1 - N F1
    for i in range(r):
        s = N[i, 0] * (u[0] + F0_0) + N[i, 1] * (u[1] + F0_1) + N[i, 2] * (u[2] + F0_2)
        for k in range(r):
            s += M[i, k] * (x[i_v + k] - NL0[k])
        out[i_v + i] = s
        for j in range(nmu):
            s = -(N[i, 0] * F1[0, j] + N[i, 1] * F1[1, j] + N[i, 2] * F1[2, j])
            for k in range(r):
                s += M[i, k] * (x[i_zeta + k * nmu + j] + NL1[k, j])
            out[i_zeta + i * nmu + j] = s

    for j in range(nR):
        if adapt:
            out[i_R + j] = kad * (rho[0, j] * w0 + rho[1, j] * w1 + rho[2, j] * w2)
        else:
            out[i_R + j] = 0.0

    # auxiliary system z' = A z + [0; -delta^T w]
    for i in range(n):
        out[i_z + i] = x[i_z + n + i]
        s = -(delta[0, i] * w0 + delta[1, i] * w1 + delta[2, i] * w2)
        for k in range(n):
            s -= K[i, k] * x[i_z + k] + C[i, k] * x[i_z + n + k]
        out[i_z + n + i] = s


@njit(cache=True)
def rk4_segment(x0, t0, t_end, dt, n_steps, k_global0, decim, rec_buf,
                qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
                bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell):
    """Integrate one event-free segment; returns (x, n_rec, max_drift, status, t_fail)."""
    dim = x0.size
    x = x0.copy()
    k1v = np.empty(dim)
    k2v = np.empty(dim)
    k3v = np.empty(dim)
    k4v = np.empty(dim)
    tmp = np.empty(dim)
    n_rec = 0
    max_drift = 0.0
    for k in range(n_steps):
        t = t0 + k * dt
        t_next = t_end if k == n_steps - 1 else t0 + (k + 1) * dt
        h = t_next - t
        deriv(x, t, k1v, qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
              bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell)
        for i in range(dim):
            tmp[i] = x[i] + 0.5 * h * k1v[i]
        deriv(tmp, t + 0.5 * h, k2v, qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
              bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell)
        for i in range(dim):
            tmp[i] = x[i] + 0.5 * h * k2v[i]
        deriv(tmp, t + 0.5 * h, k3v, qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
              bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell)
        for i in range(dim):
            tmp[i] = x[i] + h * k3v[i]
        deriv(tmp, t + h, k4v, qd, J, Jmb_inv, delta, C, K, Lbar1, Lbar0, M, N, E0, Eb, dCdT,
              bias, amp, freq, phase, tone_axis, k1, k2, kad, adapt, n, r, nmu, ell)
        finite = True
        for i in range(dim):
            inc = (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            if not np.isfinite(inc):
                finite = False
            x[i] = x[i] + (h / 6.0) * inc
        if not finite:
            return x, n_rec, max_drift, DIVERGED, t
        nq = np.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3])
        drift = abs(nq - 1.0)
        if drift > max_drift:
            max_drift = drift
        for i in range(4):
            x[i] = x[i] / nq
        if (k_global0 + k + 1) % decim == 0:
            rec_buf[n_rec, 0] = t_next
            rec_buf[n_rec, 1:] = x
            n_rec += 1
    return x, n_rec, max_drift, OK, t_end
