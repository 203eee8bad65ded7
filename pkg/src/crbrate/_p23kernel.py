"""Compiled deep-cut ellipsoid search for the linearized beamforming feasibility problem.

Mirrors ``beamforming._P23Oracle`` plus ``ellipsoid.find_feasible`` in one
jitted loop; the Python versions remain the reference.  Variable layout is
``[Re w, Im w, diag S, Re S_ij (i<j), Im S_ij (i<j)]``.
"""

import math

import numpy as np
from numba import njit

FEASIBLE, INFEASIBLE, EXHAUSTED = 0, 1, 2


@njit(cache=True)
def _decode(x, n):
    w = np.empty(n, dtype=np.complex128)
    for i in range(n):
        w[i] = x[i] + 1j * x[n + i]
    s = np.zeros((n, n), dtype=np.complex128)
    b = 2 * n
    for i in range(n):
        s[i, i] = x[b + i]
    m = n * (n - 1) // 2
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            z = x[b + n + p] + 1j * x[b + n + m + p]
            s[i, j] = z
            s[j, i] = z.conjugate()
            p += 1
    return w, s


@njit(cache=True)
def _s_gradient(g, n, out):
    """Write the layout gradient of ``S -> tr(G S)`` into the S block of ``out``."""
    b = 2 * n
    m = n * (n - 1) // 2
    for i in range(b):
        out[i] = 0.0
    for i in range(n):
        out[b + i] = g[i, i].real
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            out[b + n + p] = 2.0 * g[i, j].real
            out[b + n + m + p] = 2.0 * g[i, j].imag
            p += 1


@njit(cache=True)
def search(center, shape, t, sinr_grad, q_grad, psi_grad, psi_const, power_grad,
           sigma2, gamma, power, eps_pd, n, max_iter, min_log_volume):
    """Return ``(status, x, iterations)``."""
    dim = center.shape[0]
    users = q_grad.shape[0]
    c = center.copy()
    p_mat = shape.copy()
    logvol = 0.0
    for i in range(dim):
        logvol += 0.5 * math.log(p_mat[i, i])  # the start is axis-aligned
    g_crb = np.empty(dim)
    g_psd = np.empty(dim)
    f = np.empty(users + 3)
    nn = float(dim)
    for it in range(max_iter):
        w, s = _decode(c, n)
        # SINR targets (affine in x)
        for k in range(users):
            qx = 0.0
            px = 0.0
            for j in range(dim):
                qx += q_grad[k, j] * c[j]
                px += psi_grad[k, j] * c[j]
            f[k] = t * (qx + sigma2) - (1.0 + t) * (px - psi_const[k])
        # CRB budget, guarded by a positive-definiteness cut
        ev, u = np.linalg.eigh(s)
        if ev[0] <= eps_pd:
            v = u[:, 0]
            f[users] = eps_pd - ev[0]
            _s_gradient(-np.outer(v, v.conj()), n, g_crb)
        else:
            acc = 0.0
            for j in range(n):
                acc += 1.0 / ev[j]
            f[users] = acc - gamma
            inv2 = (u / (ev * ev)) @ u.conj().T
            _s_gradient(-inv2, n, g_crb)
        # power
        tr = 0.0
        for j in range(n):
            tr += s[j, j].real
        f[users + 1] = tr - power
        # S - w w^H >= 0
        ev2, u2 = np.linalg.eigh(s - np.outer(w, w.conj()))
        v2 = u2[:, 0]
        vv = np.outer(v2, v2.conj())
        f[users + 2] = -ev2[0]
        _s_gradient(-vv, n, g_psd)
        vw = vv @ w
        for j in range(n):
            g_psd[j] = 2.0 * vw[j].real
            g_psd[n + j] = 2.0 * vw[j].imag

        # deepest violated cut
        best = -1
        best_depth = -1.0
        best_width = 0.0
        for k in range(users + 3):
            if f[k] <= 0.0:
                continue
            if k < users:
                g = sinr_grad[k]
            elif k == users:
                g = g_crb
            elif k == users + 1:
                g = power_grad
            else:
                g = g_psd
            width = math.sqrt(max(g @ (p_mat @ g), 1e-300))
            depth = f[k] / width
            if depth > best_depth:
                best, best_depth, best_width = k, depth, width
        if best < 0:
            return FEASIBLE, c, it
        if best_depth >= 1.0:
            return INFEASIBLE, c, it + 1
        if best < users:
            g = sinr_grad[best]
        elif best == users:
            g = g_crb
        elif best == users + 1:
            g = power_grad
        else:
            g = g_psd
        alpha = best_depth
        step = (p_mat @ g) / best_width
        c = c - (1.0 + nn * alpha) / (nn + 1.0) * step
        coef = 2.0 * (1.0 + nn * alpha) / ((nn + 1.0) * (1.0 + alpha))
        scale = nn * nn * (1.0 - alpha * alpha) / (nn * nn - 1.0)
        p_mat = scale * (p_mat - coef * np.outer(step, step))
        p_mat = 0.5 * (p_mat + p_mat.T)
        logvol += 0.5 * (nn * math.log(scale) + math.log1p(-coef))
        if logvol < min_log_volume:
            return EXHAUSTED, c, it + 1
    return EXHAUSTED, c, max_iter
