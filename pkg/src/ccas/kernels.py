"""Hot numeric kernels: horizon rollout, its Jacobian, the local MPC
objective with its adjoint gradient, and the L-BFGS two-loop recursion.

Every kernel exists twice. The ``*_loops`` variants are written in the
explicit-loop style numba compiles well; the ``*_numpy`` variants vectorize
what can be vectorized and keep the inherently sequential recursions as
plain Python loops. ``USE_NUMBA`` (see :mod:`ccas._accel`) decides which set
is exported under the public names.

Array conventions
-----------------
``p0``      (3,)          path-frame state ``[x, y, chi]``
``u``       (N, 2)        inputs, columns ``[u_y, u_s]``
``vp``      (5,)          ``[U_d, dt, T1, Ke, chi_max]``
``w``       (8,)          ``[K_y, K_s, mu1, mu2, b2_r1, b2_r2, gamma_s, gamma_y]``
``nb_xy``   (M, N+1, 2)   neighbour positions in the own path frame
``nb_par``  (M, 4)        ``[K_ca, K_d, alpha_x, alpha_y]`` per neighbour
``target``  (N+1, 3)      consensus copy of the own trajectory
``z``       (N+1, 3)      multiplier, same layout as ``target``
"""

import math

import numpy as np

from ccas._accel import USE_NUMBA, njit

VP_UD, VP_DT, VP_T1, VP_KE, VP_CHIMAX = range(5)
W_KY, W_KS, W_MU1, W_MU2, W_R1, W_R2, W_GS, W_GY = range(8)


# ---------------------------------------------------------------------------
# loop implementations (compiled lazily on first call when numba is present)
# ---------------------------------------------------------------------------


@njit
def rollout_loops(p0, u, vp):
    n = u.shape[0]
    ud, dt, t1, ke, chimax = vp[0], vp[1], vp[2], vp[3], vp[4]
    a = dt / t1
    s = np.empty((n + 1, 3))
    s[0, 0] = p0[0]
    s[0, 1] = p0[1]
    s[0, 2] = p0[2]
    for k in range(n):
        x = s[k, 0]
        y = s[k, 1]
        chi = s[k, 2]
        chi_n = chi + a * (chimax * math.tanh(ke * (u[k, 0] - y)) - chi)
        v = dt * u[k, 1] * ud
        s[k + 1, 0] = x + v * math.cos(chi_n)
        s[k + 1, 1] = y + v * math.sin(chi_n)
        s[k + 1, 2] = chi_n
    return s


@njit
def rollout_jacobian_loops(p0, u, vp):
    n = u.shape[0]
    ud, dt, t1, ke, chimax = vp[0], vp[1], vp[2], vp[3], vp[4]
    a = dt / t1
    s = rollout_loops(p0, u, vp)
    jac = np.zeros((n + 1, 3, n, 2))
    for k in range(n):
        y = s[k, 1]
        chi_n = s[k + 1, 2]
        th = math.tanh(ke * (u[k, 0] - y))
        dsat = a * chimax * ke * (1.0 - th * th)
        v = dt * u[k, 1] * ud
        c = math.cos(chi_n)
        sn = math.sin(chi_n)
        # d chi' = (1 - a) d chi - dsat d y + dsat d u_y
        for i in range(k + 1):
            for m in range(2):
                dx = jac[k, 0, i, m]
                dy = jac[k, 1, i, m]
                dc = jac[k, 2, i, m]
                dchi = (1.0 - a) * dc - dsat * dy
                jac[k + 1, 2, i, m] = dchi
                jac[k + 1, 0, i, m] = dx - v * sn * dchi
                jac[k + 1, 1, i, m] = dy + v * c * dchi
        jac[k + 1, 2, k, 0] = dsat
        jac[k + 1, 0, k, 0] = -v * sn * dsat
        jac[k + 1, 1, k, 0] = v * c * dsat
        jac[k + 1, 0, k, 1] = dt * ud * c
        jac[k + 1, 1, k, 1] = dt * ud * sn
    return jac


@njit
def objective_gradient_loops(u, p0, vp, u_prev, nb_xy, nb_par, w, target, z, beta):
    n = u.shape[0]
    ud, dt, t1, ke, chimax = vp[0], vp[1], vp[2], vp[3], vp[4]
    a = dt / t1
    s = rollout_loops(p0, u, vp)
    grad = np.zeros((n, 2))
    dc = np.zeros((n + 1, 3))
    f = 0.0

    # collision risk over the N+1 predicted states, discount index k = m + 1
    for j in range(nb_xy.shape[0]):
        kca, kd, ax, ay = nb_par[j, 0], nb_par[j, 1], nb_par[j, 2], nb_par[j, 3]
        for m in range(n + 1):
            ddx = s[m, 0] - nb_xy[j, m, 0]
            ddy = s[m, 1] - nb_xy[j, m, 1]
            r = kca / math.sqrt(1.0 + kd * (m + 1)) * math.exp(-ddx * ddx / ax - ddy * ddy / ay)
            f += r
            dc[m, 0] -= 2.0 * ddx / ax * r
            dc[m, 1] -= 2.0 * ddy / ay * r

    # augmented Lagrangian coupling to the consensus copy
    if beta != 0.0:
        for m in range(n + 1):
            for c in range(3):
                res = s[m, c] - target[m, c]
                f += z[m, c] * res + 0.5 * beta * res * res
                dc[m, c] += z[m, c] + beta * res
    else:
        for m in range(n + 1):
            for c in range(3):
                res = s[m, c] - target[m, c]
                f += z[m, c] * res
                dc[m, c] += z[m, c]

    # adjoint sweep through the kinematics
    lx = dc[n, 0]
    ly = dc[n, 1]
    lc = dc[n, 2]
    for k in range(n - 1, -1, -1):
        y = s[k, 1]
        chi_n = s[k + 1, 2]
        th = math.tanh(ke * (u[k, 0] - y))
        dsat = a * chimax * ke * (1.0 - th * th)
        v = dt * u[k, 1] * ud
        c = math.cos(chi_n)
        sn = math.sin(chi_n)
        g_chi = lc - lx * v * sn + ly * v * c
        grad[k, 1] += (lx * c + ly * sn) * dt * ud
        grad[k, 0] += g_chi * dsat
        lx_new = dc[k, 0] + lx
        ly_new = dc[k, 1] + ly - g_chi * dsat
        lc_new = dc[k, 2] + g_chi * (1.0 - a)
        lx = lx_new
        ly = ly_new
        lc = lc_new

    # control effort and behaviour terms
    ky, ks, mu1, mu2 = w[0], w[1], w[2], w[3]
    r1, r2, gs, gy = w[4], w[5], w[6], w[7]
    prev = u_prev[0]
    for k in range(n):
        du = u[k, 0] - prev
        eb = math.exp(-du * du / gy)
        th2 = math.tanh(du + r2)
        f += ky * du * du + mu2 * (1.0 - eb) + r1 * du * (th2 + 1.0)
        d = 2.0 * ky * du + mu2 * 2.0 * du / gy * eb + r1 * ((th2 + 1.0) + du * (1.0 - th2 * th2))
        grad[k, 0] += d
        if k > 0:
            grad[k - 1, 0] -= d
        e = 1.0 - u[k, 1]
        es = math.exp(-e * e / gs)
        f += ks * e * e + mu1 * (1.0 - es)
        grad[k, 1] -= 2.0 * ks * e + mu1 * 2.0 * e / gs * es
        prev = u[k, 0]
    return f, grad


@njit
def lbfgs_direction_loops(g, s_hist, y_hist, order, free):
    """Two-loop recursion restricted to the ``free`` coordinates."""
    n = g.shape[0]
    q = np.empty(n)
    for i in range(n):
        q[i] = g[i] if free[i] else 0.0
    m = order.shape[0]
    alpha = np.zeros(m)
    rho = np.zeros(m)
    for idx in range(m - 1, -1, -1):
        r = order[idx]
        sy = 0.0
        sq = 0.0
        for i in range(n):
            if free[i]:
                sy += s_hist[r, i] * y_hist[r, i]
                sq += s_hist[r, i] * q[i]
        if sy > 1e-300:
            rho[idx] = 1.0 / sy
            alpha[idx] = rho[idx] * sq
            for i in range(n):
                if free[i]:
                    q[i] -= alpha[idx] * y_hist[r, i]
    gamma = 1.0
    if m > 0:
        r = order[m - 1]
        sy = 0.0
        yy = 0.0
        for i in range(n):
            if free[i]:
                sy += s_hist[r, i] * y_hist[r, i]
                yy += y_hist[r, i] * y_hist[r, i]
        if sy > 1e-300 and yy > 1e-300:
            gamma = sy / yy
    for i in range(n):
        q[i] *= gamma
    for idx in range(m):
        if rho[idx] == 0.0:
            continue
        r = order[idx]
        yq = 0.0
        for i in range(n):
            if free[i]:
                yq += y_hist[r, i] * q[i]
        b = rho[idx] * yq
        for i in range(n):
            if free[i]:
                q[i] += s_hist[r, i] * (alpha[idx] - b)
    for i in range(n):
        q[i] = -q[i]
    return q


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def rollout_numpy(p0, u, vp):
    ud, dt, t1, ke, chimax = (float(v) for v in vp)
    a = dt / t1
    n = u.shape[0]
    s = np.empty((n + 1, 3))
    s[0] = p0
    x, y, chi = float(p0[0]), float(p0[1]), float(p0[2])
    uy = u[:, 0].tolist()
    step_len = (dt * ud * u[:, 1]).tolist()
    for k in range(n):
        chi = chi + a * (chimax * math.tanh(ke * (uy[k] - y)) - chi)
        x = x + step_len[k] * math.cos(chi)
        y = y + step_len[k] * math.sin(chi)
        s[k + 1, 0] = x
        s[k + 1, 1] = y
        s[k + 1, 2] = chi
    return s


def rollout_jacobian_numpy(p0, u, vp):
    ud, dt, t1, ke, chimax = (float(v) for v in vp)
    a = dt / t1
    n = u.shape[0]
    s = rollout_numpy(p0, u, vp)
    th = np.tanh(ke * (u[:, 0] - s[:-1, 1]))
    dsat = a * chimax * ke * (1.0 - th * th)
    v = dt * ud * u[:, 1]
    c = np.cos(s[1:, 2])
    sn = np.sin(s[1:, 2])
    jac = np.zeros((n + 1, 3, n, 2))
    for k in range(n):
        prev = jac[k]
        dchi = (1.0 - a) * prev[2] - dsat[k] * prev[1]
        jac[k + 1, 2] = dchi
        jac[k + 1, 0] = prev[0] - v[k] * sn[k] * dchi
        jac[k + 1, 1] = prev[1] + v[k] * c[k] * dchi
        jac[k + 1, 2, k, 0] = dsat[k]
        jac[k + 1, 0, k, 0] = -v[k] * sn[k] * dsat[k]
        jac[k + 1, 1, k, 0] = v[k] * c[k] * dsat[k]
        jac[k + 1, 0, k, 1] = dt * ud * c[k]
        jac[k + 1, 1, k, 1] = dt * ud * sn[k]
    return jac


def objective_gradient_numpy(u, p0, vp, u_prev, nb_xy, nb_par, w, target, z, beta):
    ud, dt, t1, ke, chimax = (float(v) for v in vp)
    a = dt / t1
    n = u.shape[0]
    s = rollout_numpy(p0, u, vp)
    f = 0.0
    dc = np.zeros((n + 1, 3))

    if nb_xy.shape[0]:
        kca = nb_par[:, 0:1]
        kd = nb_par[:, 1:2]
        ax = nb_par[:, 2:3]
        ay = nb_par[:, 3:4]
        k = np.arange(1, n + 2)[None, :]
        ddx = s[None, :, 0] - nb_xy[:, :, 0]
        ddy = s[None, :, 1] - nb_xy[:, :, 1]
        r = kca / np.sqrt(1.0 + kd * k) * np.exp(-ddx**2 / ax - ddy**2 / ay)
        f += float(r.sum())
        dc[:, 0] -= (2.0 * ddx / ax * r).sum(axis=0)
        dc[:, 1] -= (2.0 * ddy / ay * r).sum(axis=0)

    res = s - target
    f += float(np.sum(z * res)) + 0.5 * beta * float(np.sum(res * res))
    dc += z + beta * res

    th = np.tanh(ke * (u[:, 0] - s[:-1, 1]))
    dsat = (a * chimax * ke * (1.0 - th * th)).tolist()
    v = (dt * ud * u[:, 1]).tolist()
    c = np.cos(s[1:, 2]).tolist()
    sn = np.sin(s[1:, 2]).tolist()
    dcl = dc.tolist()
    g_uy = [0.0] * n
    g_us = [0.0] * n
    lx, ly, lc = dcl[n]
    for k in range(n - 1, -1, -1):
        g_chi = lc - lx * v[k] * sn[k] + ly * v[k] * c[k]
        g_us[k] = (lx * c[k] + ly * sn[k]) * dt * ud
        g_uy[k] = g_chi * dsat[k]
        lx, ly, lc = (
            dcl[k][0] + lx,
            dcl[k][1] + ly - g_chi * dsat[k],
            dcl[k][2] + g_chi * (1.0 - a),
        )
    grad = np.column_stack([g_uy, g_us]).astype(float)

    ky, ks, mu1, mu2, r1, r2, gs, gy = (float(v) for v in w)
    du = np.diff(u[:, 0], prepend=u_prev[0])
    eb = np.exp(-du * du / gy)
    th2 = np.tanh(du + r2)
    f += float(np.sum(ky * du * du + mu2 * (1.0 - eb) + r1 * du * (th2 + 1.0)))
    d = 2.0 * ky * du + mu2 * 2.0 * du / gy * eb + r1 * ((th2 + 1.0) + du * (1.0 - th2 * th2))
    grad[:, 0] += d
    grad[:-1, 0] -= d[1:]
    e = 1.0 - u[:, 1]
    es = np.exp(-e * e / gs)
    f += float(np.sum(ks * e * e + mu1 * (1.0 - es)))
    grad[:, 1] -= 2.0 * ks * e + mu1 * 2.0 * e / gs * es
    return f, grad


def lbfgs_direction_numpy(g, s_hist, y_hist, order, free):
    q = np.where(free, g, 0.0)
    fm = free.astype(float)
    rows = [(s_hist[r] * fm, y_hist[r] * fm) for r in order]
    alphas = []
    for s, y in reversed(rows):
        sy = float(s @ y)
        if sy > 1e-300:
            alpha = float(s @ q) / sy
            q = q - alpha * y
            alphas.append((alpha, 1.0 / sy))
        else:
            alphas.append((0.0, 0.0))
    alphas.reverse()
    if rows:
        s, y = rows[-1]
        sy, yy = float(s @ y), float(y @ y)
        if sy > 1e-300 and yy > 1e-300:
            q = q * (sy / yy)
    for (s, y), (alpha, rho) in zip(rows, alphas):
        if rho == 0.0:
            continue
        b = rho * float(y @ q)
        q = q + s * (alpha - b)
    return -q


LOOP_KERNELS = {
    "rollout": rollout_loops,
    "rollout_jacobian": rollout_jacobian_loops,
    "objective_gradient": objective_gradient_loops,
    "lbfgs_direction": lbfgs_direction_loops,
}
NUMPY_KERNELS = {
    "rollout": rollout_numpy,
    "rollout_jacobian": rollout_jacobian_numpy,
    "objective_gradient": objective_gradient_numpy,
    "lbfgs_direction": lbfgs_direction_numpy,
}

ACTIVE = LOOP_KERNELS if USE_NUMBA else NUMPY_KERNELS
BACKEND = "numba" if USE_NUMBA else "numpy"

rollout = ACTIVE["rollout"]
rollout_jacobian = ACTIVE["rollout_jacobian"]
objective_gradient = ACTIVE["objective_gradient"]
lbfgs_direction = ACTIVE["lbfgs_direction"]
