"""Implicit method-of-lines core for the trap-coupled diffusion equation.

Second-order central differences in space on a fixed grid; variable-step
BDF1/BDF2 in time with a damped-free Newton solve of the nonlinear capacity
bracket at every step and a linear-predictor error estimate for step control.
The whole time loop is compiled so that thousands of solves stay cheap.

Trap terms are evaluated on max(theta, 0): the capacity bracket would turn
singular for the slightly negative values transient overshoot can produce.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NEWTON_FAIL = 1
STATUS_MAX_STEPS = 2

TRACE_LEN = 32


@njit(cache=True)
def _fluxes(theta, n, h, D, theta_l0):
    # one-sided second-order differences; boundary values are zero
    grad_r = (3.0 * theta[n - 1] - 4.0 * theta[n - 2] + theta[n - 3]) / (2.0 * h)
    grad_l = (-3.0 * theta[0] + 4.0 * theta[1] - theta[2]) / (2.0 * h)
    j_right = -D * theta_l0 * grad_r
    j_left = D * theta_l0 * grad_l
    return j_left, j_right


@njit(cache=True)
def _boundary_trap_content(h, K, n_bar, theta_l0):
    # trapezoid half-weights of the two faces at uniform unit occupancy
    total = 0.0
    for i in range(K.size):
        occ = K[i] * theta_l0 / (1.0 + K[i] * theta_l0)
        total += n_bar[i] * h * occ
    return total


@njit(cache=True)
def _inventory(theta, n, h, K, n_bar, theta_l0):
    lat = 0.0
    for k in range(1, n - 1):
        lat += theta[k]
    total = theta_l0 * h * lat
    for i in range(K.size):
        occ = 0.0
        for k in range(1, n - 1):
            tl = theta_l0 * max(theta[k], 0.0)
            occ += K[i] * tl / (1.0 + K[i] * tl)
        total += n_bar[i] * h * occ
    return total


@njit(cache=True)
def integrate_tds(
    n,
    q_bar,
    phi_bar,
    theta_l0,
    dh_bar,
    n_bar,
    t_end,
    rtol,
    atol,
    dt0,
    dt_min,
    max_steps,
):
    h = 1.0 / (n - 1)
    h2 = h * h
    ntr = dh_bar.size
    m = n - 2  # interior unknowns

    theta = np.ones(n)
    theta[0] = 0.0
    theta[n - 1] = 0.0
    theta_prev = theta.copy()

    rec_t = np.zeros(max_steps + 1)
    rec_jl = np.zeros(max_steps + 1)
    rec_jr = np.zeros(max_steps + 1)
    rec_inv = np.zeros(max_steps + 1)
    rec_des = np.zeros(max_steps + 1)

    trace_t = np.zeros(TRACE_LEN)
    trace_dt = np.zeros(TRACE_LEN)
    trace_code = np.zeros(TRACE_LEN, dtype=np.int64)
    trace_k = 0

    K = np.empty(ntr)
    for i in range(ntr):
        K[i] = np.exp(-dh_bar[i])  # T_bar = 1 at t = 0
    D = np.exp(-q_bar)
    jl, jr = _fluxes(theta, n, h, D, theta_l0)
    rec_t[0] = 0.0
    rec_jl[0] = jl
    rec_jr[0] = jr
    # reference inventory of the pre-quench state (uniform occupancy, before
    # the boundary condition removes the face content); the startup flux
    # spike carries exactly that face content out
    uniform = np.ones(n)
    rec_inv[0] = _inventory(uniform, n, h, K, n_bar, theta_l0) + theta_l0 * h + (
        _boundary_trap_content(h, K, n_bar, theta_l0)
    )
    rec_des[0] = 0.0
    nrec = 1
    jtot_prev = jl + jr
    desorbed = 0.0

    thn = np.empty(n)
    pred = np.empty(n)
    rhs_hist = np.empty(m)
    g_vec = np.empty(m)
    diag = np.empty(m)
    cp = np.empty(m)
    dp = np.empty(m)

    t = 0.0
    dt = dt0
    dt_prev = -1.0
    dt_max = t_end / 50.0
    n_accepted = 0
    attempts = 0

    while t < t_end * (1.0 - 1e-14):
        attempts += 1
        if attempts > 4 * max_steps or n_accepted >= max_steps:
            return (
                rec_t, rec_jl, rec_jr, rec_inv, rec_des, nrec,
                trace_t, trace_dt, trace_code, trace_k, STATUS_MAX_STEPS,
            )
        if dt > t_end - t:
            dt = t_end - t
        t_new = t + dt
        t_bar = 1.0 + phi_bar * t_new
        D = np.exp(-q_bar / t_bar)
        for i in range(ntr):
            K[i] = np.exp(-dh_bar[i] / t_bar)
        dcoef = D / h2

        if dt_prev > 0.0:
            rho = dt / dt_prev
            a_c = (1.0 + 2.0 * rho) / (1.0 + rho)
            b_c = 1.0 + rho
            e_c = rho * rho / (1.0 + rho)
        else:
            a_c = 1.0
            b_c = 1.0
            e_c = 0.0

        for k in range(n):
            if dt_prev > 0.0:
                p = theta[k] + (theta[k] - theta_prev[k]) * (dt / dt_prev)
            else:
                p = theta[k]
            pred[k] = p
            thn[k] = p
        thn[0] = 0.0
        thn[n - 1] = 0.0
        pred[0] = 0.0
        pred[n - 1] = 0.0
        for k in range(m):
            rhs_hist[k] = b_c * theta[k + 1] - e_c * theta_prev[k + 1]

        converged = False
        for _it in range(8):
            # residual and Jacobian diagonal over the interior
            phit2 = phi_bar / (t_bar * t_bar)
            for k in range(m):
                th = thn[k + 1]
                thp = th if th > 0.0 else 0.0
                cap = 1.0   # capacity bracket
                dcap = 0.0  # d(cap)/d(theta)
                s_val = 0.0
                ds_val = 0.0
                for i in range(ntr):
                    kt = K[i] * theta_l0
                    den = 1.0 + kt * thp
                    den2 = den * den
                    kn = K[i] * n_bar[i]
                    cap += kn / den2
                    s_val += thp * kn * dh_bar[i] / den2
                    if th > 0.0:
                        den3 = den2 * den
                        dcap += -2.0 * kt * kn / den3
                        ds_val += kn * dh_bar[i] * (1.0 - kt * thp) / den3
                s_val *= phit2
                ds_val *= phit2
                bdf = (a_c * th - rhs_hist[k]) / dt
                lap = (thn[k] - 2.0 * th + thn[k + 2]) / h2
                g_vec[k] = cap * bdf + s_val - D * lap
                diag[k] = dcap * bdf + cap * a_c / dt + ds_val + 2.0 * dcoef
            # Thomas solve: (-dcoef, diag, -dcoef) delta = -g
            cp[0] = -dcoef / diag[0]
            dp[0] = -g_vec[0] / diag[0]
            for k in range(1, m):
                denom = diag[k] + dcoef * cp[k - 1]
                cp[k] = -dcoef / denom
                dp[k] = (-g_vec[k] + dcoef * dp[k - 1]) / denom
            delta_last = dp[m - 1]
            wrms = 0.0
            thn[m] += delta_last
            prev_delta = delta_last
            # back substitution with on-the-fly update and norm
            sc = atol + rtol * abs(thn[m])
            wrms += (prev_delta / sc) ** 2
            for k in range(m - 2, -1, -1):
                d_k = dp[k] - cp[k] * prev_delta
                thn[k + 1] += d_k
                sc = atol + rtol * abs(thn[k + 1])
                wrms += (d_k / sc) ** 2
                prev_delta = d_k
            wrms = np.sqrt(wrms / m)
            if not np.isfinite(wrms):
                break
            if wrms < 0.1:
                converged = True
                break

        if not converged:
            trace_t[trace_k % TRACE_LEN] = t
            trace_dt[trace_k % TRACE_LEN] = dt
            trace_code[trace_k % TRACE_LEN] = 1
            trace_k += 1
            dt *= 0.25
            if dt < dt_min:
                return (
                    rec_t, rec_jl, rec_jr, rec_inv, rec_des, nrec,
                    trace_t, trace_dt, trace_code, trace_k, STATUS_NEWTON_FAIL,
                )
            continue

        err = 0.0
        for k in range(1, n - 1):
            sc = atol + rtol * abs(thn[k])
            err += ((thn[k] - pred[k]) / sc) ** 2
        err = 0.5 * np.sqrt(err / m)
        if err > 1.0:
            trace_t[trace_k % TRACE_LEN] = t
            trace_dt[trace_k % TRACE_LEN] = dt
            trace_code[trace_k % TRACE_LEN] = 2
            trace_k += 1
            fac = 0.85 / np.sqrt(err)
            if fac < 0.2:
                fac = 0.2
            dt *= fac
            if dt < dt_min:
                return (
                    rec_t, rec_jl, rec_jr, rec_inv, rec_des, nrec,
                    trace_t, trace_dt, trace_code, trace_k, STATUS_NEWTON_FAIL,
                )
            continue

        # accept
        for k in range(n):
            theta_prev[k] = theta[k]
            theta[k] = thn[k]
        t = t_new
        dt_prev = dt
        jl, jr = _fluxes(theta, n, h, D, theta_l0)
        jtot = jl + jr
        desorbed += 0.5 * dt * (jtot_prev + jtot)
        jtot_prev = jtot
        rec_t[nrec] = t
        rec_jl[nrec] = jl
        rec_jr[nrec] = jr
        rec_inv[nrec] = _inventory(theta, n, h, K, n_bar, theta_l0)
        rec_des[nrec] = desorbed
        nrec += 1
        n_accepted += 1

        if err < 1e-10:
            fac = 2.0
        else:
            fac = 0.85 / np.sqrt(err)
            if fac > 2.0:
                fac = 2.0
            elif fac < 0.3:
                fac = 0.3
        dt *= fac
        if dt > dt_max:
            dt = dt_max

    return (
        rec_t, rec_jl, rec_jr, rec_inv, rec_des, nrec,
        trace_t, trace_dt, trace_code, trace_k, STATUS_OK,
    )
