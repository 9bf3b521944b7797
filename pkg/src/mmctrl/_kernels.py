"""Compiled inner loops for the scenario engine.

The supervisory logic here mirrors `mmctrl.supervisor` exactly (modes as
ints: 0=N0, 1=N1, 2=E; pedal categories 0..3); the test suite cross-checks
the two implementations on random input sequences.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_STEP_LIMIT = 2


@njit(cache=True)
def durand_kerner(c, roots, tol, max_iter):
    """Simultaneous Weierstrass iteration on a monic polynomial.

    ``c`` holds monic coefficients (highest first), ``roots`` the starting
    points (updated in place).  Returns the final maximum update size.
    """
    d = roots.shape[0]
    delta_max = np.inf
    for _ in range(max_iter):
        delta_max = 0.0
        for i in range(d):
            z = roots[i]
            p = c[0]
            for k in range(1, c.shape[0]):
                p = p * z + c[k]
            denom = 1.0 + 0.0j
            for j in range(d):
                if j != i:
                    denom *= z - roots[j]
            step = p / denom
            roots[i] = z - step
            a = abs(step)
            if a > delta_max:
                delta_max = a
        if delta_max < tol:
            break
    return delta_max


@njit(cache=True)
def bpp_category(p, c1, c2, c3):
    if p < c1:
        return 0
    if p < c2:
        return 1
    if p < c3:
        return 2
    return 3


@njit(cache=True)
def supervisor_step(mode, pending, streak, v, cat, v1, v2, v1d, v2d, K):
    """Returns (mode, pending, streak); pending == -1 means none."""
    med_high = cat >= 2
    low_mild = cat <= 1
    low_mid = cat <= 2

    tau_e = v >= v2 and med_high
    if mode != 2 and tau_e:
        return 2, -1, 0
    if mode == 0:
        tau_n1 = (v < v1 and cat == 3) or (v1 <= v < v2 and med_high) \
            or (v >= v2 and low_mild)
        if tau_n1:
            return 1, -1, 0
        return 0, -1, 0
    if mode == 1:
        down = (v < v1d and low_mid) or (v1d <= v < v2d and low_mild)
        target = 0
    else:
        down = (v < v1d and cat == 3) or (v1d <= v < v2d and med_high) \
            or (v >= v2d and low_mild)
        target = 1
    if down:
        if pending == target:
            streak += 1
        else:
            streak = 1
        if streak >= K:
            return target, -1, 0
        return mode, target, streak
    return mode, -1, 0


@njit(cache=True, inline="always")
def _deriv(V, w, Mb, m, R, J, FN, beta_lo, beta_hi):
    """(dV, dw); beta_lo is the low-slip slope alpha, beta_hi the offset."""
    Vs = V if V > 1e-6 else 1e-6
    lam = 1.0 - w * R / Vs
    if lam < 0.0:
        lam = 0.0
    elif lam > 1.0:
        lam = 1.0
    if lam <= 0.2:
        mu = beta_lo * lam
    else:
        mu = -0.5 * lam + 0.75 + beta_hi
    dV = -FN * mu / m
    dw = R * FN * mu / J - Mb / J
    return dV, dw


@njit(cache=True)
def rk4_substeps(V, w, x, Mb, dt, nsub, m, R, J, FN, alpha, beta, rest_speed):
    """Advance (V, omega, distance) by nsub held-torque RK4 steps."""
    for _ in range(nsub):
        k1V, k1w = _deriv(V, w, Mb, m, R, J, FN, alpha, beta)
        k2V, k2w = _deriv(V + 0.5 * dt * k1V, w + 0.5 * dt * k1w, Mb, m, R, J, FN, alpha, beta)
        k3V, k3w = _deriv(V + 0.5 * dt * k2V, w + 0.5 * dt * k2w, Mb, m, R, J, FN, alpha, beta)
        k4V, k4w = _deriv(V + dt * k3V, w + dt * k3w, Mb, m, R, J, FN, alpha, beta)
        x += dt / 6.0 * (V + 2.0 * (V + 0.5 * dt * k1V) + 2.0 * (V + 0.5 * dt * k2V)
                         + (V + dt * k3V))
        V += dt / 6.0 * (k1V + 2.0 * k2V + 2.0 * k3V + k4V)
        w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if V <= 0.0:
            V = 0.0
            w = 0.0
            break
        if w < 0.0:
            w = 0.0
        elif w > V / R:
            w = V / R
        if V <= rest_speed:
            break
    return V, w, x


@njit(cache=True)
def braking_run(v0, lambda_d, bpp_raw,
                m, R, J, FN, alpha, beta,
                Kp, Ki, Kd, mb_max,
                multimode, fixed_T,
                pN0, pN1, pE, v1, v2, v1d, v2d, c1, c2, c3, K, start_mode,
                nsub, rest_speed, t_max,
                t_out, V_out, w_out, lam_out, mb_out, mode_out, per_out):
    """Panic/constant-pressure braking run until rest or the time cap.

    Records one row per control cycle.  Returns
    (n_rows, stopping_distance, status).
    """
    max_steps = t_out.shape[0]
    V = v0
    w = v0 / R          # rolling without slip at brake application
    x = 0.0
    tcur = 0.0
    u_prev = 0.0
    e_prev = 0.0
    e_prev2 = 0.0
    mode = start_mode
    pending = -1
    streak = 0
    cat = bpp_category(bpp_raw, c1, c2, c3)
    n = 0
    lam = 0.0
    while V > rest_speed and tcur < t_max:
        if n >= max_steps:
            return n, x, STATUS_STEP_LIMIT
        lam = 1.0 - w * R / V
        if lam < 0.0:
            lam = 0.0
        elif lam > 1.0:
            lam = 1.0
        if multimode:
            mode, pending, streak = supervisor_step(
                mode, pending, streak, V * 3.6, cat, v1, v2, v1d, v2d, K)
            T = pN0 if mode == 0 else (pN1 if mode == 1 else pE)
        else:
            T = fixed_T
        e = lambda_d - lam
        u = u_prev + Kp * (e - e_prev) + Ki * T * e_prev \
            + (Kd / T) * (e - 2.0 * e_prev + e_prev2)
        if u < 0.0:
            u = 0.0
        elif u > mb_max:
            u = mb_max
        e_prev2 = e_prev
        e_prev = e
        u_prev = u

        t_out[n] = tcur
        V_out[n] = V
        w_out[n] = w
        lam_out[n] = lam
        mb_out[n] = u
        mode_out[n] = mode if multimode else -1
        per_out[n] = T
        n += 1

        V, w, x = rk4_substeps(V, w, x, u, T / nsub, nsub,
                               m, R, J, FN, alpha, beta, rest_speed)
        if not (np.isfinite(V) and np.isfinite(w) and np.isfinite(x)):
            return n, x, STATUS_BLOWUP
        tcur += T

    # closing row: at rest the slip is pinned to 1
    if n < max_steps:
        t_out[n] = tcur
        V_out[n] = V
        w_out[n] = w
        lam_out[n] = 1.0 if V <= rest_speed else lam_out[n - 1]
        mb_out[n] = u_prev
        mode_out[n] = mode if multimode else -1
        per_out[n] = per_out[n - 1] if n > 0 else fixed_T
        n += 1
    return n, x, STATUS_OK


@njit(cache=True)
def cruise_run(tp, vp, bp,
               m, R, J, FN, alpha, beta,
               Kp, Ki, Kd, mb_max, lambda_d,
               pN0, pN1, pE, v1, v2, v1d, v2d, c1, c2, c3, K, start_mode,
               nsub, trace_stride,
               t_out, V_out, w_out, lam_out, mb_out, mode_out, per_out,
               trans_t, trans_mode):
    """Supervised cruise along a drive profile.

    The supervisor reads the profile velocity (linearly interpolated) and the
    row pedal pressure.  During braking intervals (bpp > 0) the wheel dynamics
    are integrated with the profile velocity imposed; otherwise the wheel rolls
    freely.  Records a decimated trace plus the full mode-transition log.
    Returns (n_trace_rows, n_transitions, dwell_seconds[3], status).
    """
    n_rows = tp.shape[0]
    t_end = tp[n_rows - 1]
    mode = start_mode
    pending = -1
    streak = 0
    dwell = np.zeros(3)
    u_prev = 0.0
    e_prev = 0.0
    e_prev2 = 0.0
    w = vp[0] / 3.6 / R

    tcur = tp[0]
    row = 0
    n = 0
    ntr = 0
    trans_t[ntr] = tcur
    trans_mode[ntr] = mode
    ntr += 1
    step_i = 0
    while tcur < t_end:
        while row + 1 < n_rows - 1 and tp[row + 1] <= tcur:
            row += 1
        # linear interpolation of the profile velocity, km/h
        t0 = tp[row]
        t1 = tp[row + 1]
        frac = (tcur - t0) / (t1 - t0)
        v_kmh = vp[row] + frac * (vp[row + 1] - vp[row])
        bpp = bp[row]
        cat = bpp_category(bpp, c1, c2, c3)

        new_mode, pending, streak = supervisor_step(
            mode, pending, streak, v_kmh, cat, v1, v2, v1d, v2d, K)
        if new_mode != mode:
            mode = new_mode
            if ntr < trans_t.shape[0]:
                trans_t[ntr] = tcur
                trans_mode[ntr] = mode
                ntr += 1
        T = pN0 if mode == 0 else (pN1 if mode == 1 else pE)
        dwell[mode] += T

        V = v_kmh / 3.6
        if V < 0.1:
            V = 0.1
        if bpp > 0.0:
            lam = 1.0 - w * R / V
            if lam < 0.0:
                lam = 0.0
            elif lam > 1.0:
                lam = 1.0
            e = lambda_d * bpp - lam
            u = u_prev + Kp * (e - e_prev) + Ki * T * e_prev \
                + (Kd / T) * (e - 2.0 * e_prev + e_prev2)
            if u < 0.0:
                u = 0.0
            elif u > mb_max:
                u = mb_max
            e_prev2 = e_prev
            e_prev = e
            u_prev = u
            dt = T / nsub
            for _ in range(nsub):
                k1 = _wheel_deriv(V, w, u, m, R, J, FN, alpha, beta)
                k2 = _wheel_deriv(V, w + 0.5 * dt * k1, u, m, R, J, FN, alpha, beta)
                k3 = _wheel_deriv(V, w + 0.5 * dt * k2, u, m, R, J, FN, alpha, beta)
                k4 = _wheel_deriv(V, w + dt * k3, u, m, R, J, FN, alpha, beta)
                w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if w < 0.0:
                    w = 0.0
                elif w > V / R:
                    w = V / R
            if not np.isfinite(w):
                return n, ntr, dwell, STATUS_BLOWUP
        else:
            w = V / R
            lam = 0.0
            u = 0.0
            u_prev = 0.0
            e_prev = 0.0
            e_prev2 = 0.0

        if step_i % trace_stride == 0 and n < t_out.shape[0]:
            t_out[n] = tcur
            V_out[n] = V
            w_out[n] = w
            lam_out[n] = 1.0 - w * R / V if V > 0 else 1.0
            mb_out[n] = u
            mode_out[n] = mode
            per_out[n] = T
            n += 1
        tcur += T
        step_i += 1

    if ntr < trans_t.shape[0]:
        trans_t[ntr] = t_end
        trans_mode[ntr] = mode
        ntr += 1
    return n, ntr, dwell, STATUS_OK


@njit(cache=True, inline="always")
def _wheel_deriv(V, w, Mb, m, R, J, FN, alpha, beta):
    lam = 1.0 - w * R / V
    if lam < 0.0:
        lam = 0.0
    elif lam > 1.0:
        lam = 1.0
    if lam <= 0.2:
        mu = alpha * lam
    else:
        mu = -0.5 * lam + 0.75 + beta
    return R * FN * mu / J - Mb / J
