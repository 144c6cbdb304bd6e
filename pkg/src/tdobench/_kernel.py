"""Compiled inner loop of the circuit integrator.

State is (v, i_L, v_dc): tank voltage relative to the bias node, inductor
current and bias-node voltage. Node equations:

    C(v_dc) * dv_node/dt = i_L - I_D(v_node) - [I_leak(V_VD + v) - I_leak(V_VD)] + i_n
    L * di_L/dt          = v_dc - v_node - R_loss * i_L
    C_dec * dv_dc/dt     = (V_src(t) - v_dc) / R_bias - i_L

with v_node = v_dc + v.
"""

import math

import numpy as np
from numba import njit

DIODE_ANALYTIC = 0
DIODE_PCHIP = 1
DIODE_NONE = 2


@njit(cache=True)
def diode_eval(kind, p, xk, ck, v):
    if kind == DIODE_ANALYTIC:
        x = v / p[1]
        return p[0] * x * math.exp(1.0 - x) + p[2] * math.expm1(v / p[3])
    if kind == DIODE_NONE:
        return 0.0
    n = xk.size
    if v <= xk[0]:
        return ck[3, 0] + ck[2, 0] * (v - xk[0])
    if v >= xk[n - 1]:
        # linear continuation with the end slope of the last cubic piece
        h = xk[n - 1] - xk[n - 2]
        j = n - 2
        y = ck[3, j] + h * (ck[2, j] + h * (ck[1, j] + h * ck[0, j]))
        s = ck[2, j] + h * (2.0 * ck[1, j] + 3.0 * h * ck[0, j])
        return y + s * (v - xk[n - 1])
    j = np.searchsorted(xk, v, side="right") - 1
    d = v - xk[j]
    return ck[3, j] + d * (ck[2, j] + d * (ck[1, j] + d * ck[0, j]))


@njit(cache=True)
def leak_eval(lv, li, v):
    if lv.size == 0:
        return 0.0
    return np.interp(v, lv, li)


@njit(cache=True)
def _rhs(v, il, vdc, vsrc, inoise, kind, p, xk, ck, lv, li, vvd, ileak0,
         c_fixed, jc0, jvd, ctherm, ind, rloss, rbias, cdec):
    c = c_fixed
    if jc0 > 0.0:
        c += jc0 / math.sqrt(1.0 - vdc / jvd)
    c *= ctherm
    vnode = vdc + v
    i_d = diode_eval(kind, p, xk, ck, vnode)
    i_leak = leak_eval(lv, li, vvd + v) - ileak0
    dvnode = (il - i_d - i_leak + inoise) / c
    dil = (vdc - vnode - rloss * il) / ind
    dvdc = ((vsrc - vdc) / rbias - il) / cdec
    return dvnode - dvdc, dil, dvdc, i_d


@njit(cache=True)
def _vsrc(t, vbase, rip_f, rip_a):
    s = vbase
    for m in range(rip_f.size):
        s += rip_a[m] * math.sin(2.0 * math.pi * rip_f[m] * t)
    return s


@njit(cache=True)
def integrate(state, t0, dt, nsteps, decim, inoise, vwalk, vbias, rip_f, rip_a,
              kind, p, xk, ck, lv, li, vvd, c_fixed, jc0, jvd, ctherm,
              ind, rloss, rbias, cdec, out, acc_start):
    """Advance ``state`` in place by ``nsteps`` RK4 steps.

    Every ``decim``-th post-step tank voltage goes to ``out``. From step
    ``acc_start`` on, diode current and bias-node voltage are accumulated.
    Returns (status, sum_id, sum_vdc, n_acc); status -1 on non-finite state.
    """
    v, il, vdc = state[0], state[1], state[2]
    ileak0 = leak_eval(lv, li, vvd)
    sum_id = 0.0
    sum_vdc = 0.0
    n_acc = 0
    k_out = 0
    for k in range(nsteps):
        t = t0 + k * dt
        i_n = inoise[k]
        vb = vbias + vwalk[k]
        vs0 = _vsrc(t, vb, rip_f, rip_a)
        vsh = _vsrc(t + 0.5 * dt, vb, rip_f, rip_a)
        vs1 = _vsrc(t + dt, vb, rip_f, rip_a)
        a1, b1, c1, i_d = _rhs(v, il, vdc, vs0, i_n, kind, p, xk, ck, lv, li, vvd, ileak0,
                               c_fixed, jc0, jvd, ctherm, ind, rloss, rbias, cdec)
        a2, b2, c2, _ = _rhs(v + 0.5 * dt * a1, il + 0.5 * dt * b1, vdc + 0.5 * dt * c1, vsh, i_n,
                             kind, p, xk, ck, lv, li, vvd, ileak0,
                             c_fixed, jc0, jvd, ctherm, ind, rloss, rbias, cdec)
        a3, b3, c3, _ = _rhs(v + 0.5 * dt * a2, il + 0.5 * dt * b2, vdc + 0.5 * dt * c2, vsh, i_n,
                             kind, p, xk, ck, lv, li, vvd, ileak0,
                             c_fixed, jc0, jvd, ctherm, ind, rloss, rbias, cdec)
        a4, b4, c4, _ = _rhs(v + dt * a3, il + dt * b3, vdc + dt * c3, vs1, i_n,
                             kind, p, xk, ck, lv, li, vvd, ileak0,
                             c_fixed, jc0, jvd, ctherm, ind, rloss, rbias, cdec)
        if k >= acc_start:
            sum_id += i_d
            sum_vdc += vdc
            n_acc += 1
        v += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        il += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        vdc += dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if not (math.isfinite(v) and math.isfinite(il) and math.isfinite(vdc)):
            state[0], state[1], state[2] = v, il, vdc
            return -1, sum_id, sum_vdc, n_acc
        if (k + 1) % decim == 0:
            out[k_out] = v
            k_out += 1
    state[0], state[1], state[2] = v, il, vdc
    return 0, sum_id, sum_vdc, n_acc
