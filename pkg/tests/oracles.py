"""Independent reference implementations used to check the package.

These deliberately avoid calling package code so that a shared bug cannot
make both sides agree.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares


def tunnel_current(v, ip, vp, i0, vt):
    return ip * (v / vp) * math.exp(1 - v / vp) + i0 * (math.exp(v / vt) - 1)


def central_slope(fn, v, h=1e-6):
    return (fn(v + h) - fn(v - h)) / (2 * h)


def lc_frequency(l, c):
    return 1 / (2 * math.pi * math.sqrt(l * c))


def naive_dft_power_dbm(x, n_fft, z=50.0):
    """Direct O(N^2) evaluation of the DFT, RMS amplitude and dBm per bin."""
    n = len(x)
    k = np.arange(n_fft // 2 + 1)[:, None]
    m = np.arange(n)[None, :]
    xk = (np.asarray(x)[None, :] * np.exp(-2j * np.pi * k * m / n_fft)).sum(axis=1)
    rms = np.abs(xk) / (math.sqrt(2) * n / 2)
    rms[0] /= math.sqrt(2)
    if n_fft % 2 == 0:
        rms[-1] /= math.sqrt(2)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(rms ** 2 / (1e-3 * z))


def tank_ode_reference(t_end, y0, c_total, l, r_loss, diode=None, v_bias=0.0):
    """Two-state tank with an ideal bias source, integrated by DOP853."""
    def rhs(t, y):
        v, i = y
        i_d = diode(v_bias + v) - diode(v_bias) if diode else 0.0
        return [(i - i_d) / c_total, (-v - r_loss * i) / l]
    return solve_ivp(rhs, (0, t_end), y0, method="DOP853", rtol=1e-11, atol=1e-15,
                     dense_output=True)


def fit_oracle(v, f, l, vd, x0=(5.0, 5.0)):
    """(C, C0) in pF by scipy's trust-region least squares."""
    def res(p):
        return 1 / (2 * np.pi * np.sqrt(l * (p[0] + p[1] / np.sqrt(1 - v / vd)) * 1e-12)) - f
    sol = least_squares(res, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return sol.x
