# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback``."""

import numpy as np

from libc.math cimport exp, fmax, fmin, pow
from scipy.special.cython_special cimport exp1


def weighted_covariance(const double complex[:, :, ::1] Y, const double[:, ::1] weights):
    cdef Py_ssize_t F = Y.shape[0], T = Y.shape[1], M = Y.shape[2]
    cdef Py_ssize_t f, t, i, j
    cdef double w
    cdef double complex yi
    out = np.zeros((F, M, M), dtype=np.complex128)
    cdef double complex[:, :, ::1] R = out
    with nogil:
        for f in range(F):
            for t in range(T):
                w = weights[f, t]
                if w == 0.0:
                    continue
                for i in range(M):
                    yi = w * Y[f, t, i]
                    for j in range(i, M):
                        R[f, i, j] += yi * Y[f, t, j].conjugate()
            for i in range(M):
                for j in range(i + 1, M):
                    R[f, j, i] = R[f, i, j].conjugate()
                R[f, i, i] = R[f, i, i].real
    return out


def omlsa_gains(
    const double[:, ::1] power,
    double gain_floor,
    double dd_alpha,
    double noise_alpha,
    double presence_threshold,
    double smooth_alpha,
    double presence_alpha,
    Py_ssize_t min_window,
    double xi_min,
    double snr_floor,
    double p_min,
    double p_max,
):
    cdef Py_ssize_t T = power.shape[0], F = power.shape[1]
    cdef Py_ssize_t t, f, k, slot
    cdef double p, old, a, gamma, xi, v, g_h1, q, spp
    cdef double[::1] sp
    gains_arr = np.empty((T, F))
    history_arr = np.empty((min_window, F))
    sp_arr = np.empty(F)
    sp = sp_arr
    _smooth_bins(power[0], sp)
    smoothed_arr = sp_arr.copy()
    noise_arr = np.array(power[0], dtype=np.float64)
    presence_arr = np.zeros(F)
    dd_arr = np.ones(F)
    smin_arr = smoothed_arr.copy()
    cdef double[:, ::1] gains = gains_arr
    cdef double[:, ::1] history = history_arr
    cdef double[::1] smoothed = smoothed_arr
    cdef double[::1] noise = noise_arr
    cdef double[::1] presence = presence_arr
    cdef double[::1] dd_term = dd_arr
    cdef double[::1] s_min = smin_arr
    with nogil:
        for k in range(min_window):
            for f in range(F):
                history[k, f] = smoothed[f]
        for t in range(T):
            slot = t % min_window
            if t:
                _smooth_bins(power[t], sp)
            for f in range(F):
                p = power[t, f]
                if t:
                    smoothed[f] = smooth_alpha * smoothed[f] + (1.0 - smooth_alpha) * sp[f]
                    old = history[slot, f]
                    history[slot, f] = smoothed[f]
                    # running window minimum; rescan only when the minimum leaves
                    if smoothed[f] <= s_min[f]:
                        s_min[f] = smoothed[f]
                    elif old == s_min[f]:
                        s_min[f] = history[0, f]
                        for k in range(1, min_window):
                            if history[k, f] < s_min[f]:
                                s_min[f] = history[k, f]
                presence[f] = presence_alpha * presence[f] + (1.0 - presence_alpha) * (
                    1.0 if smoothed[f] > presence_threshold * s_min[f] else 0.0
                )
                if t:
                    a = noise_alpha + (1.0 - noise_alpha) * presence[f]
                    noise[f] = a * noise[f] + (1.0 - a) * p
                gamma = fmax(p / fmax(noise[f], 1e-300), snr_floor)
                xi = dd_alpha * dd_term[f] + (1.0 - dd_alpha) * fmax(gamma - 1.0, 0.0)
                xi = fmax(xi, xi_min)
                v = gamma * xi / (1.0 + xi)
                g_h1 = xi / (1.0 + xi) * exp(0.5 * exp1(v))
                g_h1 = fmin(fmax(g_h1, gain_floor), 1.0)
                q = fmin(fmax(1.0 - presence[f], p_min), p_max)
                spp = 1.0 / (1.0 + q / (1.0 - q) * (1.0 + xi) * exp(-v))
                spp = fmin(fmax(spp, p_min), p_max)
                gains[t, f] = fmin(fmax(pow(g_h1, spp) * pow(gain_floor, 1.0 - spp), gain_floor), 1.0)
                dd_term[f] = g_h1 * g_h1 * gamma
    return gains_arr


cdef void _smooth_bins(const double[::1] p, double[::1] out) noexcept nogil:
    cdef Py_ssize_t F = p.shape[0], f
    if F < 2:
        out[0] = p[0]
        return
    for f in range(1, F - 1):
        out[f] = 0.25 * p[f - 1] + 0.5 * p[f] + 0.25 * p[f + 1]
    out[0] = 0.5 * (p[0] + p[1])
    out[F - 1] = 0.5 * (p[F - 1] + p[F - 2])
