"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` must agree with them
to rounding.
"""

import numpy as np
from scipy.special import exp1


def weighted_covariance(Y, weights):
    """Sum over frames of ``weights[f, t] * y y^H``.

    Y: complex (F, T, M); weights: real (F, T). Returns complex (F, M, M).
    """
    return np.einsum("ft,ftm,ftn->fmn", weights, Y, Y.conj(), optimize=True)


def omlsa_gains(
    power,
    gain_floor,
    dd_alpha,
    noise_alpha,
    presence_threshold,
    smooth_alpha,
    presence_alpha,
    min_window,
    xi_min,
    snr_floor,
    p_min,
    p_max,
):
    """Per-cell OMLSA gains for a (T, F) power spectrogram.

    Noise PSD follows minima-controlled recursive averaging: the power,
    smoothed over neighbouring bins with [1/4, 1/2, 1/4] and then over time, is
    compared with its minimum over the last ``min_window``
    frames, the thresholded ratio drives a smoothed presence estimate, and
    that estimate slows the noise update where speech is likely.
    """
    T, F = power.shape
    gains = np.empty((T, F))
    history = np.empty((min_window, F))
    smoothed = _smooth_bins(power[0])
    noise = power[0].copy()
    history[:] = smoothed
    presence = np.zeros(F)
    dd_term = np.ones(F)
    for t in range(T):
        p = power[t]
        if t:
            smoothed = smooth_alpha * smoothed + (1.0 - smooth_alpha) * _smooth_bins(p)
            history[t % min_window] = smoothed
        s_min = history.min(axis=0)
        present = smoothed > presence_threshold * s_min
        presence = presence_alpha * presence + (1.0 - presence_alpha) * present
        if t:
            a = noise_alpha + (1.0 - noise_alpha) * presence
            noise = a * noise + (1.0 - a) * p
        gamma = np.maximum(p / np.maximum(noise, 1e-300), snr_floor)
        xi = dd_alpha * dd_term + (1.0 - dd_alpha) * np.maximum(gamma - 1.0, 0.0)
        xi = np.maximum(xi, xi_min)
        v = gamma * xi / (1.0 + xi)
        g_h1 = xi / (1.0 + xi) * np.exp(0.5 * exp1(v))
        g_h1 = np.clip(g_h1, gain_floor, 1.0)
        q = np.clip(1.0 - presence, p_min, p_max)
        spp = 1.0 / (1.0 + q / (1.0 - q) * (1.0 + xi) * np.exp(-v))
        spp = np.clip(spp, p_min, p_max)
        # the product lies in [gain_floor, 1]; clip away pow() rounding
        gains[t] = np.clip(g_h1**spp * gain_floor ** (1.0 - spp), gain_floor, 1.0)
        dd_term = g_h1**2 * gamma
    return gains


def _smooth_bins(p):
    if p.size < 2:
        return p.copy()
    out = np.empty_like(p)
    out[1:-1] = 0.25 * p[:-2] + 0.5 * p[1:-1] + 0.25 * p[2:]
    out[0] = 0.5 * (p[0] + p[1])
    out[-1] = 0.5 * (p[-1] + p[-2])
    return out
