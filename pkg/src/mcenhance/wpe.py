"""Weighted prediction error dereverberation (multichannel, per frequency bin).

For each bin the late reverberation of every channel is predicted from a
delayed stack of past multichannel frames, with the prediction filter fitted
by power-weighted least squares and the weights re-estimated from the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .stft import MultichannelSpectrogram

__all__ = ["WpeConfig", "WpeError", "wpe_dereverb", "wpe", "delayed_stack"]

POWER_FLOOR = 1e-10


class WpeError(ValueError):
    pass


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 10
    delay: int = 3
    iterations: int = 3
    regularization: float = 1e-6

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ValueError("taps, delay and iterations must all be >= 1")
        if not self.regularization > 0:
            raise ValueError("regularization must be positive")


def delayed_stack(Y, taps, delay):
    """Tap-stacked past frames.

    Y: (F, M, T) -> (F, M*taps, T) where rows ``k*M:(k+1)*M`` hold
    ``y_{t - delay - k}`` (zeros before the start).
    """
    F, M, T = Y.shape
    out = np.zeros((F, taps, M, T), dtype=Y.dtype)
    for k in range(taps):
        shift = delay + k
        if shift < T:
            out[:, k, :, shift:] = Y[..., : T - shift]
    return out.reshape(F, taps * M, T)


def wpe(Y, taps=10, delay=3, iterations=3, regularization=1e-6):
    """Array-level WPE on Y shaped (F, M, T).

    Returns ``(X, G, power)``: the dereverberated signal, the prediction
    filters (F, M*taps, M) and the per-frame power weights (F, T) used in the
    last filter estimate.
    """
    F, M, T = Y.shape
    Yt = delayed_stack(Y, taps, delay)
    X = Y
    dim = M * taps
    G = np.zeros((F, dim, M), dtype=np.complex128)
    power = np.ones((F, T))
    eye = np.eye(dim)
    for _ in range(iterations):
        power = np.mean(np.abs(X) ** 2, axis=1)
        mean = power.mean(axis=1, keepdims=True)
        # silent bins have an all-zero stack; any positive floor keeps them at zero
        power = np.maximum(power, POWER_FLOOR * np.where(mean > 0, mean, 1.0))
        Yw = Yt / power[:, None, :]
        Rm = np.einsum("fat,fbt->fab", Yw, Yt.conj())
        P = np.einsum("fat,fmt->fam", Yw, Y.conj())
        load = regularization * np.trace(Rm, axis1=1, axis2=2).real / dim
        load = np.where(load > 0, load, 1.0)
        for f in range(F):
            A = 0.5 * (Rm[f] + Rm[f].conj().T) + load[f] * eye
            G[f] = cho_solve(cho_factor(A, lower=True), P[f])
        X = Y - np.einsum("fam,fat->fmt", G.conj(), Yt)
    return X, G, power


def wpe_dereverb(spec: MultichannelSpectrogram, cfg: WpeConfig | None = None) -> MultichannelSpectrogram:
    """Dereverberate all channels; output has the input's shape."""
    cfg = cfg or WpeConfig()
    M, T, F = spec.data.shape
    if T <= cfg.delay + cfg.taps:
        raise WpeError(f"need more than delay + taps = {cfg.delay + cfg.taps} frames, got {T}")
    if not np.all(np.isfinite(spec.data)):
        raise WpeError("spectrogram contains non-finite values")
    Y = np.ascontiguousarray(spec.data.transpose(2, 0, 1))
    if not np.any(Y):
        return spec.replace(np.zeros_like(spec.data))
    X, _, _ = wpe(Y, cfg.taps, cfg.delay, cfg.iterations, cfg.regularization)
    return spec.replace(X.transpose(1, 2, 0))

