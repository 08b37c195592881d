"""Oracle masks, mask error, and mask-weighted spatial covariances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .linalg import LOADING, hermitize
from .stft import MultichannelSpectrogram

__all__ = [
    "TFMask",
    "CovarianceSet",
    "irm",
    "psm",
    "mask_mse",
    "estimate_covariances",
    "oracle_mask",
]

LOW_MASS_FRACTION = 1e-3


@dataclass(frozen=True)
class TFMask:
    """Real (frames, bins) weights in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.data, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"mask must be (frames, bins), got shape {m.shape}")
        if not np.all((m >= 0) & (m <= 1)):
            raise ValueError("mask values must be finite and within [0, 1]")
        object.__setattr__(self, "data", m)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def shape(self):
        return self.data.shape

    def complement(self) -> "TFMask":
        return TFMask(1.0 - self.data)


@dataclass(frozen=True)
class CovarianceSet:
    """Per-bin speech and noise spatial covariances, each shaped (F, M, M).

    ``speech_mass``/``noise_mass`` hold the per-bin mask sums and
    ``speech_flagged``/``noise_flagged`` mark bins whose mass was too low and
    fell back to a loaded sample covariance.
    """

    speech: np.ndarray
    noise: np.ndarray
    speech_mass: np.ndarray | None = None
    noise_mass: np.ndarray | None = None
    speech_flagged: np.ndarray | None = None
    noise_flagged: np.ndarray | None = None

    def __post_init__(self):
        for name in ("speech", "noise"):
            x = np.asarray(getattr(self, name), dtype=np.complex128)
            if x.ndim == 2:
                x = x[None]
            if x.ndim != 3 or x.shape[-1] != x.shape[-2]:
                raise ValueError(f"{name} covariances must be (F, M, M), got {x.shape}")
            if not np.all(np.isfinite(x)):
                raise ValueError(f"{name} covariances contain non-finite values")
            object.__setattr__(self, name, x)
        if self.speech.shape != self.noise.shape:
            raise ValueError("speech and noise covariances differ in shape")

    @property
    def num_bins(self) -> int:
        return self.speech.shape[0]

    @property
    def num_channels(self) -> int:
        return self.speech.shape[-1]

    @property
    def flagged_bins(self) -> list[int]:
        flags = np.zeros(self.num_bins, dtype=bool)
        for f in (self.speech_flagged, self.noise_flagged):
            if f is not None:
                flags |= f
        return np.flatnonzero(flags).tolist()


def _as_2d(x, name):
    if isinstance(x, MultichannelSpectrogram):
        if x.num_channels != 1:
            raise ValueError(f"{name}: pass a single channel (use .channel(i))")
        x = x.data[0]
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be (frames, bins), got shape {x.shape}")
    return x


def irm(target, noise) -> TFMask:
    """|s| / (|s| + |n|); cells where both are zero get 0."""
    s = np.abs(_as_2d(target, "target"))
    n = np.abs(_as_2d(noise, "noise"))
    if s.shape != n.shape:
        raise ValueError(f"shape mismatch: target {s.shape} vs noise {n.shape}")
    den = s + n
    out = np.divide(s, den, out=np.zeros_like(s), where=den > 0)
    return TFMask(out)


def psm(target, mixture) -> TFMask:
    """|s| cos(angle(y) - angle(s)) / |y| truncated to [0, 1]; 0 where |y| = 0."""
    s = _as_2d(target, "target")
    y = _as_2d(mixture, "mixture")
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: target {s.shape} vs mixture {y.shape}")
    ay = np.abs(y)
    # |s| cos(dphi) / |y| == Re(s conj(y / |y|)) / |y|; no |y|^2 so tiny |y| cannot underflow
    nz = ay > 0
    # componentwise, since complex division overflows on subnormal magnitudes
    ur = np.divide(y.real, ay, out=np.zeros_like(ay), where=nz)
    ui = np.divide(y.imag, ay, out=np.zeros_like(ay), where=nz)
    with np.errstate(over="ignore"):
        raw = np.divide(s.real * ur + s.imag * ui, ay, out=np.zeros_like(ay), where=nz)
    return TFMask(np.clip(raw, 0.0, 1.0))


def oracle_mask(kind: str, target: MultichannelSpectrogram, mixture: MultichannelSpectrogram,
                channel: int = 0) -> TFMask:
    """IRM or PSM of ``target`` within ``mixture`` on one channel.

    The noise for the IRM is the residual ``mixture - target``.
    """
    s = target.data[channel]
    y = mixture.data[channel]
    if kind == "irm":
        return irm(s, y - s)
    if kind == "psm":
        return psm(s, y)
    raise ValueError(f"unknown oracle mask {kind!r}")


def mask_mse(estimate, target) -> float:
    """Mean squared difference between two masks."""
    a = np.asarray(estimate, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _masked_covariance(Y, mask, loading):
    T = Y.shape[1]
    mass = mask.sum(axis=1)
    acc = _backend.weighted_covariance(Y, mask)
    flagged = mass < LOW_MASS_FRACTION * T
    cov = acc / np.maximum(mass, np.finfo(float).tiny)[:, None, None]
    if flagged.any():
        plain = _backend.weighted_covariance(Y[flagged], np.ones((flagged.sum(), T))) / T
        scale = np.trace(plain, axis1=-2, axis2=-1).real / Y.shape[-1]
        scale = np.where(scale > 0, loading * scale, 1.0)
        cov[flagged] = plain + scale[:, None, None] * np.eye(Y.shape[-1])
    return hermitize(cov), mass, flagged


def estimate_covariances(spec: MultichannelSpectrogram, speech_mask, noise_mask=None,
                         loading: float = LOADING) -> CovarianceSet:
    """Mask-weighted covariance per bin: sum_t m y y^H / sum_t m.

    ``noise_mask`` defaults to the complement of ``speech_mask``. Bins whose
    mask mass is below 1e-3 * T fall back to the identity-loaded sample
    covariance and are flagged.
    """
    ms = np.asarray(speech_mask, dtype=np.float64)
    mn = 1.0 - ms if noise_mask is None else np.asarray(noise_mask, dtype=np.float64)
    shape = (spec.num_frames, spec.num_bins)
    for name, m in (("speech_mask", ms), ("noise_mask", mn)):
        if m.shape != shape:
            raise ValueError(f"{name} shape {m.shape} does not match spectrogram {shape}")
    Y = np.ascontiguousarray(spec.data.transpose(2, 1, 0))  # (F, T, M)
    phi_s, mass_s, flag_s = _masked_covariance(Y, np.ascontiguousarray(ms.T), loading)
    phi_n, mass_n, flag_n = _masked_covariance(Y, np.ascontiguousarray(mn.T), loading)
    return CovarianceSet(phi_s, phi_n, mass_s, mass_n, flag_s, flag_n)
