"""Single-channel OMLSA post-filter.

Gain per cell: G = G_H1^p * G_min^(1-p), where G_H1 is the MMSE
log-spectral-amplitude gain driven by a decision-directed a-priori SNR and p
is the speech-presence probability. The noise PSD comes from a
minima-controlled recursive average with one minimum window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .stft import MultichannelSpectrogram

__all__ = ["OmlsaConfig", "omlsa_gains", "omlsa_denoise"]


@dataclass(frozen=True)
class OmlsaConfig:
    gain_floor: float = 10 ** (-25 / 20)
    dd_alpha: float = 0.92
    noise_alpha: float = 0.95
    # smoothed power over its running minimum; MCRA's delta
    presence_threshold: float = 5.0
    smooth_alpha: float = 0.8
    presence_alpha: float = 0.2
    min_window_s: float = 1.5
    snr_floor: float = 1e-6
    p_min: float = 0.005
    p_max: float = 0.995

    def __post_init__(self):
        if not 0 < self.gain_floor < 1:
            raise ValueError(f"gain_floor must be in (0, 1), got {self.gain_floor}")
        for name in ("dd_alpha", "noise_alpha", "smooth_alpha", "presence_alpha"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.presence_threshold <= 0 or self.min_window_s <= 0:
            raise ValueError("presence_threshold and min_window_s must be positive")

    @property
    def xi_min(self) -> float:
        return self.gain_floor**2

    def min_window_frames(self, sample_rate: int, hop: int) -> int:
        return max(1, int(round(self.min_window_s * sample_rate / hop)))


def omlsa_gains(spec: MultichannelSpectrogram, cfg: OmlsaConfig | None = None,
                backend: str | None = None) -> np.ndarray:
    """(T, F) real gains in [gain_floor, 1] for a single-channel spectrogram."""
    cfg = cfg or OmlsaConfig()
    if spec.num_channels != 1:
        raise ValueError(f"OMLSA needs a single-channel spectrogram, got {spec.num_channels}")
    if not np.all(np.isfinite(spec.data)):
        raise ValueError("spectrogram contains non-finite values")
    power = np.abs(spec.data[0]) ** 2
    window = cfg.min_window_frames(spec.config.sample_rate, spec.config.hop)
    return _backend.omlsa_gains(
        power,
        cfg.gain_floor, cfg.dd_alpha, cfg.noise_alpha, cfg.presence_threshold,
        cfg.smooth_alpha, cfg.presence_alpha, window, cfg.xi_min,
        cfg.snr_floor, cfg.p_min, cfg.p_max,
        backend=backend,
    )


def omlsa_denoise(spec: MultichannelSpectrogram, cfg: OmlsaConfig | None = None,
                  backend: str | None = None) -> MultichannelSpectrogram:
    """Apply OMLSA gains to magnitudes; the input phase is kept."""
    gains = omlsa_gains(spec, cfg, backend)
    return spec.replace(spec.data * gains[None])
