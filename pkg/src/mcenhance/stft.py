"""Short-time Fourier transform, its inverse, and log-power features.

Spectrograms are stored as complex arrays shaped (channels, frames, bins).
Both analysis and synthesis apply the configured window (weighted
overlap-add), so a config is valid when the squared window satisfies the
constant-overlap-add condition for its hop.

The signal is reflect-padded by ``fft_size - hop`` on both sides, plus up to
``hop - 1`` zeros on the right so the last frame ends on the padded edge.
Every original sample is then covered by ``fft_size / hop`` frames and the
round trip is exact up to rounding over the whole signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .io import Waveform

__all__ = [
    "StftConfig",
    "MultichannelSpectrogram",
    "FeatureMatrix",
    "stft",
    "istft",
    "log_power_spectrogram",
    "apply_cmvn",
]

LOG_FLOOR = 1e-10
WINDOWS = ("hann", "sqrt_hann")


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 256
    window: str = "sqrt_hann"
    sample_rate: int = 16000

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if not 0 < self.hop <= n or n % self.hop:
            raise ValueError(f"hop must divide fft_size ({n}), got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.fft_size - self.hop

    def window_array(self) -> np.ndarray:
        w = get_window("hann", self.fft_size, fftbins=True)
        return np.sqrt(w) if self.window == "sqrt_hann" else w

    def overlap_gain(self) -> np.ndarray:
        """Sum of squared window shifts over one hop period."""
        w2 = self.window_array() ** 2
        return w2.reshape(-1, self.hop).sum(axis=0)

    def is_cola(self, rtol: float = 1e-10) -> bool:
        g = self.overlap_gain()
        return bool(g.min() > 0 and np.ptp(g) <= rtol * g.max())

    def num_frames(self, num_samples: int) -> int:
        padded = self._padded_length(num_samples)
        return 1 + (padded - self.fft_size) // self.hop

    def _padded_length(self, num_samples: int) -> int:
        base = num_samples + 2 * self.pad
        extra = -(base - self.fft_size) % self.hop if base >= self.fft_size else self.fft_size - base
        return base + extra


@dataclass(frozen=True)
class MultichannelSpectrogram:
    """Complex STFT data shaped (channels, frames, bins).

    ``length`` is the number of time-domain samples the spectrogram was
    computed from; :func:`istft` trims to it.
    """

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    length: int | None = None

    def __post_init__(self):
        x = np.asarray(self.data)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise ValueError(f"spectrogram must be (channels, frames, bins), got {x.shape}")
        if x.shape[2] != self.config.num_bins:
            raise ValueError(
                f"expected {self.config.num_bins} bins for fft_size "
                f"{self.config.fft_size}, got {x.shape[2]}"
            )
        object.__setattr__(self, "data", x.astype(np.complex128, copy=False))

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]

    def replace(self, data) -> "MultichannelSpectrogram":
        return MultichannelSpectrogram(data, self.config, self.length)

    def channel(self, index: int) -> "MultichannelSpectrogram":
        if not 0 <= index < self.num_channels:
            raise IndexError(f"channel {index} out of range for {self.num_channels} channels")
        return self.replace(self.data[index : index + 1])


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray
    normalized: bool = False


def stft(wave: Waveform, cfg: StftConfig | None = None) -> MultichannelSpectrogram:
    cfg = cfg or StftConfig(sample_rate=wave.sample_rate)
    x = wave.samples
    n = x.shape[1]
    if n == 0:
        raise ValueError("cannot transform an empty waveform")
    padded_len = cfg._padded_length(n)
    # reflect needs more than `pad` samples; shorter inputs are zero-padded
    mode = "reflect" if n > cfg.pad else "constant"
    xp = np.pad(x, ((0, 0), (cfg.pad, cfg.pad)), mode=mode)
    xp = np.pad(xp, ((0, 0), (0, padded_len - xp.shape[1])))
    frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.fft_size, axis=1)[:, :: cfg.hop]
    spec = np.fft.rfft(frames * cfg.window_array(), axis=-1)
    return MultichannelSpectrogram(spec, cfg, n)


def istft(spec: MultichannelSpectrogram, length: int | None = None) -> Waveform:
    cfg = spec.config
    if not cfg.is_cola():
        raise ValueError(
            f"window {cfg.window!r} with hop {cfg.hop} does not satisfy the "
            "overlap-add condition; reconstruction is not possible"
        )
    m, t, _ = spec.data.shape
    frames = np.fft.irfft(spec.data, n=cfg.fft_size, axis=-1) * cfg.window_array()
    out = np.zeros((m, (t - 1) * cfg.hop + cfg.fft_size))
    for i in range(t):
        out[:, i * cfg.hop : i * cfg.hop + cfg.fft_size] += frames[:, i]
    out /= cfg.overlap_gain()[0]
    length = length if length is not None else spec.length
    if length is None:
        length = out.shape[1] - 2 * cfg.pad
    return Waveform(out[:, cfg.pad : cfg.pad + length], cfg.sample_rate)


def apply_cmvn(x: np.ndarray) -> np.ndarray:
    """Utterance-level mean/variance normalization per column.

    Constant columns map to zero.
    """
    mu = x.mean(axis=0, keepdims=True)
    sd = x.std(axis=0, keepdims=True)
    return np.divide(x - mu, sd, out=np.zeros_like(x, dtype=np.float64), where=sd > LOG_FLOOR)


def log_power_spectrogram(
    spec: MultichannelSpectrogram, channel: int = 0, cmvn: bool = True
) -> FeatureMatrix:
    """(frames, bins) log power of one channel, optionally CMVN-normalized."""
    if not 0 <= channel < spec.num_channels:
        raise IndexError(f"channel {channel} out of range for {spec.num_channels} channels")
    feats = np.log(np.maximum(np.abs(spec.data[channel]) ** 2, LOG_FLOOR))
    if cmvn:
        return FeatureMatrix(apply_cmvn(feats), True)
    return FeatureMatrix(feats, False)
