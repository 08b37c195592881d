"""Mixture simulation, level control, energy VAD, and SNR.

A mixture is target + summed interferers + noise. The target-to-interference
ratio (called SDR here) is measured against the summed interferers; the
target-to-noise ratio is SNR. Both are drawn uniformly per mixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .io import Waveform

__all__ = [
    "MixSpec",
    "MixtureRecord",
    "Segment",
    "energy",
    "level_db",
    "rescale_to_level",
    "fit_length",
    "mix",
    "spatialize",
    "energy_vad",
    "snr_db",
    "SNR_CAP_DB",
    "derive_seed",
]

SNR_CAP_DB = 300.0
INTERFERER_SPREAD_DB = 3.0


@dataclass(frozen=True)
class MixSpec:
    sdr_range: tuple = (0.0, 10.0)
    snr_range: tuple = (-5.0, 10.0)
    n_interferers: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("sdr_range", "snr_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a finite interval, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.n_interferers not in (1, 2):
            raise ValueError(f"n_interferers must be 1 or 2, got {self.n_interferers}")


@dataclass(frozen=True)
class MixtureRecord:
    mixture: Waveform
    target: Waveform
    interference_sum: Waveform
    noise: Waveform
    applied_sdr: float
    applied_snr: float
    seed: int
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    sample_rate: int

    @property
    def start_s(self) -> float:
        return self.start / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.end / self.sample_rate

    @property
    def duration(self) -> float:
        return (self.end - self.start) / self.sample_rate


def energy(x) -> float:
    x = x.samples if isinstance(x, Waveform) else np.asarray(x)
    return float(np.sum(np.square(x, dtype=np.float64)))


def level_db(a, b) -> float:
    """10 log10(E_a / E_b)."""
    return 10.0 * np.log10(energy(a) / energy(b))


def rescale_to_level(signal: Waveform, reference: Waveform, target_db: float) -> Waveform:
    """Scale ``signal`` so that 10 log10(E_reference / E_scaled) = target_db."""
    e_sig, e_ref = energy(signal), energy(reference)
    if e_sig <= 0:
        raise ValueError("cannot rescale a silent signal")
    if e_ref <= 0:
        raise ValueError("reference is silent")
    alpha = np.sqrt(e_ref / (e_sig * 10.0 ** (target_db / 10.0)))
    return Waveform(alpha * signal.samples, signal.sample_rate)


def fit_length(wave: Waveform, length: int, rng: np.random.Generator) -> Waveform:
    """Loop a short signal or take a random crop of a long one."""
    n = wave.num_samples
    if n == 0:
        raise ValueError("cannot fit an empty signal")
    x = wave.samples
    if n < length:
        x = np.tile(x, (1, -(-length // n)))
    start = int(rng.integers(0, x.shape[1] - length + 1))
    return Waveform(x[:, start : start + length], wave.sample_rate)


def mix(target: Waveform, interferers, noise: Waveform, spec: MixSpec | None = None) -> MixtureRecord:
    """Scale and sum stems at SDR/SNR drawn uniformly from ``spec``'s ranges.

    With two interferers the second is first set within +-3 dB of the first,
    then their sum is scaled to the drawn SDR. Reproducible per ``spec.seed``.
    """
    spec = spec or MixSpec()
    interferers = list(interferers)
    if not 1 <= len(interferers) <= 2:
        raise ValueError(f"need 1 or 2 interferers, got {len(interferers)}")
    if energy(target) <= 0:
        raise ValueError("target is silent")
    rng = np.random.default_rng(spec.seed)
    n = target.num_samples
    sr = target.sample_rate
    stems = [fit_length(w, n, rng) for w in interferers]
    noise = fit_length(noise, n, rng)
    for w in stems + [noise]:
        if w.num_channels != target.num_channels:
            raise ValueError("all stems must have the target's channel count")
        if energy(w) <= 0:
            raise ValueError("interferer or noise stem is silent")
    sdr = float(rng.uniform(*spec.sdr_range))
    snr = float(rng.uniform(*spec.snr_range))
    extra = {}
    if len(stems) == 2:
        rel = float(rng.uniform(-INTERFERER_SPREAD_DB, INTERFERER_SPREAD_DB))
        stems[1] = rescale_to_level(stems[1], stems[0], rel)
        extra["interferer_relative_db"] = rel
    isum = Waveform(sum(w.samples for w in stems), sr)
    isum = rescale_to_level(isum, target, sdr)
    noise = rescale_to_level(noise, target, snr)
    mixture = Waveform((target.samples + isum.samples) + noise.samples, sr)
    return MixtureRecord(mixture, target, isum, noise, sdr, snr, spec.seed, extra)


def spatialize(source: Waveform, filters) -> Waveform:
    """Convolve a mono source with one FIR per output channel (M, L)."""
    h = np.atleast_2d(np.asarray(filters, dtype=np.float64))
    x = source.samples[0]
    out = np.stack([np.convolve(x, hm)[: x.size] for hm in h])
    return Waveform(out, source.sample_rate)


def energy_vad(wave: Waveform, frame_ms: float = 25.0, threshold_db: float = 40.0,
               min_segment_s: float = 2.0, hop_ms: float = 10.0) -> list[Segment]:
    """Active segments: frames within ``threshold_db`` of the loudest frame.

    Adjacent active frames merge; a segment runs from its first frame's start
    to its last frame's end. Segments shorter than ``min_segment_s`` are dropped.
    """
    if frame_ms <= 0 or hop_ms <= 0:
        raise ValueError("frame_ms and hop_ms must be positive")
    sr = wave.sample_rate
    x = np.sum(wave.samples**2, axis=0)
    n = x.size
    flen = max(1, int(round(frame_ms * sr / 1000)))
    hop = max(1, int(round(hop_ms * sr / 1000)))
    if n == 0:
        return []
    starts = np.arange(0, max(n - flen, 0) + 1, hop)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    ends = np.minimum(starts + flen, n)
    e = csum[ends] - csum[starts]
    peak = e.max()
    if peak <= 0:
        return []
    active = (e > 0) & (10 * np.log10(np.maximum(e, np.finfo(float).tiny) / peak) >= -threshold_db)
    segments = []
    i = 0
    while i < active.size:
        if not active[i]:
            i += 1
            continue
        j = i
        while j + 1 < active.size and active[j + 1]:
            j += 1
        seg = Segment(int(starts[i]), int(ends[j]), sr)
        if seg.duration >= min_segment_s:
            segments.append(seg)
        i = j + 1
    return segments


def snr_db(estimate, reference) -> float:
    """10 log10(E_ref / E_{est - ref}), capped at 300 dB."""
    est = estimate.samples if isinstance(estimate, Waveform) else np.asarray(estimate, dtype=float)
    ref = reference.samples if isinstance(reference, Waveform) else np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    e_ref = energy(ref)
    if e_ref <= 0:
        raise ValueError("reference is silent")
    e_err = energy(est - ref)
    if e_err <= 0:
        return SNR_CAP_DB
    return float(min(10.0 * np.log10(e_ref / e_err), SNR_CAP_DB))


def derive_seed(master: int, index: int) -> int:
    """Independent per-item seed from a master seed (SeedSequence spawn)."""
    child = np.random.SeedSequence(master, spawn_key=(index,))
    return int(child.generate_state(1, dtype=np.uint32)[0])
