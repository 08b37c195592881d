"""Mask-based beamformers: MVDR, PMWF-beta, GEV with BAN, and their application.

Weights are stored as complex (F, M) arrays and applied as ``w^H y`` per bin.
Noise covariances go through :func:`linalg.condition` before any solve, which
leaves well-conditioned matrices untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import LOADING, cholesky, condition, hermitian, hermitize, solve_hpd
from .masks import CovarianceSet
from .stft import MultichannelSpectrogram

__all__ = [
    "SteeringVector",
    "BeamformerWeights",
    "BeamformerError",
    "steering_vector",
    "mvdr_weights",
    "pmwf_weights",
    "gev_weights",
    "ban_postfilter",
    "select_reference",
    "apply_beamformer",
    "rayleigh_quotient",
]

KINDS = ("mvdr", "pmwf", "gev", "gev_ban")


class BeamformerError(ValueError):
    """Weights cannot be computed for some bins."""

    def __init__(self, message, bins=()):
        self.bins = list(bins)
        super().__init__(f"{message} (bins {self.bins[:10]}{'...' if len(self.bins) > 10 else ''})")


@dataclass(frozen=True)
class SteeringVector:
    d: np.ndarray
    reference: int = 0


@dataclass(frozen=True)
class BeamformerWeights:
    w: np.ndarray
    kind: str
    beta: float | None = None
    reference: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        w = np.asarray(self.w, dtype=np.complex128)
        if w.ndim != 2:
            raise ValueError(f"weights must be (F, M), got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise BeamformerError("non-finite weights", np.flatnonzero(~np.isfinite(w).all(-1)))
        object.__setattr__(self, "w", w)


def _fix_phase(v, reference):
    """Rotate each row so its ``reference`` entry is real and non-negative."""
    ref = v[:, reference]
    mag = np.abs(ref)
    rot = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1.0), 1.0)
    out = v * rot[:, None]
    out[:, reference] = mag  # exactly real, without rounding residue
    return out


def _check_finite(x, what):
    bad = ~np.isfinite(x).reshape(x.shape[0], -1).all(-1)
    if bad.any():
        raise BeamformerError(f"non-finite {what}", np.flatnonzero(bad))


def _noise(cov: CovarianceSet, loading):
    _check_finite(cov.noise, "noise covariance")
    return condition(cov.noise, loading)


def steering_vector(cov: CovarianceSet, reference: int = 0) -> SteeringVector:
    """Principal eigenvector of each speech covariance, unit norm, phase-fixed.

    Ties between equal top eigenvalues resolve to whatever column the
    Hermitian eigensolver returns last; the phase fix makes it reproducible.
    """
    _check_finite(cov.speech, "speech covariance")
    _, vecs = np.linalg.eigh(hermitize(cov.speech))
    d = vecs[..., -1]
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return SteeringVector(_fix_phase(d, reference), reference)


def mvdr_weights(cov: CovarianceSet, d: SteeringVector | np.ndarray,
                 reference: int | None = None, loading: float = LOADING) -> BeamformerWeights:
    """w = Phi_n^-1 d / (d^H Phi_n^-1 d), so that w^H d = 1.

    With ``reference`` set the weights are rescaled by ``d[reference]`` so the
    output reproduces the target image at that microphone instead of the
    unit-norm steering direction.
    """
    dv = d.d if isinstance(d, SteeringVector) else np.asarray(d, dtype=np.complex128)
    phi_n = _noise(cov, loading)
    num = solve_hpd(phi_n, dv)
    den = np.einsum("fm,fm->f", dv.conj(), num)
    bad = ~(np.abs(den) > 0)
    if bad.any():
        raise BeamformerError("d^H Phi_n^-1 d vanishes", np.flatnonzero(bad))
    w = num / den[:, None]
    if reference is not None:
        w = w * np.conj(dv[:, reference])[:, None]
    return BeamformerWeights(w, "mvdr", reference=reference)


def pmwf_weights(cov: CovarianceSet, beta: float = 1.0, reference: int = 0,
                 loading: float = LOADING) -> BeamformerWeights:
    """w = Phi_n^-1 Phi_s u_r / (beta + tr(Phi_n^-1 Phi_s))."""
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    M = cov.num_channels
    if not 0 <= reference < M:
        raise ValueError(f"reference {reference} out of range for {M} channels")
    _check_finite(cov.speech, "speech covariance")
    ratio = solve_hpd(_noise(cov, loading), cov.speech)
    den = beta + np.trace(ratio, axis1=-2, axis2=-1)
    bad = ~(np.abs(den) > 0)
    if bad.any():
        raise BeamformerError("PMWF denominator vanishes", np.flatnonzero(bad))
    return BeamformerWeights(ratio[..., reference] / den[:, None], "pmwf",
                             beta=float(beta), reference=reference)


def gev_weights(cov: CovarianceSet, reference: int = 0,
                loading: float = LOADING) -> BeamformerWeights:
    """Principal generalized eigenvector of (Phi_s, Phi_n).

    The problem is reduced to an ordinary Hermitian one with the Cholesky
    factor L of Phi_n: C = L^-1 Phi_s L^-H, w = L^-H v. Vectors are unit-norm
    and phase-fixed at ``reference``.
    """
    _check_finite(cov.speech, "speech covariance")
    phi_n = _noise(cov, loading)
    try:
        L = cholesky(phi_n)
    except np.linalg.LinAlgError:
        bad = [f for f in range(phi_n.shape[0]) if np.linalg.eigvalsh(phi_n[f])[0] <= 0]
        raise BeamformerError("noise covariance not positive definite", bad) from None
    A = np.linalg.solve(L, hermitize(cov.speech))
    C = hermitize(np.linalg.solve(L, hermitian(A)))
    _, vecs = np.linalg.eigh(C)
    w = np.linalg.solve(hermitian(L), vecs[..., -1:])[..., 0]
    w = w / np.linalg.norm(w, axis=-1, keepdims=True)
    return BeamformerWeights(_fix_phase(w, reference), "gev", reference=reference)


def ban_postfilter(w: BeamformerWeights, cov: CovarianceSet,
                   floor: float = 1e-300) -> BeamformerWeights:
    """Scale each bin by sqrt(w^H Phi_n Phi_n w / M) / (w^H Phi_n w)."""
    if w.kind != "gev":
        raise ValueError(f"BAN applies to GEV weights, got {w.kind!r}")
    phi_n = hermitize(cov.noise)
    M = phi_n.shape[-1]
    nw = np.einsum("fmn,fn->fm", phi_n, w.w)
    num = np.einsum("fm,fm->f", nw.conj(), nw).real
    den = np.einsum("fm,fm->f", w.w.conj(), nw).real
    bad = ~(den > floor)
    if bad.any():
        raise BeamformerError("w^H Phi_n w below floor", np.flatnonzero(bad))
    g = np.sqrt(num / M) / den
    return BeamformerWeights(w.w * g[:, None], "gev_ban", reference=w.reference)


def select_reference(cov: CovarianceSet, floor: float = 1e-10) -> int:
    """Channel maximizing sum_f Phi_s[m, m] / Phi_n[m, m]; ties go to the lowest index."""
    ds = np.real(np.diagonal(cov.speech, axis1=-2, axis2=-1))
    dn = np.real(np.diagonal(cov.noise, axis1=-2, axis2=-1))
    snr = (ds / np.maximum(dn, floor)).sum(axis=0)
    return int(np.argmax(snr))


def apply_beamformer(w: BeamformerWeights, spec: MultichannelSpectrogram) -> MultichannelSpectrogram:
    """Single-channel output ``w_f^H y_{t,f}``."""
    F, M = w.w.shape
    if spec.num_channels != M or spec.num_bins != F:
        raise ValueError(
            f"weights are for {M} channels x {F} bins, spectrogram has "
            f"{spec.num_channels} x {spec.num_bins}"
        )
    out = np.einsum("fm,mtf->tf", w.w.conj(), spec.data)
    return spec.replace(out[None])


def rayleigh_quotient(w, A, B):
    """Per-bin w^H A w / w^H B w for (F, M) weights and (F, M, M) matrices."""
    w = w.w if isinstance(w, BeamformerWeights) else w
    num = np.einsum("fm,fmn,fn->f", w.conj(), A, w).real
    den = np.einsum("fm,fmn,fn->f", w.conj(), B, w).real
    return num / den
