"""Two-component complex Gaussian mixture model for speech/noise masks.

Each bin f is modelled independently: y_{t,f} ~ 0.5 N(0, phi^s R^s) +
0.5 N(0, phi^n R^n), with per-frame scales phi and per-bin spatial
covariances R. Masks are the component posteriors.

The scale phi^k_{t,f} = y^H (R^k)^-1 y / M is the closed-form maximizer for
a given R, so it is recomputed from R each iteration and only R is carried.
Each iteration is an ECM step (update R with phi fixed, then re-profile phi),
which keeps the log-likelihood non-decreasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .linalg import LOADING, condition, hermitize, logdet_hpd, solve_hpd
from .masks import TFMask
from .stft import MultichannelSpectrogram

__all__ = ["CgmmParams", "CgmmResult", "CgmmError", "cgmm_fit", "cgmm_log_likelihood"]

SPEECH, NOISE = 0, 1
POSTERIOR_FLOOR = 1e-6
PHI_FLOOR = 1e-10


class CgmmError(ValueError):
    pass


@dataclass(frozen=True)
class CgmmParams:
    """``R``: (2, F, M, M) spatial covariances; ``phi``: (2, F, T) frame scales.

    Index 0 is speech, index 1 noise.
    """

    R: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class CgmmResult:
    speech_mask: TFMask
    noise_mask: TFMask
    log_likelihood_trace: list
    params: CgmmParams


def _frames_first(spec: MultichannelSpectrogram):
    return np.ascontiguousarray(spec.data.transpose(2, 1, 0))  # (F, T, M)


def _quad(Y, R):
    """y^H R^-1 y for Y (F, T, M) and R (F, M, M)."""
    X = solve_hpd(R[:, None], Y)
    return np.einsum("ftm,ftm->ft", Y.conj(), X).real


def _component_loglik(Y, R, phi):
    """log N(y | 0, phi R) per (f, t); R is (F, M, M), phi (F, T)."""
    M = Y.shape[-1]
    q = _quad(Y, R)
    logdet = logdet_hpd(R)
    return -M * np.log(np.pi) - M * np.log(phi) - logdet[:, None] - q / phi


def _profile_phi(Y, R, floor):
    M = Y.shape[-1]
    return np.maximum(_quad(Y, R) / M, floor)


def _mixture_loglik(Y, R, phi):
    ll = np.stack([_component_loglik(Y, R[k], phi[k]) for k in (0, 1)])
    return np.logaddexp(ll[0], ll[1]) + np.log(0.5), ll


def cgmm_log_likelihood(spec: MultichannelSpectrogram, params: CgmmParams) -> float:
    """Total log-likelihood sum_{t,f} log sum_k 0.5 N(y | 0, phi^k R^k)."""
    Y = _frames_first(spec)
    F, T, M = Y.shape
    R = np.asarray(params.R, dtype=np.complex128)
    phi = np.asarray(params.phi, dtype=np.float64)
    if R.shape != (2, F, M, M) or phi.shape != (2, F, T):
        raise ValueError(
            f"params shapes R {R.shape}, phi {phi.shape} do not match spectrogram (F={F}, T={T}, M={M})"
        )
    try:
        total, _ = _mixture_loglik(Y, R, phi)
    except np.linalg.LinAlgError:
        raise CgmmError("spatial covariance is singular") from None
    return float(total.sum())


def cgmm_fit(spec: MultichannelSpectrogram, iterations: int = 10, seed: int = 0,
             jitter: float = 0.0, loading: float = LOADING) -> CgmmResult:
    """Fit the mixture by EM and return speech/noise masks shaped (T, F).

    Initialization: speech R = per-bin sample covariance, noise R = identity.
    ``seed`` only matters when ``jitter > 0``, which perturbs the initial speech
    covariance by a random Hermitian matrix of that relative size.

    After the last iteration the components are relabelled per bin: the one
    whose posterior correlates better (Pearson, over frames) with the
    per-frame log-energy of the mixture is called speech.
    """
    M, T, F = spec.data.shape
    if M < 2:
        raise CgmmError(f"CGMM needs at least 2 channels, got {M}")
    if T < M:
        raise CgmmError(f"need at least {M} frames for {M} channels, got {T}")
    if iterations < 1:
        raise CgmmError("iterations must be >= 1")
    if not np.all(np.isfinite(spec.data)):
        raise CgmmError("spectrogram contains non-finite values")
    Y = _frames_first(spec)
    power = (np.abs(Y) ** 2).sum(-1)  # (F, T)
    bin_power = power.mean(axis=1)
    if not np.any(bin_power > 0):
        raise CgmmError("degenerate input: all-zero spectrogram")

    # silent bins are left out of EM and given an uninformative 0.5 mask
    live = bin_power > 0
    Yl = Y[live]
    phi_floor = PHI_FLOOR * bin_power[live][:, None] / M

    sample = _backend.weighted_covariance(Yl, np.ones(Yl.shape[:2])) / T
    R = np.empty((2,) + sample.shape, dtype=np.complex128)
    R[SPEECH] = sample
    R[NOISE] = np.eye(M)
    if jitter > 0:
        rng = np.random.default_rng(seed)
        A = rng.standard_normal(sample.shape) + 1j * rng.standard_normal(sample.shape)
        scale = np.trace(sample, axis1=-2, axis2=-1).real[:, None, None] / M
        R[SPEECH] = sample + jitter * scale * hermitize(A @ A.conj().swapaxes(-1, -2)) / M
    R = condition(R, loading)

    trace = []
    post = None
    for _ in range(iterations):
        phi = np.stack([_profile_phi(Yl, R[k], phi_floor) for k in (0, 1)])
        total, ll = _mixture_loglik(Yl, R, phi)
        trace.append(float(total.sum()))
        post = np.exp(ll - np.logaddexp(ll[0], ll[1]))
        post = np.clip(post, POSTERIOR_FLOOR, 1.0 - POSTERIOR_FLOOR)
        post /= post.sum(axis=0)
        for k in (0, 1):
            acc = _backend.weighted_covariance(Yl, post[k] / phi[k])
            R[k] = acc / post[k].sum(axis=1)[:, None, None]
        R = condition(R, loading)
    phi = np.stack([_profile_phi(Yl, R[k], phi_floor) for k in (0, 1)])
    total, ll = _mixture_loglik(Yl, R, phi)
    trace.append(float(total.sum()))
    post = np.exp(ll - np.logaddexp(ll[0], ll[1]))

    # relabel per bin by correlation with frame log-energy
    log_energy = np.log(np.maximum(power.sum(axis=0), np.finfo(float).tiny))
    swap = _correlation(post[SPEECH], log_energy) < _correlation(post[NOISE], log_energy)
    post[:, swap] = post[::-1][:, swap]
    R[:, swap] = R[::-1][:, swap]
    phi[:, swap] = phi[::-1][:, swap]

    speech = np.full((F, T), 0.5)
    speech[live] = post[SPEECH]
    full_R = np.broadcast_to(np.eye(M, dtype=np.complex128), (2, F, M, M)).copy()
    full_R[:, live] = R
    full_phi = np.ones((2, F, T))
    full_phi[:, live] = phi
    speech_mask = TFMask(speech.T)
    return CgmmResult(speech_mask, speech_mask.complement(), trace,
                      CgmmParams(full_R, full_phi))


def _correlation(a, b):
    """Pearson correlation of each row of ``a`` (F, T) with ``b`` (T,)."""
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean()
    den = np.sqrt((a**2).sum(axis=1) * (b**2).sum())
    return np.divide(a @ b, den, out=np.zeros(a.shape[0]), where=den > 0)
