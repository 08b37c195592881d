import numpy as np
import pytest
from scipy.signal import lfilter
from scipy.stats import rankdata

from mcenhance import Waveform
from mcenhance.simulate import MixSpec, mix, spatialize

SR = 16000
ACCEPTANCE_LINES = []


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, M, extra=None):
    """Wishart-like Hermitian positive definite matrix with 2M degrees of freedom."""
    A = crandn(rng, M, extra or 2 * M)
    return A @ A.conj().T / A.shape[1]


def auc(labels, scores):
    """ROC AUC by the rank-sum (Mann-Whitney) identity, ties averaged."""
    labels = np.asarray(labels, dtype=bool).ravel()
    r = rankdata(np.asarray(scores).ravel())
    n1 = labels.sum()
    n0 = labels.size - n1
    return (r[labels].sum() - n1 * (n1 + 1) / 2) / (n1 * n0)


def speechlike(rng, n, sr=SR):
    """AR(2)-coloured noise under a rectified-sine syllable envelope."""
    x = rng.standard_normal(n)
    a = [1.0, -1.6 * np.cos(rng.uniform(0.1, 0.6) * np.pi) * 0.95, 0.9]
    x = lfilter([1.0], a, x)
    t = np.arange(n) / sr
    env = np.maximum(np.sin(2 * np.pi * rng.uniform(2, 5) * t + rng.uniform(0, 6)), 0) ** 2
    return x * env


def far_field_scene(seed, M=4, seconds=2.0, snr=0.0):
    """Target and one interferer arriving with random integer inter-mic delays
    (a rank-one spatial image per bin), plus spatially white noise, mixed by
    the simulate module at ``snr`` dB target-to-noise."""
    rng = np.random.default_rng(seed)
    n = int(seconds * SR)
    h_t = np.eye(9)[np.r_[0, rng.integers(0, 9, M - 1)]]
    h_i = np.eye(9)[rng.integers(0, 9, M)]
    tgt = spatialize(Waveform(speechlike(rng, n), SR), h_t)
    itf = spatialize(Waveform(speechlike(rng, n), SR), h_i)
    noise = Waveform(rng.standard_normal((M, n)), SR)
    return mix(tgt, [itf], noise, MixSpec(snr_range=(snr, snr), seed=seed))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
