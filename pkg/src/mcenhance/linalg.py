"""Batched Hermitian helpers shared by the covariance-based modules."""

import numpy as np

LOADING = 1e-6


def hermitian(x):
    return x.swapaxes(-1, -2).conj()


def hermitize(x):
    return 0.5 * (x + hermitian(x))


def condition(R, loading=LOADING):
    """Lift the smallest eigenvalue of each Hermitian matrix to ``loading * tr/M``.

    The deficit is added as diagonal loading, so well-conditioned matrices
    pass through unchanged and near-singular ones become safely positive
    definite. Works on stacks shaped (..., M, M).
    """
    R = hermitize(np.asarray(R, dtype=np.complex128))
    M = R.shape[-1]
    scale = np.trace(R, axis1=-2, axis2=-1).real / M
    lam_min = np.linalg.eigvalsh(R)[..., 0]
    floor = loading * np.maximum(scale, np.finfo(float).tiny)
    deficit = np.maximum(floor - lam_min, 0.0)
    if not deficit.any():
        return R
    return R + deficit[..., None, None] * np.eye(M)


def cholesky(R):
    """Batched Cholesky factor; raises ``np.linalg.LinAlgError`` on failure."""
    return np.linalg.cholesky(R)


def solve_hpd(R, B):
    """Solve R X = B for Hermitian positive-definite stacks via Cholesky."""
    L = cholesky(R)
    vec = B.ndim == R.ndim - 1
    if vec:
        B = B[..., None]
    Z = np.linalg.solve(L, B)
    X = np.linalg.solve(hermitian(L), Z)
    return X[..., 0] if vec else X


def logdet_hpd(R):
    L = cholesky(R)
    return 2.0 * np.log(np.abs(np.diagonal(L, axis1=-2, axis2=-1))).sum(axis=-1)
