"""Small dense linear-algebra helpers used across the package."""

import numpy as np
import scipy.linalg

EPS = np.finfo(float).eps


def spectral_norm(M):
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def rank_tol(shape, sigma_max):
    """Default numerical-rank threshold ``max(dims) * eps * sigma_max``."""
    return max(shape) * EPS * sigma_max


def numerical_rank(M):
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol(M.shape, s[0])))


def symmetrize(P):
    return 0.5 * (P + P.T)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def pinv(M):
    """Pseudoinverse with the package-wide SVD rank threshold."""
    M = np.atleast_2d(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))
    keep = s > rank_tol(M.shape, s[0])
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def signed_svd(M):
    """Thin SVD with a deterministic sign per singular-vector pair.

    Each pair is flipped so the largest-magnitude entry of the left
    singular vector is positive.
    """
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, None]


def psd_factor(S, tol=1e-10):
    """Return ``F`` with ``F @ F.T == S`` for a symmetric PSD matrix ``S``.

    Uses LAPACK's pivoted Cholesky (``?pstrf``) so singular covariances,
    including the zero matrix, are accepted. Raises ``ValueError`` when
    ``S`` is not PSD to within ``tol``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = S.shape[0]
    scale = max(1.0, float(np.max(np.abs(S))) if S.size else 1.0)
    if not np.allclose(S, S.T, atol=tol * scale):
        raise ValueError("covariance is not symmetric")
    if not np.any(S):
        return np.zeros((n, n))
    c, piv, rank, info = scipy.linalg.lapack.dpstrf(S, lower=1, tol=-1.0)
    if info < 0:
        raise ValueError(f"pivoted Cholesky failed (info={info})")
    L = np.tril(c)
    L[:, rank:] = 0.0
    F = np.zeros_like(L)
    F[piv - 1, :] = L
    if not np.allclose(F @ F.T, S, atol=1e3 * n * EPS * scale + tol * scale):
        raise ValueError("covariance is not positive semidefinite")
    return F
