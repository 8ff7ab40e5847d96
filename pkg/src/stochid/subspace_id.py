"""Least-squares estimation of G, balanced realization, and alignment of realizations."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._linalg import EPS, pinv, rank_tol, signed_svd, spectral_norm
from .exceptions import DimensionError, RankDeficiencyError, UnobservableEstimateError
from .trajectory_sim import BatchMatrices

__all__ = [
    "IdentificationResult",
    "AlignmentResult",
    "RealizationErrors",
    "regress_G",
    "balanced_realization",
    "identify",
    "align",
    "realization_errors",
]

# relative gap sigma_n - sigma_(n+1) below which the rank-n truncation is ambiguous
TRUNCATION_GAP = 1e-6


class IllPosedTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    """Output of the balanced realization of an (estimated) ``G``.

    ``K_hat`` estimates the Kalman gain ``K_{p-1}`` and ``Kp_hat`` the reversed
    controllability matrix, both up to the same state-space similarity as
    ``A_hat`` and ``C_hat``.
    """

    G_hat: np.ndarray
    singular_values: np.ndarray
    A_hat: np.ndarray
    C_hat: np.ndarray
    K_hat: np.ndarray
    O_hat: np.ndarray
    Kp_hat: np.ndarray
    p: int
    f: int
    n: int
    ill_posed: bool = False

    @property
    def m(self) -> int:
        return self.C_hat.shape[0]

    @property
    def O_upper(self) -> np.ndarray:
        return self.O_hat[: self.m * (self.f - 1)]

    def sigma_n_upper(self) -> float:
        """``sigma_n`` of the top ``m(f-1)`` rows of the observability estimate."""
        return float(np.linalg.svd(self.O_upper, compute_uv=False)[self.n - 1])

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "f": self.f,
            "n": self.n,
            "m": self.m,
            "G_hat": self.G_hat.tolist(),
            "singular_values": self.singular_values.tolist(),
            "A_hat": self.A_hat.tolist(),
            "C_hat": self.C_hat.tolist(),
            "K_hat": self.K_hat.tolist(),
            "O_hat": self.O_hat.tolist(),
            "Kp_hat": self.Kp_hat.tolist(),
            "ill_posed": self.ill_posed,
        }

    def to_json(self, path=None, **kwargs) -> str:
        text = json.dumps(self.to_dict(), **kwargs)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "IdentificationResult":
        arr = {k: np.array(d[k], dtype=float) for k in
               ("G_hat", "singular_values", "A_hat", "C_hat", "K_hat", "O_hat", "Kp_hat")}
        return cls(p=int(d["p"]), f=int(d["f"]), n=int(d["n"]),
                   ill_posed=bool(d.get("ill_posed", False)), **arr)


def regress_G(batch: BatchMatrices) -> np.ndarray:
    """Least-squares map from past to future outputs, ``Y+ Y-^T (Y- Y-^T)^-1``.

    The normal equations are solved through a Cholesky factorization of the
    Gram matrix; it is never inverted explicitly.
    """
    Ym, Yp = batch.Y_minus, batch.Y_plus
    mp, N = Ym.shape
    if N < mp:
        raise RankDeficiencyError(f"N={N} trajectories < m p={mp}: Gram matrix is singular", 0.0)
    gram = Ym @ Ym.T
    s = np.linalg.svd(gram, compute_uv=False)
    if s[-1] <= 0.0 or s[0] / s[-1] > 1.0 / (100.0 * EPS):
        raise RankDeficiencyError(
            f"Y- Y-^T is numerically singular (sigma_min={s[-1]:.3e})", float(s[-1])
        )
    cross = Ym @ Yp.T
    return scipy.linalg.solve(gram, cross, assume_a="pos").T


def balanced_realization(G_hat, n: int, m: int, f: int) -> IdentificationResult:
    """Rank-``n`` SVD factorization of ``G_hat`` into ``(A, C, K_{p-1})``.

    Parameters
    ----------
    G_hat : ndarray, shape (m f, m p)
    n : int
        Model order.
    m : int
        Output dimension.
    f : int
        Future horizon; must be at least 2 so the shift structure exists.
    """
    G_hat = np.asarray(G_hat, dtype=float)
    rows, cols = G_hat.shape
    if rows != m * f or cols % m:
        raise DimensionError(f"G_hat shape {G_hat.shape} incompatible with m={m}, f={f}")
    p = cols // m
    if f < 2:
        raise ValueError("f must be >= 2")
    if n < 1 or n > min(rows, cols):
        raise ValueError(f"need 1 <= n <= min(m f, m p), got n={n}")
    U, s, Vt = signed_svd(G_hat)
    tol = rank_tol(G_hat.shape, s[0]) if s[0] > 0 else 0.0
    if s[n - 1] <= tol:
        raise RankDeficiencyError(
            f"sigma_n(G_hat)={s[n - 1]:.3e} below tolerance; rank condition likely violated",
            float(s[n - 1]),
        )
    ill_posed = bool(n < s.size and s[n - 1] - s[n] < TRUNCATION_GAP * s[0])
    if ill_posed:
        warnings.warn(
            f"sigma_n and sigma_(n+1) nearly equal ({s[n - 1]:.3e}, {s[n]:.3e})",
            IllPosedTruncationWarning,
            stacklevel=2,
        )
    root = np.sqrt(s[:n])
    O_hat = U[:, :n] * root
    Kp_hat = root[:, None] * Vt[:n]
    C_hat = O_hat[:m]
    K_hat = Kp_hat[:, -m:]
    O_up, O_low = O_hat[: m * (f - 1)], O_hat[m:]
    s_up = np.linalg.svd(O_up, compute_uv=False)
    if s_up.size < n or s_up[n - 1] <= rank_tol(O_up.shape, s_up[0]):
        raise UnobservableEstimateError(
            "shifted observability estimate is rank deficient",
            float(s_up[n - 1]) if s_up.size >= n else 0.0,
        )
    A_hat = pinv(O_up) @ O_low
    return IdentificationResult(
        G_hat=G_hat,
        singular_values=s,
        A_hat=A_hat,
        C_hat=C_hat.copy(),
        K_hat=K_hat.copy(),
        O_hat=O_hat,
        Kp_hat=Kp_hat,
        p=p,
        f=f,
        n=n,
        ill_posed=ill_posed,
    )


def identify(batch: BatchMatrices, n: int) -> IdentificationResult:
    """Regression followed by balanced realization."""
    m = batch.Y_minus.shape[0] // batch.p
    return balanced_realization(regress_G(batch), n, m, batch.f)


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    transform: np.ndarray
    residual: float
    non_unique: bool = False
    errors: dict = field(default_factory=dict)


def align(O_hat, O_ref) -> AlignmentResult:
    """Orthogonal Procrustes: the orthonormal ``T`` minimizing ``||O_hat - O_ref T||_F``.

    ``residual`` is reported in spectral norm.
    """
    O_hat = np.asarray(O_hat, dtype=float)
    O_ref = np.asarray(O_ref, dtype=float)
    if O_hat.shape != O_ref.shape:
        raise DimensionError(f"shape mismatch {O_hat.shape} vs {O_ref.shape}")
    M = O_ref.T @ O_hat
    U, s, Vt = np.linalg.svd(M)
    Tr = U @ Vt
    non_unique = bool(s[0] == 0.0 or s[-1] <= rank_tol(M.shape, s[0]))
    return AlignmentResult(Tr, spectral_norm(O_hat - O_ref @ Tr), non_unique)


@dataclass(frozen=True)
class RealizationErrors:
    O_error: float
    C_error: float
    A_error: float
    K_error: float
    sigma_o: float

    def as_dict(self) -> dict:
        return {
            "O_error": self.O_error,
            "C_error": self.C_error,
            "A_error": self.A_error,
            "K_error": self.K_error,
            "sigma_o": self.sigma_o,
        }


def realization_errors(est: IdentificationResult, ref: IdentificationResult,
                       alignment: AlignmentResult | None = None) -> RealizationErrors:
    """Spectral-norm realization errors of ``est`` against ``ref`` in the aligned basis.

    If ``alignment`` is omitted it is computed from the two observability
    estimates.
    """
    if est.O_hat.shape != ref.O_hat.shape or est.K_hat.shape != ref.K_hat.shape:
        raise DimensionError("estimate and reference realizations have different shapes")
    if alignment is None:
        alignment = align(est.O_hat, ref.O_hat)
    Tr = alignment.transform
    return RealizationErrors(
        O_error=spectral_norm(est.O_hat - ref.O_hat @ Tr),
        C_error=spectral_norm(est.C_hat - ref.C_hat @ Tr),
        A_error=spectral_norm(est.A_hat - Tr.T @ ref.A_hat @ Tr),
        K_error=spectral_norm(est.K_hat - Tr.T @ ref.K_hat),
        sigma_o=min(est.sigma_n_upper(), ref.sigma_n_upper()),
    )
