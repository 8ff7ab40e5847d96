"""Finite-sample error bounds for the estimate of G and for its realization.

All logarithms are natural and every norm is the spectral norm.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._linalg import spectral_norm
from .exceptions import RankDeficiencyError
from .linsys_core import (
    KalmanSequence,
    SteadyStateFilter,
    SystemModel,
    extended_observability,
    steady_reversed_controllability,
    toeplitz_weight,
    transition_product,
    true_G,
)
from .trajectory_sim import BatchMatrices, innovations

__all__ = [
    "BoundReport",
    "RealizationBoundReport",
    "weighted_innovation_covariance",
    "sample_thresholds",
    "estimation_error_bound",
    "realization_bound",
    "sigma_nG_floor",
    "concentration_diagnostics",
    "wishart_floor",
]


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _past_toeplitz(model, kalman, p):
    # T_1^0 degenerates to the identity
    if p == 1:
        return np.eye(model.m)
    return toeplitz_weight(model, kalman, 0, p)


def weighted_innovation_covariance(model: SystemModel, kalman: KalmanSequence, p: int):
    """Covariance of the weighted past innovations and its smallest eigenvalue.

    Returns
    -------
    Sigma_E : ndarray, shape (m p, m p)
    sigma_E : float
    """
    if p > kalman.horizon:
        raise ValueError(f"p={p} exceeds Kalman horizon {kalman.horizon}")
    Tp = _past_toeplitz(model, kalman, p)
    D = _block_diag(kalman.innovation_covs[:p])
    Sigma_E = Tp @ D @ Tp.T
    Sigma_E = 0.5 * (Sigma_E + Sigma_E.T)
    sigma_E = float(np.linalg.eigvalsh(Sigma_E)[0])
    r_min = float(np.linalg.eigvalsh(model.R)[0])
    # Sigma_E dominates diag(R, ..., R); slack covers round-off only
    if sigma_E < r_min * (1.0 - 1e-9):
        raise AssertionError(f"sigma_E={sigma_E} below sigma_min(R)={r_min}")
    return Sigma_E, sigma_E


def _block_diag(blocks):
    blocks = list(blocks)
    m = blocks[0].shape[0]
    out = np.zeros((m * len(blocks), m * len(blocks)))
    for i, B in enumerate(blocks):
        out[i * m:(i + 1) * m, i * m:(i + 1) * m] = B
    return out


def _gamma(R_bar_max, n, rows, delta):
    return math.sqrt(R_bar_max) * (math.sqrt(2.0 * (n + rows)) + math.sqrt(2.0 * math.log(2.0 / delta)))


def sample_thresholds(model: SystemModel, kalman: KalmanSequence, p: int, f: int, N: float,
                      delta: float, mu_nonzero: bool | None = None):
    """Sample-size thresholds ``(N0, N1, N2)`` as reals.

    ``N1`` scales with ``||X0_hat|| = sqrt(N) ||mu||`` and is therefore
    evaluated at the caller's ``N``; it is zero when the initial mean is zero
    (or ``mu_nonzero`` is False).
    """
    _check_delta(delta)
    m, n = model.m, model.n
    N0 = 8.0 * m * p + 16.0 * math.log(1.0 / delta)
    N2 = 2.0 * (m * f + m * p) * math.log(1.0 / delta)
    if mu_nonzero is None:
        mu_nonzero = bool(np.any(model.mu))
    x0_norm = math.sqrt(N) * float(np.linalg.norm(model.mu)) if mu_nonzero else 0.0
    if x0_norm == 0.0:
        return N0, 0.0, N2
    Tp = _past_toeplitz(model, kalman, p)
    Op = extended_observability(model, p)
    _, sigma_E = weighted_innovation_covariance(model, kalman, p)
    gamma_p = _gamma(kalman.R_bar_max(p + f), n, m * p, delta)
    N1 = 16.0 * spectral_norm(Tp) * spectral_norm(Op) * x0_norm * gamma_p / sigma_E
    return N0, N1, N2


@dataclass(frozen=True)
class BoundReport:
    """Every constant entering the high-probability bound on ``||G_hat - G||``."""

    sigma_E: float
    R_bar_max: float
    gamma_p: float
    gamma_f: float
    zeta_min: float
    N0: float
    N1: float
    N2: float
    eps1: float
    eps2: float
    eps3: float
    bound: float
    delta: float
    applicable: bool
    N: float
    p: int
    f: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None, **kwargs) -> str:
        text = json.dumps(self.to_dict(), **kwargs)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def estimation_error_bound(model: SystemModel, kalman: KalmanSequence, p: int, f: int, N: float,
                   delta: float) -> BoundReport:
    """Evaluate the bound on ``||G_hat - G||`` holding with probability ``1 - 4 delta``.

    ``zeta_min`` is the normaliser ``sigma_min(sigma_E I + 8 O_p mu mu^T O_p^T)``.
    The bound is only guaranteed when ``applicable`` (``N >= max(N0, N1, N2)``).
    """
    _check_delta(delta)
    T = p + f
    if kalman.horizon < T:
        raise ValueError(f"Kalman horizon {kalman.horizon} shorter than p + f = {T}")
    m, n = model.m, model.n
    _, sigma_E = weighted_innovation_covariance(model, kalman, p)
    R_bar = kalman.R_bar_max(T)
    gamma_p = _gamma(R_bar, n, m * p, delta)
    gamma_f = _gamma(R_bar, n, m * f, delta)
    Tp = spectral_norm(_past_toeplitz(model, kalman, p))
    Tf = spectral_norm(toeplitz_weight(model, kalman, p, f)) if f >= 2 else 1.0
    Op = extended_observability(model, p)
    Op_norm = spectral_norm(Op)
    Of_norm = spectral_norm(extended_observability(model, f))
    _, phi = transition_product(model, kalman, 0, p)
    Om = Op @ model.mu
    zeta = np.outer(Om, Om)
    zeta_min = float(np.linalg.eigvalsh(sigma_E * np.eye(m * p) + 8.0 * zeta)[0])

    eps1 = 32.0 * Tf * Tp * R_bar * math.sqrt((m * f + m * p) * math.log(9.0 / delta))
    eps2 = 8.0 * gamma_f * Tf * Op_norm + 8.0 * phi * gamma_p * Tp * Of_norm
    eps3 = 8.0 * Of_norm * Op_norm * phi
    x0 = math.sqrt(N) * float(np.linalg.norm(model.mu))
    bound = eps1 / (math.sqrt(N) * zeta_min)
    if x0 > 0.0:
        bound += (x0 * eps2 + x0 * x0 * eps3) / (N * zeta_min)
    N0, N1, N2 = sample_thresholds(model, kalman, p, f, N, delta)
    return BoundReport(
        sigma_E=sigma_E, R_bar_max=R_bar, gamma_p=gamma_p, gamma_f=gamma_f, zeta_min=zeta_min,
        N0=N0, N1=N1, N2=N2, eps1=eps1, eps2=eps2, eps3=eps3, bound=bound, delta=delta,
        applicable=bool(N >= max(N0, N1, N2)), N=N, p=p, f=f,
    )


@dataclass(frozen=True)
class RealizationBoundReport:
    sigma_n_G: float
    gate: float
    applicable: bool
    rhs_O: float
    rhs_C: float
    rhs_A: float
    rhs_K: float
    sigma_o: float
    sigma_upper_floor: float

    def to_dict(self) -> dict:
        return asdict(self)


def realization_bound(G, G_hat_error: float, n: int, O_f_u_sigmas) -> RealizationBoundReport:
    """Right-hand sides of the realization error bounds.

    Parameters
    ----------
    G : ndarray
        The true (rank ``n``) G.
    G_hat_error : float
        ``||G_hat - G||``.
    O_f_u_sigmas : pair of float
        ``sigma_n`` of the shifted observability blocks of the estimated and
        reference realizations.

    When ``G_hat_error`` exceeds ``sigma_n(G)/4`` the report is marked
    not applicable and the right-hand sides are NaN.
    ``sigma_upper_floor`` is the deterministic lower bound
    ``sigma_n(O_ref^u) - rhs_O`` on ``sigma_n(O_hat^u)``.
    """
    s = np.linalg.svd(np.asarray(G, dtype=float), compute_uv=False)
    sigma_n = float(s[n - 1])
    if sigma_n <= 0.0:
        raise RankDeficiencyError("sigma_n(G) must be positive", sigma_n)
    gate = sigma_n / 4.0
    sig_est, sig_ref = (float(v) for v in O_f_u_sigmas)
    sigma_o = min(sig_est, sig_ref)
    if G_hat_error > gate:
        nan = float("nan")
        return RealizationBoundReport(sigma_n, gate, False, nan, nan, nan, nan, sigma_o, nan)
    rhs_O = 2.0 * math.sqrt(10.0 * n / sigma_n) * G_hat_error
    if sigma_o > 0.0:
        rhs_A = (math.sqrt(float(s[0])) + sigma_o) / sigma_o**2 * rhs_O
    else:
        rhs_A = float("inf")
    return RealizationBoundReport(
        sigma_n_G=sigma_n, gate=gate, applicable=True, rhs_O=rhs_O, rhs_C=rhs_O, rhs_A=rhs_A,
        rhs_K=rhs_O, sigma_o=sigma_o, sigma_upper_floor=sig_ref - rhs_O,
    )


def sigma_nG_floor(model: SystemModel, kalman: KalmanSequence, steady: SteadyStateFilter,
                   p: int, f: int, k: int):
    """Compare ``sigma_n(G)`` with half of ``sigma_n(O_f K_ss)``.

    ``K_ss`` is the last ``k`` block columns of the steady-state reversed
    controllability matrix. Returns ``(sigma_n(G), floor, satisfied)``.
    """
    n, m = model.n, model.m
    if not n <= k < p:
        raise ValueError(f"need n <= k < p, got n={n}, k={k}, p={p}")
    G, s = true_G(model, kalman, p, f)
    Kbold, _ = steady_reversed_controllability(model, steady.K, p)
    Kss = Kbold[:, m * (p - k):]
    Of = extended_observability(model, f)
    floor = float(np.linalg.svd(Of @ Kss, compute_uv=False)[n - 1]) / 2.0
    sigma_n = float(s[n - 1])
    return sigma_n, floor, bool(sigma_n >= floor)


def _triple(empirical, bound, holds):
    return {"empirical": float(empirical), "bound": float(bound), "holds": bool(holds)}


def concentration_diagnostics(batch: BatchMatrices, model: SystemModel, kalman: KalmanSequence,
                              delta: float) -> dict:
    """Empirical values of the random quantities controlled by the analysis, next to their bounds.

    Keys: ``noise_floor`` (lambda_min of weighted past-innovation Gram vs
    ``N sigma_E / 4``), ``cross_past`` and ``cross_future`` (``||X0 E-^T||``
    and ``||X0 E+^T||`` vs ``||X0|| gamma``), ``noise_product``
    (``||T_f^p E+ E-^T T_p^0^T||``) and ``inverse_gram``
    (``||(Y- Y-^T)^-1||`` vs ``8 / (N zeta_min)``).
    """
    _check_delta(delta)
    p, f, N = batch.p, batch.f, batch.N
    m = model.m
    y = np.concatenate(
        [batch.Y_minus.T.reshape(N, p, m), batch.Y_plus.T.reshape(N, f, m)], axis=1
    )
    inn = innovations(model, kalman, y, return_states=False).innovations
    E_minus = inn[:, :p].reshape(N, p * m).T
    E_plus = inn[:, p:].reshape(N, f * m).T
    rep = estimation_error_bound(model, kalman, p, f, N, delta)
    Tp = _past_toeplitz(model, kalman, p)
    Tf = toeplitz_weight(model, kalman, p, f)
    Tp_n, Tf_n = spectral_norm(Tp), spectral_norm(Tf)

    W = Tp @ E_minus
    lam = float(np.linalg.eigvalsh(W @ W.T)[0])
    floor = N / 4.0 * rep.sigma_E
    out = {"noise_floor": _triple(lam, floor, lam >= floor)}

    X0 = np.outer(model.mu, np.ones(N))
    x0_norm = spectral_norm(X0)
    cp = spectral_norm(X0 @ E_minus.T)
    cf = spectral_norm(X0 @ E_plus.T)
    bp, bf = x0_norm * rep.gamma_p, x0_norm * rep.gamma_f
    out["cross_past"] = _triple(cp, bp, cp <= bp)
    out["cross_future"] = _triple(cf, bf, cf <= bf)

    prod = spectral_norm(Tf @ E_plus @ E_minus.T @ Tp.T)
    pb = 4.0 * Tf_n * Tp_n * rep.R_bar_max * math.sqrt(N * (m * f + m * p) * math.log(9.0 / delta))
    out["noise_product"] = _triple(prod, pb, prod <= pb)

    ib = 8.0 / (N * rep.zeta_min)
    lam_gram = float(np.linalg.eigvalsh(batch.Y_minus @ batch.Y_minus.T)[0])
    if lam_gram > 0.0:
        inv_norm = 1.0 / lam_gram
        out["inverse_gram"] = _triple(inv_norm, ib, inv_norm <= ib)
    else:
        out["inverse_gram"] = _triple(float("inf"), ib, False)
    return out


def wishart_floor(N: int, dim: int, delta: float, rng) -> tuple:
    """One draw of ``sqrt(lambda_min(sum u u^T))`` for ``N`` standard normal ``dim``-vectors.

    Returns ``(empirical, floor, holds)`` with
    ``floor = sqrt(N) - sqrt(dim) - sqrt(2 ln(1/delta))``.
    """
    _check_delta(delta)
    U = rng.standard_normal((dim, N))
    emp = math.sqrt(max(float(np.linalg.eigvalsh(U @ U.T)[0]), 0.0))
    floor = math.sqrt(N) - math.sqrt(dim) - math.sqrt(2.0 * math.log(1.0 / delta))
    return emp, floor, emp >= floor
