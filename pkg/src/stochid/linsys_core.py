"""Ground-truth model, Kalman recursions and the structured matrices built from them.

Everything here is a pure function of a :class:`SystemModel` (and, where
relevant, the time-varying Kalman sequence computed from it).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ._linalg import numerical_rank, spectral_norm, spectral_radius, symmetrize
from .exceptions import AssumptionError, ConvergenceError, DimensionError

__all__ = [
    "SystemModel",
    "KalmanSequence",
    "SteadyStateFilter",
    "ModelValidation",
    "validate_model",
    "check_model",
    "kalman_recursion",
    "steady_state_filter",
    "extended_observability",
    "reversed_controllability",
    "steady_reversed_controllability",
    "toeplitz_weight",
    "true_G",
    "transition_product",
    "PRESETS",
    "preset",
]

# R̄_k condition number above which the innovation covariance is treated as singular
INNOVATION_COND_LIMIT = 1e12


def _as_matrix(x, name):
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got {a.ndim}-d array")
    return a


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Autonomous stochastic linear system ``x+ = A x + w, y = C x + v``.

    ``w ~ N(0, Q)``, ``v ~ N(0, R)`` and ``x0 ~ N(mu, Sigma0)``. Scalars and
    1-d sequences are promoted to matrices; ``mu`` defaults to zero and
    ``Sigma0`` to the zero matrix.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mu: np.ndarray = None
    Sigma0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        C = np.array(self.C, dtype=float)
        if C.ndim < 2:
            # a bare row (or scalar) is one output row
            C = C.reshape(1, -1) if C.size == n else _as_matrix(C, "C")
        if C.ndim != 2 or C.shape[1] != n:
            raise DimensionError(f"C must be m x {n}, got {C.shape}")
        m = C.shape[0]
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        if Q.shape != (n, n):
            raise DimensionError(f"Q must be {n} x {n}, got {Q.shape}")
        if R.shape != (m, m):
            raise DimensionError(f"R must be {m} x {m}, got {R.shape}")
        mu = np.zeros(n) if self.mu is None else np.array(self.mu, dtype=float).reshape(-1)
        if mu.shape != (n,):
            raise DimensionError(f"mu must have length {n}, got {mu.shape}")
        S0 = np.zeros((n, n)) if self.Sigma0 is None else _as_matrix(self.Sigma0, "Sigma0")
        if S0.shape != (n, n):
            raise DimensionError(f"Sigma0 must be {n} x {n}, got {S0.shape}")
        for name, val in (("A", A), ("C", C), ("Q", Q), ("R", R), ("mu", mu), ("Sigma0", S0)):
            if not np.all(np.isfinite(val)):
                raise DimensionError(f"{name} contains non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def replace(self, **changes) -> "SystemModel":
        fields = {k: getattr(self, k) for k in ("A", "C", "Q", "R", "mu", "Sigma0")}
        fields.update(changes)
        return SystemModel(**fields)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "mu": self.mu.tolist(),
            "Sigma0": self.Sigma0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemModel":
        missing = {"A", "C", "Q", "R"} - set(d)
        if missing:
            raise DimensionError(f"model config is missing keys {sorted(missing)}")
        unknown = set(d) - {"A", "C", "Q", "R", "mu", "Sigma0"}
        if unknown:
            raise DimensionError(f"model config has unknown keys {sorted(unknown)}")
        return cls(**{k: d[k] for k in d})

    def to_json(self, path=None, **kwargs) -> str:
        text = json.dumps(self.to_dict(), **kwargs)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "SystemModel":
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, str) and source.lstrip().startswith("{"):
            return cls.from_dict(json.loads(source))
        with open(source) as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.A, self.C, self.Q, self.R, self.mu, self.Sigma0):
            h.update(str(arr.shape).encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"SystemModel(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class ModelValidation:
    model: SystemModel
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.valid


def validate_model(model: SystemModel, tol: float = 1e-10) -> ModelValidation:
    """Check the standing assumptions of the identification problem.

    Returns a :class:`ModelValidation` whose ``violations`` lists every failed
    condition. Structural (shape) problems raise :class:`DimensionError` at
    model construction instead. The rank condition on the reversed
    controllability matrix is not checked here.
    """
    violations = []
    for name, S in (("Q", model.Q), ("Sigma0", model.Sigma0), ("R", model.R)):
        if not np.allclose(S, S.T, atol=tol * max(1.0, np.abs(S).max())):
            violations.append(f"{name} not symmetric")
    for name, S in (("Q", model.Q), ("Sigma0", model.Sigma0)):
        if np.linalg.eigvalsh(symmetrize(S)).min() < -tol:
            violations.append(f"{name} not PSD")
    if np.linalg.eigvalsh(symmetrize(model.R)).min() < tol:
        violations.append("R not PD")
    n = model.n
    if numerical_rank(extended_observability(model, n)) < n:
        violations.append("(A,C) not observable")
    w, V = np.linalg.eigh(symmetrize(model.Q))
    Qh = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    blocks = [Qh]
    for _ in range(n - 1):
        blocks.append(model.A @ blocks[-1])
    if numerical_rank(np.hstack(blocks)) < n:
        violations.append("(A,Q^1/2) not controllable")
    return ModelValidation(model, violations)


def check_model(model: SystemModel) -> SystemModel:
    """Return ``model`` unchanged or raise :class:`AssumptionError`."""
    report = validate_model(model)
    if not report.valid:
        raise AssumptionError("model violates assumptions: " + "; ".join(report.violations))
    return model


@dataclass(frozen=True, eq=False)
class KalmanSequence:
    """Time-varying Kalman quantities for k = 0..T-1 (covariances to T).

    Attributes
    ----------
    gains : ndarray, shape (T, n, m)
    covariances : ndarray, shape (T + 1, n, n)
    innovation_covs : ndarray, shape (T, m, m)
    """

    gains: np.ndarray
    covariances: np.ndarray
    innovation_covs: np.ndarray

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def R_bar_max(self, T=None) -> float:
        T = self.horizon if T is None else T
        if T > self.horizon:
            raise ValueError(f"need {T} innovation covariances, have {self.horizon}")
        return max(spectral_norm(R) for R in self.innovation_covs[:T])


def kalman_recursion(model: SystemModel, T: int) -> KalmanSequence:
    """Run the Riccati recursion from ``P_0 = Sigma0`` for ``T`` steps."""
    if T < 1:
        raise ValueError("T must be >= 1")
    A, C, Q, R = model.A, model.C, model.Q, model.R
    n, m = model.n, model.m
    gains = np.empty((T, n, m))
    covs = np.empty((T + 1, n, n))
    rbar = np.empty((T, m, m))
    P = symmetrize(model.Sigma0.copy())
    covs[0] = P
    for k in range(T):
        Rk = symmetrize(C @ P @ C.T + R)
        if np.linalg.cond(Rk) > INNOVATION_COND_LIMIT:
            raise AssumptionError(f"innovation covariance at k={k} is numerically singular")
        APCt = A @ P @ C.T
        K = np.linalg.solve(Rk, APCt.T).T
        P = symmetrize(A @ P @ A.T + Q - K @ APCt.T)
        gains[k], rbar[k], covs[k + 1] = K, Rk, P
    for arr in (gains, covs, rbar):
        arr.setflags(write=False)
    return KalmanSequence(gains, covs, rbar)


@dataclass(frozen=True, eq=False)
class SteadyStateFilter:
    K: np.ndarray
    P: np.ndarray
    closed_loop_radius: float
    iterations_used: int
    residual: float


def _riccati_step(model, P):
    A, C = model.A, model.C
    APCt = A @ P @ C.T
    Rk = C @ P @ C.T + model.R
    K = np.linalg.solve(Rk, APCt.T).T
    return symmetrize(A @ P @ A.T + model.Q - K @ APCt.T), K


def steady_state_filter(model: SystemModel, tol: float = 1e-12, max_iter: int = 10**6) -> SteadyStateFilter:
    """Solve the filtering DARE by fixed-point iteration of the Riccati map from ``P = Q``."""
    P = symmetrize(np.array(model.Q, dtype=float))
    residual = np.inf
    for it in range(1, max_iter + 1):
        P_next, _ = _riccati_step(model, P)
        residual = spectral_norm(P_next - P)
        done = residual <= tol * (1.0 + spectral_norm(P))
        P = P_next
        if done:
            break
    else:
        raise ConvergenceError(f"Riccati iteration did not converge in {max_iter} steps", residual)
    _, K = _riccati_step(model, P)
    rho = spectral_radius(model.A - K @ model.C)
    return SteadyStateFilter(K=K, P=P, closed_loop_radius=rho, iterations_used=it, residual=residual)


def extended_observability(model: SystemModel, l: int) -> np.ndarray:
    """Stack ``C, CA, ..., CA^(l-1)`` into an ``(m l) x n`` matrix."""
    if l < 1:
        raise ValueError("l must be >= 1")
    blocks = [model.C]
    for _ in range(l - 1):
        blocks.append(blocks[-1] @ model.A)
    return np.vstack(blocks)


def _closed_loop(model, kalman, t):
    return model.A - kalman.gains[t] @ model.C


def reversed_controllability(model: SystemModel, kalman: KalmanSequence, p: int):
    """Time-varying reversed controllability matrix and its numerical rank.

    Block ``j`` is ``(A - K_{p-1} C) ... (A - K_{j+1} C) K_j``; the last block is
    ``K_{p-1}``.

    Returns
    -------
    Kp : ndarray, shape (n, m p)
    rank : int
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if p > kalman.horizon:
        raise ValueError(f"p={p} exceeds Kalman horizon {kalman.horizon}")
    n, m = model.n, model.m
    Kp = np.empty((n, m * p))
    Phi = np.eye(n)
    for j in range(p - 1, -1, -1):
        Kp[:, j * m:(j + 1) * m] = Phi @ kalman.gains[j]
        Phi = Phi @ _closed_loop(model, kalman, j)
    return Kp, numerical_rank(Kp)


def steady_reversed_controllability(model: SystemModel, K: np.ndarray, p: int):
    """Steady-state counterpart ``[(A-KC)^(p-1) K, ..., (A-KC) K, K]`` and its rank."""
    if p < 1:
        raise ValueError("p must be >= 1")
    n, m = model.n, model.m
    F = model.A - K @ model.C
    Kp = np.empty((n, m * p))
    block = np.array(K, dtype=float)
    for j in range(p - 1, -1, -1):
        Kp[:, j * m:(j + 1) * m] = block
        block = F @ block
    return Kp, numerical_rank(Kp)


def toeplitz_weight(model: SystemModel, kalman: KalmanSequence, a: int, b: int) -> np.ndarray:
    """Lower block-triangular ``T_b^a`` with identity diagonal.

    Block ``(i, j)`` for ``i > j`` is ``C A^(i-j-1) K_(a+j)``.
    """
    if a < 0:
        raise ValueError("a must be >= 0")
    if b < 2:
        raise ValueError("b must be >= 2")
    if a + b - 2 >= kalman.horizon:
        raise ValueError(f"T_b^a needs gains up to index {a + b - 2}, horizon is {kalman.horizon}")
    m = model.m
    T = np.eye(m * b)
    CA = [model.C]
    for _ in range(b - 2):
        CA.append(CA[-1] @ model.A)
    for j in range(b - 1):
        Kj = kalman.gains[a + j]
        for i in range(j + 1, b):
            T[i * m:(i + 1) * m, j * m:(j + 1) * m] = CA[i - j - 1] @ Kj
    return T


def true_G(model: SystemModel, kalman: KalmanSequence, p: int, f: int):
    """Return ``G = O_f K_p`` and its leading ``n + 1`` singular values."""
    O = extended_observability(model, f)
    Kp, _ = reversed_controllability(model, kalman, p)
    G = O @ Kp
    s = np.linalg.svd(G, compute_uv=False)
    return G, s[: model.n + 1]


def transition_product(model: SystemModel, kalman: KalmanSequence, k: int, p: int):
    """``(A - K_{p-1} C) ... (A - K_k C)`` and its spectral norm."""
    if not 0 <= k <= p - 1:
        raise ValueError(f"need 0 <= k <= p-1, got k={k}, p={p}")
    if p > kalman.horizon:
        raise ValueError(f"p={p} exceeds Kalman horizon {kalman.horizon}")
    Phi = _closed_loop(model, kalman, p - 1)
    for t in range(p - 2, k - 1, -1):
        Phi = Phi @ _closed_loop(model, kalman, t)
    return Phi, spectral_norm(Phi)


def _preset_table():
    eye1, eye2 = np.eye(1), np.eye(2)
    return {
        "scalar-stable": dict(A=[[0.9]], C=[[1.0]], Q=eye1, R=eye1, Sigma0=np.zeros((1, 1))),
        "scalar-unstable": dict(A=[[1.2]], C=[[1.0]], Q=eye1, R=eye1, Sigma0=np.zeros((1, 1))),
        "jordan-marginal": dict(A=[[1.0, 1.0], [0.0, 1.0]], C=[[1.0, 0.0]], Q=eye2, R=eye1, Sigma0=eye2),
        "two-state-stable": dict(A=[[0.9, 0.2], [0.0, 0.7]], C=[[1.0, 0.0]], Q=eye2, R=eye1, Sigma0=eye2),
    }


PRESETS = tuple(_preset_table())


def preset(name: str, **overrides) -> SystemModel:
    """Named reference system; keyword overrides replace individual fields (e.g. ``mu``)."""
    table = _preset_table()
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    entry = table[name]
    entry.update(overrides)
    return SystemModel(**entry)
