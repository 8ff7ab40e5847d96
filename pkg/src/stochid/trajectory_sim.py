"""Multi-trajectory simulation, innovations, batch matrices and dataset I/O."""

from __future__ import annotations

import contextlib
import re
from dataclasses import dataclass

import numpy as np

from ._linalg import psd_factor
from .exceptions import DimensionError
from .linsys_core import KalmanSequence, SystemModel

__all__ = [
    "TrajectorySet",
    "BatchMatrices",
    "InnovationSet",
    "STREAM_BLOCK",
    "simulate",
    "build_batch",
    "innovations",
    "process_noise_toeplitz",
    "write_dataset",
    "read_dataset",
]

# Trajectories are drawn in blocks of this many rows from one PCG64 stream
# keyed by (seed, block index); trajectory i uses row i % STREAM_BLOCK of
# block i // STREAM_BLOCK. Changing it changes every simulated dataset.
STREAM_BLOCK = 64

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """``N`` output trajectories of length ``T``: ``outputs[i, k] = y_k^i``."""

    outputs: np.ndarray
    seed: int | None = None
    model_fingerprint: str | None = None

    def __post_init__(self):
        y = np.asarray(self.outputs, dtype=float)
        if y.ndim != 3:
            raise DimensionError(f"outputs must be N x T x m, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("outputs contain NaN or Inf")
        y.setflags(write=False)
        object.__setattr__(self, "outputs", y)

    @property
    def N(self) -> int:
        return self.outputs.shape[0]

    @property
    def T(self) -> int:
        return self.outputs.shape[1]

    @property
    def m(self) -> int:
        return self.outputs.shape[2]


@dataclass(frozen=True, eq=False)
class BatchMatrices:
    """Past (``m p x N``) and future (``m f x N``) stacked outputs."""

    Y_minus: np.ndarray
    Y_plus: np.ndarray
    p: int
    f: int
    warnings: tuple = ()

    @property
    def N(self) -> int:
        return self.Y_minus.shape[1]


@dataclass(frozen=True, eq=False)
class InnovationSet:
    innovations: np.ndarray
    filter_states: np.ndarray | None = None


def _block_normals(seed, block, dim):
    ss = np.random.SeedSequence(seed & _SEED_MASK, spawn_key=(block,))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal((STREAM_BLOCK, dim))


def _standard_normals(seed, N, dim):
    out = np.empty((N, dim))
    for b in range(-(-N // STREAM_BLOCK)):
        lo = b * STREAM_BLOCK
        hi = min(N, lo + STREAM_BLOCK)
        out[lo:hi] = _block_normals(seed, b, dim)[: hi - lo]
    return out


def simulate(model: SystemModel, N: int, T: int, seed: int) -> TrajectorySet:
    """Draw ``N`` independent output trajectories of length ``T``.

    Each trajectory consumes ``n + (T-1) n + T m`` standard normals (initial
    state, process noise, output noise, in that order), produced by NumPy's
    ``Generator.standard_normal`` on a PCG64 stream. Trajectory ``i`` depends
    only on ``(seed, i)``, so any subset of trajectories can be regenerated
    independently.
    """
    if N < 1 or T < 1:
        raise ValueError("N and T must be >= 1")
    try:
        L0 = psd_factor(model.Sigma0)
        LQ = psd_factor(model.Q)
        LR = psd_factor(model.R)
    except ValueError as exc:
        raise ValueError(f"cannot factor covariance: {exc}") from exc
    n, m = model.n, model.m
    dim = n + (T - 1) * n + T * m
    z = _standard_normals(int(seed), N, dim)
    z0 = z[:, :n]
    zw = z[:, n:n + (T - 1) * n].reshape(N, T - 1, n)
    zv = z[:, n + (T - 1) * n:].reshape(N, T, m)
    y = np.empty((N, T, m))
    x = model.mu + z0 @ L0.T
    At, Ct = model.A.T, model.C.T
    for k in range(T):
        y[:, k] = x @ Ct + zv[:, k] @ LR.T
        if k < T - 1:
            x = x @ At + zw[:, k] @ LQ.T
    return TrajectorySet(y, seed=int(seed), model_fingerprint=model.fingerprint())


def build_batch(data, p: int, f: int, n: int | None = None) -> BatchMatrices:
    """Split every trajectory at ``p`` and stack past/future outputs column-wise.

    ``data`` may be a :class:`TrajectorySet` or an ``N x T x m`` array. When the
    model order ``n`` is given, horizons too short for realization are noted
    in ``BatchMatrices.warnings``.
    """
    y = data.outputs if isinstance(data, TrajectorySet) else np.asarray(data, dtype=float)
    N, T, m = y.shape
    if p < 1 or f < 1:
        raise ValueError("p and f must be >= 1")
    if p + f != T:
        raise ValueError(f"p + f must equal T={T}, got p={p}, f={f}")
    Y_minus = y[:, :p, :].reshape(N, p * m).T.copy()
    Y_plus = y[:, p:, :].reshape(N, f * m).T.copy()
    notes = []
    if n is not None:
        if p <= n:
            notes.append(f"p={p} <= n={n}: realization impossible")
        if f <= n:
            notes.append(f"f={f} <= n={n}: realization impossible")
    return BatchMatrices(Y_minus, Y_plus, p, f, tuple(notes))


def innovations(model: SystemModel, kalman: KalmanSequence, data, return_states: bool = True) -> InnovationSet:
    """Run the time-varying Kalman filter over every trajectory (``x̂_0 = mu``)."""
    y = data.outputs if isinstance(data, TrajectorySet) else np.asarray(data, dtype=float)
    if y.ndim != 3 or y.shape[2] != model.m:
        raise DimensionError(f"data of shape {y.shape} does not match m={model.m}")
    N, T, m = y.shape
    if kalman.horizon < T:
        raise ValueError(f"Kalman horizon {kalman.horizon} shorter than T={T}")
    e = np.empty_like(y)
    states = np.empty((N, T, model.n)) if return_states else None
    xh = np.broadcast_to(model.mu, (N, model.n)).copy()
    At, Ct = model.A.T, model.C.T
    for k in range(T):
        if return_states:
            states[:, k] = xh
        e[:, k] = y[:, k] - xh @ Ct
        xh = xh @ At + e[:, k] @ kalman.gains[k].T
    return InnovationSet(e, states)


def process_noise_toeplitz(model: SystemModel, p: int) -> np.ndarray:
    """Weight of stacked process noise in stacked past outputs.

    Returns the ``m p x n p`` lower block-triangular matrix with block
    ``(i, j) = C A^(i-j-1)`` for ``i > j`` and zero otherwise.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    n, m = model.n, model.m
    W = np.zeros((m * p, n * p))
    CA = [model.C]
    for _ in range(p - 2):
        CA.append(CA[-1] @ model.A)
    for i in range(1, p):
        for j in range(i):
            W[i * m:(i + 1) * m, j * n:(j + 1) * n] = CA[i - j - 1]
    return W


_HEADER = re.compile(
    r"^# stochid-dataset v1 N=(\d+) T=(\d+) m=(\d+) seed=(\S+)\s*$"
)


def open_text_out(target):
    """Context manager yielding a writable text stream for a path or an open file."""
    if hasattr(target, "write"):
        return contextlib.nullcontext(target)
    return open(target, "w")


def write_dataset(data: TrajectorySet, path) -> None:
    """Write a trajectory set as the ``stochid-dataset v1`` CSV format.

    ``path`` may also be an open text stream.
    """
    N, T, m = data.outputs.shape
    seed = "none" if data.seed is None else str(int(data.seed))
    idx = np.indices((N, T)).reshape(2, -1).T
    with open_text_out(path) as fh:
        fh.write(f"# stochid-dataset v1 N={N} T={T} m={m} seed={seed}\n")
        flat = data.outputs.reshape(N * T, m)
        for (i, k), row in zip(idx, flat):
            fh.write(f"{i},{k}," + ",".join(format(v, ".17g") for v in row) + "\n")


def read_dataset(path) -> TrajectorySet:
    """Parse a ``stochid-dataset v1`` CSV file; raises ``ValueError`` on any malformation."""
    with open(path) as fh:
        header = fh.readline()
        match = _HEADER.match(header)
        if not match:
            raise ValueError(f"malformed dataset header: {header.strip()!r}")
        N, T, m = (int(g) for g in match.groups()[:3])
        seed_txt = match.group(4)
        seed = None if seed_txt == "none" else int(seed_txt)
        y = np.empty((N, T, m))
        count = 0
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != m + 2:
                raise ValueError(f"line {lineno}: expected {m + 2} fields, got {len(parts)}")
            try:
                i, k = int(parts[0]), int(parts[1])
                vals = [float(v) for v in parts[2:]]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric field") from exc
            if count >= N * T:
                raise ValueError(f"more than N*T={N * T} data rows")
            if (i, k) != divmod(count, T):
                raise ValueError(f"line {lineno}: rows must be trajectory-major, got ({i},{k})")
            y[i, k] = vals
            count += 1
    if count != N * T:
        raise ValueError(f"expected {N * T} data rows, found {count}")
    return TrajectorySet(y, seed=seed, model_fingerprint=None)
