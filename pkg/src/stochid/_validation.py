"""Input checks for array-valued trajectory data."""

import numpy as np
from sklearn.utils.validation import check_array

from .trajectory_sim import TrajectorySet


def check_trajectories(X, *, min_length=1, n_outputs=None):
    """Coerce ``X`` to a finite float array of shape ``(N, T, m)``.

    Accepts a :class:`TrajectorySet`, a 3-d array, or a 2-d ``(N, T)`` array
    for single-output data.
    """
    if isinstance(X, TrajectorySet):
        X = X.outputs
    X = check_array(X, ensure_2d=False, allow_nd=True, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ValueError(f"expected trajectories of shape (N, T, m), got {X.shape}")
    if X.shape[1] < min_length:
        raise ValueError(f"trajectories must have length >= {min_length}, got {X.shape[1]}")
    if n_outputs is not None and X.shape[2] != n_outputs:
        raise ValueError(f"expected {n_outputs} outputs per time step, got {X.shape[2]}")
    return X
