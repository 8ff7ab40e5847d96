"""scikit-learn style wrapper around regression + balanced realization."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trajectories
from .subspace_id import balanced_realization, regress_G
from .trajectory_sim import build_batch


class StochasticSubspaceID(BaseEstimator):
    """Identify an autonomous linear system from many short output trajectories.

    Parameters
    ----------
    n : int
        State dimension (model order), assumed known.
    p : int
        Past horizon. Each training trajectory must have length ``p + f``.
    f : int
        Future horizon.

    Attributes
    ----------
    G_hat_ : ndarray, shape (m f, m p)
        Least-squares predictor of future from past outputs.
    singular_values_ : ndarray
    A_, C_, K_ : ndarray
        System matrices and the Kalman gain at time ``p - 1`` (up to similarity).
    observability_, controllability_ : ndarray
        Balanced factors of the rank-``n`` truncation of ``G_hat_``.
    result_ : IdentificationResult
    """

    def __init__(self, n=1, p=2, f=2):
        self.n = n
        self.p = p
        self.f = f

    def fit(self, X, y=None):
        X = check_trajectories(X, min_length=self.p + self.f)
        if X.shape[1] != self.p + self.f:
            raise ValueError(f"trajectory length {X.shape[1]} != p + f = {self.p + self.f}")
        self.n_outputs_ = X.shape[2]
        batch = build_batch(X, self.p, self.f, n=self.n)
        self.G_hat_ = regress_G(batch)
        res = balanced_realization(self.G_hat_, self.n, self.n_outputs_, self.f)
        self.result_ = res
        self.singular_values_ = res.singular_values
        self.A_, self.C_, self.K_ = res.A_hat, res.C_hat, res.K_hat
        self.observability_, self.controllability_ = res.O_hat, res.Kp_hat
        return self

    def _past(self, X):
        X = check_trajectories(X, min_length=self.p, n_outputs=self.n_outputs_)
        return X[:, : self.p].reshape(X.shape[0], -1).T

    def predict(self, X):
        """Predict the ``f`` outputs following the first ``p`` samples of each trajectory.

        Returns an array of shape ``(N, f, m)``.
        """
        check_is_fitted(self, "G_hat_")
        Y_minus = self._past(X)
        pred = self.G_hat_ @ Y_minus
        return pred.T.reshape(-1, self.f, self.n_outputs_)

    def score(self, X, y=None):
        """Negative mean squared error of the future-output prediction."""
        X = check_trajectories(X, min_length=self.p + self.f, n_outputs=self.n_outputs_)
        pred = self.predict(X)
        return -float(np.mean((X[:, self.p:self.p + self.f] - pred) ** 2))
