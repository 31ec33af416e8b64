"""Least-squares surrogates: linear (LR) and full quadratic (PR)."""
import warnings

import numpy as np

from .base import Surrogate


class RankWarning(UserWarning):
    """Normal equations were singular; a small ridge was added."""


def least_squares(F, y, ridge):
    """Solve ``min |F w - y|`` with a ridge fallback for rank deficiency."""
    rank = np.linalg.matrix_rank(F)
    if rank < F.shape[1]:
        warnings.warn(f"design matrix rank {rank} < {F.shape[1]}; using ridge {ridge:g}",
                      RankWarning, stacklevel=3)
        A = F.T @ F + ridge * np.eye(F.shape[1])
        return np.linalg.solve(A, F.T @ y)
    w, *_ = np.linalg.lstsq(F, y, rcond=None)
    return w


class LinearSurrogate(Surrogate):
    """Ordinary least squares on normalised inputs."""

    family = "LR"
    defaults = {"ridge": 1e-8}

    def _fit(self, Z, y):
        F = np.column_stack([np.ones(len(Z)), Z])
        self.weights = least_squares(F, y, self.hyper["ridge"])

    def _predict(self, Z):
        return self.weights[0] + Z @ self.weights[1:]

    @property
    def coefficients(self):
        """Slopes with respect to the raw (un-normalised) inputs."""
        return self.weights[1:] / self.scale

    @property
    def intercept(self):
        return float(self.weights[0] - np.dot(self.coefficients, self.mean))

    def _params(self):
        return {"weights": self.weights.tolist()}

    def _load_params(self, p):
        self.weights = np.asarray(p["weights"], dtype=float)


def quadratic_features(Z):
    """``[1, z_i, z_i z_j (i <= j)]`` column block."""
    n, p = Z.shape
    iu, ju = np.triu_indices(p)
    return np.column_stack([np.ones(n), Z, Z[:, iu] * Z[:, ju]])


class PolynomialSurrogate(Surrogate):
    """Degree-2 polynomial with every pairwise interaction."""

    family = "PR"
    defaults = {"ridge": 1e-8}

    def _fit(self, Z, y):
        self.weights = least_squares(quadratic_features(Z), y, self.hyper["ridge"])

    def _predict(self, Z):
        return quadratic_features(Z) @ self.weights

    @property
    def intercept(self):
        return float(self.weights[0])

    def _params(self):
        return {"weights": self.weights.tolist()}

    def _load_params(self, p):
        self.weights = np.asarray(p["weights"], dtype=float)
