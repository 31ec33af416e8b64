"""Radial-basis-function network with k-means centres."""
import numpy as np
from scipy.spatial.distance import cdist, pdist
from sklearn.cluster import KMeans

from .base import Surrogate
from .linear import least_squares


class RBFSurrogate(Surrogate):
    """Gaussian units on k-means centres; output layer by least squares."""

    family = "RBNN"
    defaults = {"max_centres": 50, "per_centre": 5, "ridge": 1e-8}

    def _design(self, Z):
        d2 = cdist(Z, self.centres, "sqeuclidean")
        return np.column_stack([np.ones(len(Z)), np.exp(-d2 / (2.0 * self.width ** 2))])

    def _fit(self, Z, y):
        hp = self.hyper
        uniq = np.unique(Z, axis=0)
        k = max(1, min(len(Z) // hp["per_centre"], hp["max_centres"], len(uniq)))
        km = KMeans(n_clusters=k, n_init=4, random_state=self.seed).fit(Z)
        self.centres = km.cluster_centers_
        if k > 1:
            self.width = float(np.median(pdist(self.centres)))
        else:
            self.width = float(np.sqrt(Z.shape[1]))
        if not self.width > 0:
            self.width = 1.0
        self.weights = least_squares(self._design(Z), y, hp["ridge"])

    def _predict(self, Z):
        return self._design(Z) @ self.weights

    def _params(self):
        return {"centres": self.centres.tolist(), "width": self.width,
                "weights": self.weights.tolist()}

    def _load_params(self, p):
        self.centres = np.asarray(p["centres"], dtype=float).reshape(len(p["centres"]), -1)
        self.width = float(p["width"])
        self.weights = np.asarray(p["weights"], dtype=float)
