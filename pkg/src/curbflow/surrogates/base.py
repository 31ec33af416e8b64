"""Shared machinery of the surrogate families: normalisation and persistence."""
import hashlib
import json
import time
from pathlib import Path

import numpy as np

FORMAT = "curbflow-surrogate"
VERSION = 1


class SchemaError(ValueError):
    """Input rows do not match the schema a surrogate was trained on."""


class NumericalError(RuntimeError):
    """A factorisation or fit failed beyond recovery."""


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


class Surrogate:
    """Regression model ``f_hat(x)`` over a fixed column schema.

    Subclasses implement ``_fit(Z, y)`` and ``_predict(Z)`` on normalised
    inputs ``Z = (X - mean) / scale`` and provide ``_params()`` /
    ``_load_params()`` for persistence.
    """

    family = None
    defaults = {}

    def __init__(self, hyper=None, seed=0):
        unknown = set(hyper or {}) - set(self.defaults)
        if unknown:
            raise ValueError(f"unknown {self.family} hyperparameters: {sorted(unknown)}")
        self.hyper = {**self.defaults, **(hyper or {})}
        self.seed = int(seed)
        self.columns = None
        self.mean = None
        self.scale = None
        self.meta = {}

    # -- training --------------------------------------------------------
    def fit(self, X, y, columns=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise SchemaError("need a nonempty 2-D input matrix with one target per row")
        if not np.all(np.isfinite(y)):
            raise SchemaError("targets must be finite")
        self.columns = list(columns) if columns is not None else [
            f"c{i}" for i in range(X.shape[1])]
        if len(self.columns) != X.shape[1]:
            raise SchemaError("column names do not match input width")
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)
        t0 = time.perf_counter()
        self._fit(self.normalise(X), y)
        self.meta = {"n": int(X.shape[0]), "seed": self.seed,
                     "fit_seconds": time.perf_counter() - t0}
        return self

    def normalise(self, X):
        return (X - self.mean) / self.scale

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.columns is None:
            raise SchemaError("model is not trained")
        if X.shape[1] != len(self.columns):
            raise SchemaError(f"expected {len(self.columns)} columns, got {X.shape[1]}")
        return X, single

    def predict(self, X):
        """Predicted objective for one row or a matrix of rows."""
        X, single = self._check(X)
        out = self._predict(self.normalise(X))
        return float(out[0]) if single else out

    # -- persistence -----------------------------------------------------
    def schema_hash(self):
        blob = json.dumps({"family": self.family, "columns": self.columns,
                           "version": VERSION}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        return {"format": FORMAT, "version": VERSION, "family": self.family,
                "schema_hash": self.schema_hash(), "columns": self.columns,
                "hyper": self.hyper, "seed": self.seed, "meta": self.meta,
                "mean": _arr(self.mean), "scale": _arr(self.scale),
                "params": self._params()}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise SchemaError("not a curbflow surrogate file of a supported version")
        model = cls(d["hyper"], d["seed"])
        model.columns = d["columns"]
        if model.schema_hash() != d["schema_hash"]:
            raise SchemaError("schema hash mismatch")
        model.mean = np.asarray(d["mean"], dtype=float)
        model.scale = np.asarray(d["scale"], dtype=float)
        model.meta = d["meta"]
        model._load_params(d["params"])
        return model
