"""Surrogate model families behind one fit/predict interface."""
import json
from pathlib import Path

from .base import NumericalError, SchemaError, Surrogate
from .forest import ForestSurrogate
from .gpr import GaussianProcessSurrogate
from .linear import LinearSurrogate, PolynomialSurrogate, RankWarning
from .nn import NeuralSurrogate
from .rbnn import RBFSurrogate

FAMILIES = {
    "LR": LinearSurrogate,
    "PR": PolynomialSurrogate,
    "NN": NeuralSurrogate,
    "RBNN": RBFSurrogate,
    "RTE": ForestSurrogate,
    "GPR": GaussianProcessSurrogate,
}


def fit(family, X, y, hyper=None, seed=0, columns=None):
    """Train a surrogate of ``family`` on inputs ``X`` and objective values ``y``."""
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown surrogate family {family!r}") from None
    return cls(hyper, seed).fit(X, y, columns)


def fit_dataset(family, dataset, hyper=None, seed=0):
    return fit(family, dataset.inputs, dataset.targets, hyper, seed, dataset.columns)


def load(path):
    d = json.loads(Path(path).read_text())
    try:
        cls = FAMILIES[d["family"]]
    except KeyError:
        raise SchemaError(f"unknown surrogate family in {path}") from None
    return cls.from_dict(d)


__all__ = ["FAMILIES", "fit", "fit_dataset", "load", "Surrogate", "SchemaError",
           "NumericalError", "RankWarning"]
