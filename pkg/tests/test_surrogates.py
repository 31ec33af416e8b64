import warnings

import numpy as np
import pytest

from curbflow import surrogates
from curbflow.surrogates import SchemaError
from curbflow.surrogates.linear import RankWarning
from curbflow.surrogates.nn import gradient_check


def data(n=60, p=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(42, 308, (n, p))
    y = np.sin(X[:, 0] / 50) + (X[:, 1] / 100) ** 2 - X[:, 2] / 200
    return X, y


def test_lr_recovers_linear_map():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 300, (50, 4))
    c = np.array([0.3, -0.2, 0.05, 1.1])
    m = surrogates.fit("LR", X, X @ c + 7.0)
    assert np.allclose(m.coefficients, c, atol=1e-8)
    assert m.intercept == pytest.approx(7.0, abs=1e-8)


def test_lr_rank_deficient_ridge():
    X = np.ones((10, 2))
    X[:, 0] = np.arange(10)
    with pytest.warns(RankWarning):
        surrogates.fit("LR", X, np.arange(10.0))


def test_pr_intercept_at_mean():
    X, y = data()
    m = surrogates.fit("PR", X, y)
    assert m.predict(m.mean) == pytest.approx(m.intercept, abs=1e-12)


def test_gpr_interpolates_without_noise():
    X, y = data(40)
    m = surrogates.fit("GPR", X, y, {"noise": 1e-12})
    assert np.max(np.abs(m.predict(X) - y)) <= 1e-6


def test_gpr_reverts_to_mean_far_away():
    X, y = data(40)
    m = surrogates.fit("GPR", X, y)
    # at least 10 length-scales from every training point
    far = m.mean + 10 * np.max(m.length) * m.scale + (X.max(0) - X.min(0))
    assert abs(m.predict(far) - y.mean()) <= 1e-3 * y.std()


def test_gpr_likelihood_monotone():
    X, y = data(50)
    m = surrogates.fit("GPR", X, y)
    assert np.all(np.diff(m.lml_trace) >= -1e-9)


def test_nn_gradient_check():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(10, 3))
    t = rng.normal(size=10)
    params = [rng.normal(size=(3, 16)), rng.normal(size=16), rng.normal(size=16),
              np.array([0.3])]
    assert gradient_check(params, Z, t) < 1e-4


def test_rte_constant_targets():
    X, _ = data()
    m = surrogates.fit("RTE", X, np.full(len(X), 4.2))
    assert np.allclose(m.predict(X[:5] + 1.0), 4.2)


@pytest.mark.parametrize("family", list(surrogates.FAMILIES))
def test_round_trip_bit_identical(family, tmp_path):
    X, y = data()
    m = surrogates.fit(family, X, y, seed=3)
    p = tmp_path / "m.json"
    m.save(p)
    m2 = surrogates.load(p)
    Q = data(20, seed=9)[0]
    assert np.array_equal(m.predict(Q), m2.predict(Q))


@pytest.mark.parametrize("family", list(surrogates.FAMILIES))
def test_seeded_fit_deterministic(family):
    X, y = data()
    a = surrogates.fit(family, X, y, seed=4).predict(X)
    b = surrogates.fit(family, X, y, seed=4).predict(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("family", ["LR", "PR", "GPR"])
def test_row_order_invariance(family):
    X, y = data()
    perm = np.random.default_rng(0).permutation(len(y))
    Q = data(20, seed=9)[0]
    a = surrogates.fit(family, X, y).predict(Q)
    b = surrogates.fit(family, X[perm], y[perm]).predict(Q)
    assert np.max(np.abs(a - b)) < 1e-9 * max(1.0, np.max(np.abs(a)))


@pytest.mark.parametrize("family", list(surrogates.FAMILIES))
def test_schema_mismatch(family):
    X, y = data()
    m = surrogates.fit(family, X, y)
    with pytest.raises(SchemaError):
        m.predict(np.zeros(4))


def test_tampered_file_rejected(tmp_path):
    X, y = data()
    m = surrogates.fit("LR", X, y)
    d = m.to_dict()
    d["columns"] = ["a", "b", "c"]
    with pytest.raises(SchemaError):
        type(m).from_dict(d)


def test_unknown_family_and_hyper():
    X, y = data()
    with pytest.raises(ValueError):
        surrogates.fit("SVM", X, y)
    with pytest.raises(ValueError):
        surrogates.fit("NN", X, y, {"layers": 3})


@pytest.mark.parametrize("family", list(surrogates.FAMILIES))
def test_fits_smooth_function(family):
    X, y = data(200)
    Q, yq = data(50, seed=5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = surrogates.fit(family, X, y, seed=0)
    rmse = np.sqrt(np.mean((m.predict(Q) - yq) ** 2))
    assert rmse < y.std()
