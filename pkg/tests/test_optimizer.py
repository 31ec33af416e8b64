from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curbflow import DEFAULT_FD, Scenario, StopVehicle, surrogates
from curbflow.optimizer import (GAConfig, SurrogateObjective, direct_minimize,
                                exhaustive_minimize, ga_minimize, lr_exact_minimize,
                                pr_minimize, surrogate_minimize)
from curbflow.problem import evaluate
from oracles import exhaustive_min

GRID = np.arange(42.0, 309.0, 14.0)


class Fixed:
    """Minimal stand-in for a trained model with given coefficients."""

    family = "LR"

    def __init__(self, c):
        self.coefficients = np.asarray(c, dtype=float)


def test_ga_single_vehicle_abs():
    res = ga_minimize(lambda X: abs(X[0] - 154.0), [GRID], GAConfig(seed=1))
    assert res.X.tolist() == [154.0]


def test_ga_separable_two_vehicles():
    def f(X):
        return (X[0] - 100.0) ** 2 / 100 + (X[1] - 250.0) ** 2 / 50

    best = exhaustive_min(f, [GRID, GRID])[1]
    hits = sum(ga_minimize(f, [GRID, GRID], GAConfig(seed=s)).f <= best + 0.5
               for s in range(100))
    assert hits >= 95


def test_ga_constant_objective_stalls():
    res = ga_minimize(lambda X: 3.0, [GRID, GRID], GAConfig(seed=0))
    assert res.reason == "stall" and res.generations == 50
    assert np.all(np.isin(res.X, GRID))


def test_ga_time_limit():
    res = ga_minimize(lambda X: float(X.sum()), [GRID] * 3,
                      GAConfig(max_time=0.0, stall_generations=None))
    assert res.timed_out and res.generations == 0


@given(st.integers(0, 1000))
@settings(max_examples=20)
def test_ga_history_monotone_and_feasible(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(3, 20))
    grids = [GRID, GRID[:7], GRID[5:]]

    def f(X):
        return float(sum(w[i, int(np.argmin(np.abs(GRID - x)))] for i, x in enumerate(X)))

    res = ga_minimize(f, grids, GAConfig(seed=seed, max_generations=30))
    assert np.all(np.diff(res.history) <= 0)
    assert all(x in g for x, g in zip(res.X, grids))


def test_ga_seeded_determinism():
    f = lambda X: float(np.sin(X[0] / 30) + np.cos(X[1] / 40))
    a = ga_minimize(f, [GRID, GRID], GAConfig(seed=7))
    b = ga_minimize(f, [GRID, GRID], GAConfig(seed=7))
    assert a.history == b.history and np.array_equal(a.X, b.X)


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GAConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        GAConfig(population=3)
    with pytest.raises(ValueError):
        GAConfig.from_dict({"pop": 10})


@pytest.mark.parametrize("c, x", [(0.3, 42.0), (-0.3, 308.0), (0.0, 42.0)])
def test_lr_sign_rule(c, x):
    assert lr_exact_minimize(Fixed([c]), [GRID]).tolist() == [x]


@pytest.mark.parametrize("seed", range(100))
def test_lr_exact_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    grids = [GRID, GRID[3:11], GRID[::3]]
    X = lr_exact_minimize(Fixed(c), grids)
    best = exhaustive_min(lambda Y: float(np.dot(c, Y)), grids)[1]
    assert np.dot(c, X) == pytest.approx(best, abs=1e-9)


def _quadratic_model(centre, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.choice(GRID, (200, len(centre)))
    y = np.sum((X - centre) ** 2, axis=1)
    return surrogates.fit("PR", X, y)


def test_pr_exhaustive_finds_centre():
    centre = np.array([98.0, 154.0, 252.0, 70.0])
    X, f, method = pr_minimize(_quadratic_model(centre), [GRID] * 4)
    assert method == "exhaustive"
    assert X.tolist() == centre.tolist()


def test_pr_coordinate_descent_beats_random_search():
    rng = np.random.default_rng(3)
    X = rng.choice(GRID, (400, 8))
    A = rng.normal(size=(8, 8))
    Q = A @ A.T / 8
    y = np.einsum("ij,jk,ik->i", X - 175, Q, X - 175) + X @ rng.normal(size=8) * 10
    model = surrogates.fit("PR", X, y)
    Xb, fb, method = pr_minimize(model, [GRID] * 8, seed=0)
    assert method == "coordinate descent"
    R = rng.choice(GRID, (100_000, 8))
    assert fb <= model.predict(R).min() + 1e-9


def _one_vehicle(demand=0.5):
    return Scenario(fd=DEFAULT_FD, L=450.0, T=300.0, initial_density=[0.03], demand=demand,
                    supply=0.56, vehicles=[StopVehicle(1, 90.0, entry_time=10.0)])


def test_direct_single_vehicle_matches_exhaustive():
    scn = _one_vehicle()
    ex = exhaustive_minimize(scn)
    d = direct_minimize(scn, GAConfig(seed=0))
    assert d.f == pytest.approx(ex.f, abs=1e-12)
    assert ex.meta["evaluations"] == 20


def test_zero_demand_no_improvement():
    scn = Scenario(fd=DEFAULT_FD, L=450.0, T=300.0, initial_density=[0.0], demand=0.0,
                   supply=0.56, vehicles=[StopVehicle(1, 90.0, entry_time=10.0)])
    base = evaluate([154.0], scn)
    d = direct_minimize(scn, GAConfig(seed=0))
    assert d.f == pytest.approx(base.f, abs=1e-12)


def test_direct_parallel_matches_sequential():
    scn = _one_vehicle()
    a = direct_minimize(scn, GAConfig(seed=2, max_generations=5))
    b = direct_minimize(scn, GAConfig(seed=2, max_generations=5, workers=2))
    assert a.meta["history"] == b.meta["history"]


def test_surrogate_minimize_rescoring():
    scn = _one_vehicle()
    X = GRID[:, None]
    y = np.array([evaluate(x, scn).f for x in X])
    for fam in ("LR", "PR", "GPR"):
        m = surrogates.fit(fam, X, y)
        sol = surrogate_minimize(m, scn, GAConfig(seed=0))
        assert sol.f == pytest.approx(evaluate(sol.X, scn).f, abs=0)
        assert sol.meta["solver"] == fam
        assert np.isfinite(sol.meta["f_hat"])


def test_surrogate_objective_suffix():
    X = np.array([[1.0, 2.0, 3.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0], [3.0, 3.0, 3.0]])
    m = surrogates.fit("LR", X, X @ [1.0, 2.0, 3.0])
    obj = SurrogateObjective(m, suffix=[3.0])
    assert obj([1.0, 1.0]) == pytest.approx(12.0, abs=1e-9)
