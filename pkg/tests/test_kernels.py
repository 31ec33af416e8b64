import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curbflow import _accel
from curbflow.fd import DEFAULT_FD
from curbflow.laxhopf import ConditionSet, ValueCondition, initial_conditions
from curbflow.kernels import kernels


def _conditions(seed):
    rng = np.random.default_rng(seed)
    conds = initial_conditions(list(rng.uniform(0, 0.24, 6)), 450.0)
    t = 0.0
    for k in range(5):
        conds.append(ValueCondition("upstream", 0.0, 0.0, t, t + 10.0,
                                    float(rng.uniform(0, 3)), float(rng.uniform(0, 0.56))))
        t += 10.0
    conds.append(ValueCondition("internal", 210.0, 210.0, 15.0, 45.0, -8.0, 0.28))
    return ConditionSet.from_conditions(conds, DEFAULT_FD)


def _eval(cs, backend, prune):
    prev = _accel.backend_name()
    try:
        _accel.set_backend(backend)
        tt, xx = np.meshgrid(np.linspace(0, 60, 31), np.linspace(0, 450, 46), indexing="ij")
        return cs.evaluate(tt, xx, prune=prune)
    finally:
        _accel.set_backend(prev)


@given(st.integers(0, 10_000))
def test_backends_and_pruning_agree(seed):
    cs = _conditions(seed)
    ref = _eval(cs, "numpy", False)
    for backend in ("numpy", "numba"):
        for prune in (True, False):
            assert np.max(np.abs(_eval(cs, backend, prune) - ref)) <= 1e-9


def test_kernel_tables_differ_by_backend():
    prev = _accel.backend_name()
    try:
        _accel.set_backend("numpy")
        py = kernels()
        _accel.set_backend("numba")
        nb = kernels()
    finally:
        _accel.set_backend(prev)
    assert py is not nb


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_environment_flag_selects_backend(flag, expected):
    env = dict(os.environ, CURBFLOW_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c",
                          "from curbflow import _accel; print(_accel.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
