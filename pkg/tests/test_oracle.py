import numpy as np
import pytest

from mbwpnm.lowrank import WhiteningMatrix, solve
from mbwpnm.oracle import (perturbation_check, scalar_min, singular_product_bound_holds,
                           trace_bound_holds)
from mbwpnm.shrinkage import ShrinkageSpec


def test_scalar_min_closed_form():
    s, f = scalar_min(5.0, 2.0, 1.0, 1e-6)
    assert s == pytest.approx(3.0, abs=1e-6)
    assert f == pytest.approx(16.0, abs=1e-6)


def test_scalar_min_below_threshold():
    assert scalar_min(0.1, 1.0, 0.5, 1e-6)[0] == 0.0


def test_scalar_min_negative_delta_mirrors():
    assert scalar_min(-2.0, 1.0, 0.5, 1e-5)[0] == -scalar_min(2.0, 1.0, 0.5, 1e-5)[0]


def test_scalar_min_includes_endpoint():
    # with zero weight the optimum is delta itself even off the grid
    s, f = scalar_min(0.123456789, 0.0, 0.5, 1e-3)
    assert s == 0.123456789 and f == 0.0


def test_scalar_min_bad_step():
    with pytest.raises(ValueError):
        scalar_min(1.0, 1.0, 0.5, 0.0)


def test_perturbation_accepts_solver_output(rng):
    Y = rng.standard_normal((12, 8)) * 2
    spec = ShrinkageSpec(0.5, np.sort(rng.uniform(0, 2, 8)), J=50)
    X = solve(Y, WhiteningMatrix.identity(), spec)
    assert perturbation_check(X, Y, WhiteningMatrix.identity(), spec, trials=300)


def test_perturbation_rejects_unshrunk(rng):
    Y = rng.standard_normal((6, 4))
    spec = ShrinkageSpec(1.0, np.full(4, 100.0))
    assert not perturbation_check(Y, Y, WhiteningMatrix.identity(), spec, trials=50)


def test_perturbation_unregularised(rng):
    Y = rng.standard_normal((6, 4))
    assert perturbation_check(Y, Y, WhiteningMatrix.identity(), ShrinkageSpec(0.5, np.zeros(4)),
                              trials=50)


def test_perturbation_args():
    with pytest.raises(ValueError):
        perturbation_check(np.zeros((2, 2)), np.zeros((2, 2)), WhiteningMatrix.identity(),
                           ShrinkageSpec(1.0, [0, 0]), trials=0)


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (4, 4)])
def test_product_bound(rng, shape):
    d, m = shape
    for _ in range(50):
        assert singular_product_bound_holds(rng.standard_normal((d, m)),
                                            rng.standard_normal((m, m)))


def test_trace_bound(rng):
    for _ in range(50):
        A, B = rng.standard_normal((2, 7, 4))
        assert trace_bound_holds(A, B)
    A = rng.standard_normal((5, 3))
    assert trace_bound_holds(A, A)  # equality case
