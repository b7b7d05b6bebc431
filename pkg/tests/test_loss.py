import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accshot.data import Dataset, SparseColMatrix
from accshot.errors import ValidationError
from accshot.loss import (
    LossKind,
    LossModel,
    Objective,
    full_gradient,
    full_value,
    gradient_coordinate,
    gradient_coordinates,
    loss_deriv,
    loss_value,
    optimality_residual,
    smooth_value,
)

from conftest import example_matrix, identity_dataset, random_problem


def test_beta():
    assert LossModel("square").beta == 1.0
    assert LossModel("logistic").beta == 0.25


def test_pointwise_examples():
    assert loss_value(LossKind.SQUARE, 1.3, 1.3) == 0.0
    assert loss_deriv(LossKind.SQUARE, 1.3, 1.3) == 0.0
    assert loss_value(LossKind.LOGISTIC, 0.0, 1.0) == pytest.approx(math.log(2), rel=1e-15)
    assert loss_deriv(LossKind.LOGISTIC, 0.0, 1.0) == -0.5


@pytest.mark.parametrize("m", [1000.0, -1000.0, 1e300, -1e300])
def test_logistic_stable(m):
    v = loss_value(LossKind.LOGISTIC, m, 1.0)
    g = loss_deriv(LossKind.LOGISTIC, m, 1.0)
    assert np.isfinite(v) and np.isfinite(g)
    if m > 0:
        assert v == pytest.approx(0.0, abs=1e-300)
    else:
        assert v == pytest.approx(-m, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.sampled_from([-1.0, 1.0]))
def test_logistic_matches_naive_formula(m, y):
    assert loss_value(LossKind.LOGISTIC, m, y) == pytest.approx(math.log1p(math.exp(-y * m)), rel=1e-12, abs=1e-300)
    assert loss_deriv(LossKind.LOGISTIC, m, y) == pytest.approx(-y / (1 + math.exp(y * m)), rel=1e-12, abs=1e-300)


def square_obj(y, lam=0.0):
    return Objective(identity_dataset(y), LossModel("square"), lam)


def test_smooth_value_examples():
    obj = square_obj([1.0, 2.0])
    assert smooth_value(obj, obj.margins(np.zeros(2))) == 2.5
    assert smooth_value(obj, obj.margins(np.array([1.0, 2.0]))) == 0.0
    ds = Dataset(example_matrix(), np.array([1.0, -1.0, 1.0])).normalize()
    lobj = Objective(ds, LossModel("logistic"), 0.0)
    assert smooth_value(lobj, np.zeros(3)) == pytest.approx(3 * math.log(2), rel=1e-15)


def test_full_value_example():
    obj = square_obj([2.0, 0.3], lam=0.5)
    w = np.array([1.5, 0.0])
    assert full_value(obj, w, obj.margins(w)) == pytest.approx(0.92, abs=1e-15)
    obj0 = square_obj([2.0, 0.3])
    assert full_value(obj0, w, obj0.margins(w)) == smooth_value(obj0, obj0.margins(w))


def test_gradient_examples():
    obj = square_obj([1.0, 2.0])
    m = obj.margins(np.zeros(2))
    np.testing.assert_array_equal(full_gradient(obj, m), [-1.0, -2.0])
    assert gradient_coordinate(obj, 1, m) == -2.0
    np.testing.assert_array_equal(full_gradient(obj, obj.margins(np.array([1.0, 2.0]))), [0.0, 0.0])


def test_logistic_gradient_at_zero():
    ds = Dataset(example_matrix(), np.array([1.0, -1.0, 1.0])).normalize()
    obj = Objective(ds, LossModel("logistic"), 0.0)
    g = full_gradient(obj, np.zeros(3))
    np.testing.assert_allclose(g, -0.5 * ds.X.toarray().T @ ds.y, rtol=1e-15)


def test_objective_validation():
    ds = identity_dataset([1.0, 2.0])
    with pytest.raises(ValidationError):
        Objective(ds, LossModel("square"), -0.1)
    with pytest.raises(ValidationError):
        Objective(ds, LossModel("logistic"), 0.0)


@pytest.mark.parametrize("loss", ["square", "logistic"])
def test_coordinate_gradient_bitwise(loss):
    prob, _ = random_problem(30, 50, 0.2, loss, seed=4)
    w = np.random.default_rng(0).standard_normal(50)
    m = prob.obj.margins(w)
    g = full_gradient(prob.obj, m)
    coords = np.array([gradient_coordinate(prob.obj, j, m) for j in range(50)])
    np.testing.assert_array_equal(coords, g)
    S = np.array([1, 7, 8, 30, 49])
    np.testing.assert_array_equal(gradient_coordinates(prob.obj, S, m), g[S])


@pytest.mark.parametrize("loss", ["square", "logistic"])
def test_gradient_independent_of_workers(loss):
    prob, _ = random_problem(200, 3000, 0.01, loss, seed=5)
    m = prob.obj.margins(np.random.default_rng(1).standard_normal(3000))
    base = full_gradient(prob.obj, m, workers=1)
    for k in (2, 8):
        np.testing.assert_array_equal(full_gradient(prob.obj, m, workers=k), base)
    S = np.arange(0, 3000, 7)
    np.testing.assert_array_equal(gradient_coordinates(prob.obj, S, m, workers=8), base[S])


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["square", "logistic"]), st.integers(0, 2**32))
def test_smoothness_certificate(loss, seed):
    prob, _ = random_problem(20, 30, 0.2, loss, seed=seed % 1000)
    obj, rho = prob.obj, prob.report.rho
    r = np.random.default_rng(seed)
    w, w2 = r.standard_normal(30), r.standard_normal(30)
    f = smooth_value(obj, obj.margins(w))
    f2 = smooth_value(obj, obj.margins(w2))
    g = full_gradient(obj, obj.margins(w))
    rhs = f + g @ (w2 - w) + obj.beta * rho / 2 * np.sum((w2 - w) ** 2)
    assert f2 <= rhs + 1e-10 * max(1.0, abs(rhs))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["square", "logistic"]), st.integers(0, 2**32), st.floats(-3, 3))
def test_coordinate_lipschitz(loss, seed, step):
    prob, _ = random_problem(20, 30, 0.2, loss, seed=seed % 1000)
    obj = prob.obj
    r = np.random.default_rng(seed)
    w = r.standard_normal(30)
    j = int(r.integers(30))
    w2 = w.copy()
    w2[j] += step
    gj = gradient_coordinate(obj, j, obj.margins(w))
    gj2 = gradient_coordinate(obj, j, obj.margins(w2))
    assert abs(gj2 - gj) <= obj.beta * abs(step) * (1 + 1e-12) + 1e-12


def test_residual_with_l1():
    obj = square_obj([2.0, 0.3], lam=0.5)
    w = np.array([1.5, 0.0])
    g = full_gradient(obj, obj.margins(w))
    assert optimality_residual(obj, g, w) == 0.0
    w = np.array([1.0, 0.0])
    g = full_gradient(obj, obj.margins(w))
    assert optimality_residual(obj, g, w) == pytest.approx(0.5)
