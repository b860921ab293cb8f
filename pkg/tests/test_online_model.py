import numpy as np
import pytest

from src.learning.online_model import rls_init, rls_predict, rls_update
from src.scheduling_interface import ModelError


def test_init_identity_for_unit_lambda():
    model = rls_init(2, 1.0, rng_seed=3)
    assert np.array_equal(model.C_inv, np.eye(2))
    assert model.t == 0
    assert np.all(np.abs(model.w) <= 0.5)


def test_init_scales_with_lambda():
    model = rls_init(10, 2.0, rng_seed=0)
    assert np.allclose(model.C_inv, 0.5 * np.eye(10))


def test_init_is_deterministic():
    assert np.array_equal(rls_init(10, 1.0, 42).w, rls_init(10, 1.0, 42).w)


@pytest.mark.parametrize("lam", [0.0, -1.0, float("nan"), float("inf")])
def test_init_rejects_bad_lambda(lam):
    with pytest.raises(ModelError):
        rls_init(3, lam, 0)


def test_single_update_closed_form():
    model = rls_init(2, 1.0, 0, random_weights=False)
    rls_update(model, np.array([1.0, 0.0]), 1.0)
    assert np.allclose(model.C_inv, [[0.5, 0.0], [0.0, 1.0]])
    assert np.allclose(model.w, [0.5, 0.0])
    assert model.t == 1


def test_zero_regressor_leaves_model_unchanged():
    model = rls_init(3, 1.0, 5)
    w, C_inv = model.w.copy(), model.C_inv.copy()
    rls_update(model, np.zeros(3), 4.0)
    assert np.array_equal(model.w, w)
    assert np.array_equal(model.C_inv, C_inv)


@pytest.mark.parametrize("d, lam, n", [(2, 1.0, 50), (5, 0.5, 120), (10, 1.0, 200)])
def test_updates_match_batch_ridge(d, lam, n):
    """From zero weights, RLS tracks the ridge solution (sum x x^T + lam I)^-1 sum x y."""
    rng = np.random.default_rng(d * 100 + n)
    X = rng.normal(size=(n, d))
    y = X @ rng.normal(size=d) + 0.1 * rng.normal(size=n)
    model = rls_init(d, lam, 0, random_weights=False)
    for x_i, y_i in zip(X, y):
        rls_update(model, x_i, float(y_i))
    ridge = np.linalg.solve(X.T @ X + lam * np.eye(d), X.T @ y)
    assert np.max(np.abs(model.w - ridge)) < 1e-8
    assert np.allclose(model.C_inv, model.C_inv.T)


def test_updates_from_random_weights_shrink_towards_initial():
    """With initial weights w0 the solution is (sum x x^T + lam I)^-1 (sum x y + lam w0)."""
    rng = np.random.default_rng(9)
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    model = rls_init(4, 2.0, 17)
    w0 = model.w.copy()
    for x_i, y_i in zip(X, y):
        rls_update(model, x_i, float(y_i))
    expected = np.linalg.solve(X.T @ X + 2.0 * np.eye(4), X.T @ y + 2.0 * w0)
    assert np.max(np.abs(model.w - expected)) < 1e-8


def test_update_rejects_bad_input():
    model = rls_init(3, 1.0, 0)
    with pytest.raises(ModelError):
        rls_update(model, np.ones(4), 1.0)
    with pytest.raises(ModelError):
        rls_update(model, np.array([1.0, np.nan, 0.0]), 1.0)
    with pytest.raises(ModelError):
        rls_update(model, np.ones(3), float("inf"))
    assert model.t == 0


def test_predict_zero_weights():
    model = rls_init(4, 1.0, 0, random_weights=False)
    assert rls_predict(model, np.array([3.0, 1.0, 2.0, 9.0])) == 0.0


def test_predict_dot_product():
    model = rls_init(2, 1.0, 0, random_weights=False)
    model.w = np.array([0.5, 0.0])
    assert rls_predict(model, np.array([1.0, 0.0])) == pytest.approx(0.5)
    assert np.allclose(rls_predict(model, np.array([[1.0, 0.0], [2.0, 7.0]])), [0.5, 1.0])


def test_predict_dimension_mismatch():
    with pytest.raises(ModelError):
        rls_predict(rls_init(3, 1.0, 0), np.ones(2))
