import numpy as np
import pytest

from dbpn.optim import Adam, AdamState, adam_step, he_init, he_std
from dbpn.tensor import Tensor


def test_he_std_values():
    assert he_std(3, 18) == pytest.approx(0.1111111, rel=1e-6)
    assert he_std(8, 32) == pytest.approx(0.03125)


def test_he_init_statistics():
    w = Tensor(np.zeros((64, 32, 8, 8)))
    b = Tensor(np.ones(64))
    he_init(w, b, np.random.default_rng(0))
    assert w.data.std() == pytest.approx(he_std(8, 64), rel=0.02)
    assert abs(w.data.mean()) < 1e-3
    assert np.all(b.data == 0)


def test_first_adam_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([3.0, -0.5])
    opt.step()
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-7)


def test_single_step_oracle():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] == pytest.approx(-0.1, rel=1e-6)


def test_he_init_same_seed_identical():
    a, b = Tensor(np.zeros((4, 4, 3, 3))), Tensor(np.zeros((4, 4, 3, 3)))
    he_init(a, None, np.random.default_rng(7))
    he_init(b, None, np.random.default_rng(7))
    np.testing.assert_array_equal(a.data, b.data)


def test_missing_gradient_is_zero():
    p = Tensor(np.ones(3), requires_grad=True)
    opt = Adam([p], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.data, 1.0)
    assert opt.state.t == 1


def test_shape_mismatch():
    p = Tensor(np.ones(3))
    st = AdamState(m=[np.zeros(3)], v=[np.zeros(3)])
    with pytest.raises(ValueError):
        adam_step([p], [np.ones(4)], st)


def test_deterministic_trajectory():
    def run():
        rng = np.random.default_rng(5)
        p = Tensor(rng.standard_normal(4), requires_grad=True)
        opt = Adam([p], lr=0.01)
        for _ in range(20):
            p.grad = 2 * p.data - 1
            opt.step()
        return p.data.copy()

    np.testing.assert_array_equal(run(), run())
