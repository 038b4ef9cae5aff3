"""Learning rate schedule and heavy-ball SGD behavior."""

import numpy as np
import pytest

from trivqa.autodiff import Tensor
from trivqa.errors import ConfigError, NumericsError, ShapeError
from trivqa.optim import OptimizerState, learning_rate, sgd_step


def make_state(**over):
    kw = dict(base_lr=0.001, momentum=0.9, decay_factor=0.1, decay_period=10, single_decay=False)
    kw.update(over)
    return OptimizerState(**kw)


def tensor_params(arrays):
    return {name: Tensor(np.asarray(a, dtype=np.float64)) for name, a in arrays.items()}


def test_schedule_periodic_values():
    st = make_state()
    assert learning_rate(st, 0) == 0.001
    assert learning_rate(st, 9) == 0.001
    assert learning_rate(st, 10) == pytest.approx(0.0001, rel=1e-12)
    assert learning_rate(st, 19) == pytest.approx(0.0001, rel=1e-12)
    assert learning_rate(st, 20) == pytest.approx(1e-5, rel=1e-12)


def test_schedule_single_decay_caps_at_one_drop():
    st = make_state(single_decay=True)
    assert learning_rate(st, 0) == 0.001
    assert learning_rate(st, 10) == pytest.approx(0.0001, rel=1e-12)
    assert learning_rate(st, 20) == pytest.approx(0.0001, rel=1e-12)
    assert learning_rate(st, 95) == pytest.approx(0.0001, rel=1e-12)


def test_schedule_rejects_negative_epoch():
    with pytest.raises(ConfigError):
        learning_rate(make_state(), -1)


def test_two_step_hand_recurrence():
    # p=1, g=1, lr=0.1, mu=0.9:
    # v1=1, p1=0.9; v2=1.9, p2=0.9-0.19=0.71
    st = make_state(base_lr=0.1)
    params = tensor_params({"w": [1.0]})
    grads = {"w": np.array([1.0])}
    sgd_step(params, grads, st, epoch=0)
    assert abs(params["w"].data[0] - 0.9) < 1e-12
    sgd_step(params, grads, st, epoch=0)
    assert abs(params["w"].data[0] - 0.71) < 1e-12
    assert abs(st.velocity["w"][0] - 1.9) < 1e-12


def test_zero_grad_zero_velocity_is_noop():
    st = make_state()
    params = tensor_params({"w": [[1.0, -2.0], [3.0, 4.0]]})
    before = params["w"].data.copy()
    sgd_step(params, {"w": np.zeros((2, 2))}, st, epoch=0)
    assert np.array_equal(params["w"].data, before)


def test_momentum_carries_after_grad_stops():
    st = make_state(base_lr=0.1)
    params = tensor_params({"w": [0.0]})
    sgd_step(params, {"w": np.array([1.0])}, st, epoch=0)
    sgd_step(params, {"w": np.array([0.0])}, st, epoch=0)
    # velocity decays to 0.9, so the second step still moves the weight
    assert abs(params["w"].data[0] - (-0.19)) < 1e-12


def test_state_validation():
    with pytest.raises(ConfigError):
        make_state(base_lr=0.0)
    with pytest.raises(ConfigError):
        make_state(base_lr=-1e-3)
    with pytest.raises(ConfigError):
        make_state(momentum=1.0)
    with pytest.raises(ConfigError):
        make_state(momentum=-0.1)
    with pytest.raises(ConfigError):
        make_state(decay_factor=0.0)
    with pytest.raises(ConfigError):
        make_state(decay_factor=1.5)
    with pytest.raises(ConfigError):
        make_state(decay_period=0)


def test_step_rejects_shape_mismatch():
    st = make_state()
    with pytest.raises(ShapeError):
        sgd_step(tensor_params({"w": np.zeros((2, 2))}), {"w": np.zeros(3)}, st, epoch=0)


def test_step_rejects_nonfinite_grad():
    st = make_state()
    with pytest.raises(NumericsError):
        sgd_step(tensor_params({"w": np.zeros(2)}), {"w": np.array([1.0, np.nan])}, st, epoch=0)


def test_momentum_zero_is_plain_sgd():
    st = make_state(base_lr=0.5, momentum=0.0)
    params = tensor_params({"w": [2.0]})
    for _ in range(3):
        sgd_step(params, {"w": np.array([1.0])}, st, epoch=0)
    assert abs(params["w"].data[0] - 0.5) < 1e-12


def test_schedule_drives_step_size():
    st = make_state(base_lr=0.001, momentum=0.0)
    params = tensor_params({"w": [0.0]})
    sgd_step(params, {"w": np.array([1.0])}, st, epoch=10)
    assert abs(params["w"].data[0] + 0.0001) < 1e-15
