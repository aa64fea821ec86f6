import numpy as np
import pytest

from ubf.channel import generate, split_train_val
from ubf.errors import ContractViolation, DatasetFormatError
from ubf.mlp import (MlpModel, features, hidden_for_depth, mlp_forward, mlp_loss, mlp_loss_and_grad,
                     mlp_train)
from ubf.numerics import frobenius_norm
from ubf.objective import SystemParams
from ubf.training import TrainConfig


@pytest.fixture
def tiny_sys():
    # 2KM = 4 inputs and outputs
    return SystemParams(k_users=1, m_antennas=2)


def test_build(sys_params):
    m = MlpModel.build(sys_params)
    assert m.layer_dims == (64, 256, 256, 256, 64)
    assert m.depth == 5
    assert m.parameter_count == 64 * 256 + 256 + 2 * (256 * 256 + 256) + 256 * 64 + 64
    assert len(m.to_vector()) == m.parameter_count
    assert MlpModel.build(sys_params, depth=3, width=16).layer_dims == (64, 16, 64)

    assert hidden_for_depth(2) == []
    with pytest.raises(ContractViolation):
        hidden_for_depth(1)
    with pytest.raises(ContractViolation):
        MlpModel.build(sys_params).with_vector(np.zeros(3))


def test_build_is_seeded(sys_params):
    a = MlpModel.build(sys_params, depth=3, width=8, seed=1)
    b = MlpModel.build(sys_params, depth=3, width=8, seed=1)
    c = MlpModel.build(sys_params, depth=3, width=8, seed=2)
    assert np.array_equal(a.to_vector(), b.to_vector())
    assert not np.array_equal(a.to_vector(), c.to_vector())


def test_features(channels):
    x = features(channels)
    assert x.shape == (len(channels), 64)
    assert np.array_equal(x[0, :32], channels[0].real.ravel())
    assert np.array_equal(x[0, 32:], channels[0].imag.ravel())


def test_zero_network(sys_params, channels):
    m = MlpModel.build(sys_params, depth=3, width=8)
    m = m.with_vector(np.zeros(m.parameter_count))
    w = mlp_forward(m, channels)
    assert np.array_equal(w, np.zeros((len(channels), 8, 4)))
    loss, grad = mlp_loss_and_grad(m, channels)
    assert loss == 0
    assert np.all(grad == 0)


def test_output_feasible(sys_params, channels, rng):
    m = MlpModel.build(sys_params, depth=4, width=32)
    for scale in (1e-3, 1.0, 1e3):
        w = mlp_forward(m.with_vector(scale * rng.standard_normal(m.parameter_count)), channels)
        assert w.shape == (len(channels), 8, 4)
        assert np.all(frobenius_norm(w) ** 2 <= sys_params.p_max + 1e-12)
    assert mlp_forward(m, channels[0]).shape == (8, 4)


def test_backprop_matches_finite_differences(tiny_sys):
    h = generate(41, 6, 1, 2).channels
    step = 1e-6
    for seed in range(10):
        m = MlpModel.build(tiny_sys, seed=seed, hidden=[8])
        assert m.layer_dims == (4, 8, 4)
        v = m.to_vector()
        loss, grad = mlp_loss_and_grad(m, h)
        assert loss == pytest.approx(mlp_loss(m, h))
        fd = np.array([(mlp_loss(m.with_vector(v + step * e), h)
                        - mlp_loss(m.with_vector(v - step * e), h)) / (2 * step)
                       for e in np.eye(len(v))])
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


def test_small_step_descends(sys_params):
    h = generate(42, 90, 4, 8).channels
    m = MlpModel.build(sys_params, depth=3, width=32, seed=0)
    loss, grad = mlp_loss_and_grad(m, h)
    assert mlp_loss(m.with_vector(m.to_vector() - 1e-4 * grad), h) <= loss


def test_save_load(tmpdir, sys_params):
    m = MlpModel.build(sys_params, depth=3, width=8, provenance=dict(seed=678))
    path = str(tmpdir.join('mlp.json'))
    m.save(path)
    loaded = MlpModel.load(path)
    assert loaded.layer_dims == m.layer_dims
    assert np.array_equal(loaded.to_vector(), m.to_vector())
    assert loaded.provenance == {'seed': 678}

    d = m.to_dict()
    d['layer_dims'] = [64, 9, 64]
    with pytest.raises((DatasetFormatError, ContractViolation)):
        MlpModel.from_dict(d)


def test_mlp_train(sys_params):
    train_set, val_set = split_train_val(generate(44, 50, 4, 8))
    m = MlpModel.build(sys_params, depth=3, width=32, seed=1)
    trained, trace = mlp_train(m, train_set, val_set, TrainConfig(epochs=5, base_lr=1e-3), seed=44)
    assert trace.best_val_rate >= trace.initial_val_rate
    assert trained.provenance == dict(seed=44, train_size=50)
    assert trained.layer_dims == m.layer_dims


def test_mlp_training_is_deterministic(small_sys):
    train_set, val_set = split_train_val(generate(45, 30, 2, 3))
    cfg = TrainConfig(epochs=3, batch_size=8, base_lr=1e-3)
    a, _ = mlp_train(MlpModel.build(small_sys, depth=3, width=16, seed=5), train_set, val_set, cfg, seed=45)
    b, _ = mlp_train(MlpModel.build(small_sys, depth=3, width=16, seed=5), train_set, val_set, cfg, seed=45)
    assert np.array_equal(a.to_vector(), b.to_vector())
