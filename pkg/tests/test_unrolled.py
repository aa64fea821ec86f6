import json

import numpy as np
import pytest

from ubf.channel import generate, split_train_val
from ubf.errors import ContractViolation, DatasetFormatError
from ubf.numerics import frobenius_norm
from ubf.objective import SystemParams, sum_rate
from ubf.solvers import classical_pgd, zero_forcing
from ubf.training import TrainConfig
from ubf.unrolled import UnrolledModel, batch_loss, forward, mean_rate, param_grad, resolve_grad_method, train


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def random_hybrid(small_sys, rng, depth=3):
    m = UnrolledModel.build(depth, 0.05, small_sys, 'hybrid')
    v = m.to_vector()
    return m.with_vector(v + 0.1 * rng.standard_normal(v.shape))


def test_build(sys_params):
    m = UnrolledModel.build(10, 1e-3, sys_params)
    assert m.depth == 10
    assert m.parameter_count == 10
    assert np.all(m.etas == 1e-3)

    hybrid = UnrolledModel.build(3, 1e-3, sys_params, 'hybrid')
    assert hybrid.parameter_count == 3 * (1 + 2 * 64)
    assert np.array_equal(hybrid.layers[0].g_transform, np.eye(8))
    assert np.array_equal(hybrid.with_vector(hybrid.to_vector()).layers[2].g_transform, np.eye(8))

    with pytest.raises(ContractViolation):
        UnrolledModel.build(0, 1e-3, sys_params)
    with pytest.raises(ContractViolation):
        UnrolledModel.build(3, 1e-3, sys_params, 'diagonal')
    with pytest.raises(ContractViolation):
        m.with_vector(np.zeros(3))


def test_zero_steps_reproduce_zf(sys_params, channels):
    m = UnrolledModel.build(5, 0.0, sys_params)
    w, diag = forward(m, channels)
    assert diag is None
    assert np.array_equal(w, zero_forcing(channels, sys_params))


def test_single_step_is_one_pgd_iteration(sys_params, channels):
    eta = 0.05
    w, _ = forward(UnrolledModel.build(1, eta, sys_params), channels)
    expected = classical_pgd(channels, sys_params, iters=1, step=eta, backtracking=False).w_final
    assert np.max(np.abs(w - expected)) < 1e-12


def test_equal_steps_are_fixed_step_pgd(sys_params, channels):
    w, _ = forward(UnrolledModel.build(7, 0.02, sys_params), channels)
    expected = classical_pgd(channels, sys_params, iters=7, step=0.02, backtracking=False).w_final
    assert np.max(np.abs(w - expected)) < 1e-12


def test_identity_transform_matches_standard(sys_params, channels):
    w_std, _ = forward(UnrolledModel.build(4, 0.03, sys_params), channels)
    w_hyb, _ = forward(UnrolledModel.build(4, 0.03, sys_params, 'hybrid'), channels)
    assert np.allclose(w_std, w_hyb, atol=1e-13)


def test_output_always_feasible(small_sys, rng):
    h = generate(31, 8, 2, 3).channels
    for i in range(1000):
        depth = int(rng.integers(1, 6))
        layer_type = 'hybrid' if i % 2 else 'standard'
        m = UnrolledModel.build(depth, 0.0, small_sys, layer_type)
        v = rng.standard_normal(m.parameter_count) * 10.0 ** rng.uniform(-3, 3)
        w, _ = forward(m.with_vector(v), h)
        assert np.all(frobenius_norm(w) ** 2 <= small_sys.p_max + 1e-12)


def test_diagnostics(sys_params, channels):
    m = UnrolledModel.build(4, 0.01, sys_params)
    w, diag = forward(m, channels, diagnostics=True)
    assert len(diag.per_layer_w) == len(diag.per_layer_rate) == 5
    assert np.array_equal(diag.per_layer_w[-1], w)
    assert np.allclose(diag.per_layer_rate[0], sum_rate(channels, zero_forcing(channels, sys_params),
                                                        sys_params))


def test_param_grad_matches_finite_differences(sys_params):
    h = generate(32, 4, 4, 8).channels
    m = UnrolledModel.build(3, 0.01, sys_params).with_vector([0.01, -0.005, 0.02])
    step = 1e-5
    fd = np.array([(batch_loss(m.with_vector(m.to_vector() + step * e), h)
                    - batch_loss(m.with_vector(m.to_vector() - step * e), h)) / (2 * step)
                   for e in np.eye(3)])
    assert rel_err(param_grad(m, h, 'fd'), fd) < 1e-4
    assert rel_err(param_grad(m, h, 'analytic'), fd) < 1e-4


def test_analytic_grad_hybrid(small_sys, rng):
    h = generate(33, 4, 2, 3).channels
    m = random_hybrid(small_sys, rng)
    assert rel_err(param_grad(m, h, 'analytic'), param_grad(m, h, 'fd')) < 1e-4


def test_duplicated_sample_doubles_gradient(sys_params, channels):
    m = UnrolledModel.build(3, 0.02, sys_params)
    one = channels[:1]
    two = np.concatenate([one, one])
    for method in ('fd', 'analytic'):
        assert np.allclose(param_grad(m, two, method), 2 * param_grad(m, one, method), rtol=1e-9)


def test_resolve_grad_method(sys_params):
    assert resolve_grad_method(UnrolledModel.build(2, 0.1, sys_params), 'auto') == 'fd'
    assert resolve_grad_method(UnrolledModel.build(2, 0.1, sys_params, 'hybrid'), 'auto') == 'analytic'
    with pytest.raises(ContractViolation):
        resolve_grad_method(UnrolledModel.build(2, 0.1, sys_params), 'backprop')


def test_save_load(tmpdir, small_sys, rng):
    m = random_hybrid(small_sys, rng)
    m = UnrolledModel(m.layers, m.layer_type, m.sys, dict(seed=42, train_size=100, hpo_trial_id=3))
    path = str(tmpdir.join('model.json'))
    m.save(path)
    loaded = UnrolledModel.load(path)
    assert np.array_equal(loaded.to_vector(), m.to_vector())
    assert loaded.provenance == m.provenance
    assert loaded.sys == small_sys

    with open(path) as f:
        d = json.load(f)
    assert d['layer_type'] == 'hybrid' and d['L'] == 3 and len(d['eta']) == 3

    d['L'] = 4
    with pytest.raises(ContractViolation):
        UnrolledModel.from_dict(d)
    del d['eta']
    with pytest.raises(DatasetFormatError):
        UnrolledModel.from_dict(d)


def test_load_not_json(tmpdir):
    path = tmpdir.join('model.json')
    path.write('layer_type: standard')
    with pytest.raises(DatasetFormatError):
        UnrolledModel.load(str(path))


def test_train_improves_on_zf(sys_params):
    train_set, val_set = split_train_val(generate(42, 100, 4, 8))
    zf = np.mean(sum_rate(val_set.channels, zero_forcing(val_set.channels, sys_params), sys_params))

    m = UnrolledModel.build(3, 0.0, sys_params)
    trained, trace = train(m, train_set, val_set, TrainConfig(epochs=20), seed=42)
    assert trace.initial_val_rate == pytest.approx(zf)
    assert trace.best_val_rate > zf
    assert mean_rate(trained, val_set.channels) == pytest.approx(trace.best_val_rate)
    assert trained.provenance == dict(seed=42, train_size=100)
    assert np.all(trained.etas > 0)


def test_train_hybrid(small_sys):
    train_set, val_set = split_train_val(generate(43, 20, 2, 3))
    m = UnrolledModel.build(2, 0.01, small_sys, 'hybrid')
    trained, trace = train(m, train_set, val_set, TrainConfig(epochs=5))
    assert trained.layer_type == 'hybrid'
    assert trace.best_val_rate >= trace.initial_val_rate
    assert len(trace) <= 5


def test_training_is_deterministic(small_sys):
    train_set, val_set = split_train_val(generate(44, 30, 2, 3))
    cfg = TrainConfig(epochs=4, batch_size=8)
    for layer_type in ('standard', 'hybrid'):
        runs = [train(UnrolledModel.build(3, 0.01, small_sys, layer_type), train_set, val_set, cfg, seed=7)
                for _ in range(2)]
        (a, trace_a), (b, trace_b) = runs
        assert np.array_equal(a.to_vector(), b.to_vector())
        assert trace_a.to_rows() == trace_b.to_rows()


def test_from_dict_rejects_non_matrix_transform(small_sys):
    d = UnrolledModel.build(1, 0.01, small_sys, 'hybrid').to_dict()
    d['g_transform'] = [{'real': [1.0, 0.0, 0.0], 'imag': [0.0, 0.0, 0.0]}]
    with pytest.raises(ContractViolation):
        UnrolledModel.from_dict(d)
    assert UnrolledModel.from_dict(UnrolledModel.build(1, 0.01, small_sys, 'hybrid').to_dict()) \
        .layers[0].g_transform.dtype == np.complex128
