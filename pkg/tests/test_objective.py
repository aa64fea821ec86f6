import numpy as np
import pytest

from ubf.channel import generate
from ubf.errors import ContractViolation
from ubf.numerics import frobenius_norm, inner
from ubf.objective import (SystemParams, is_feasible, prox_power, prox_power_backward, sinr, sum_rate,
                           sum_rate_grad, sum_rate_hvp)


def random_w(rng, p, *lead, scale=0.3):
    shape = lead + (p.m_antennas, p.k_users)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def fd_grad(h, w, p, step=1e-6):
    '''central differences per real coordinate, batched over the leading axis'''
    grad = np.zeros(w.shape, dtype=complex)
    for i in range(p.m_antennas):
        for j in range(p.k_users):
            for unit in (1.0, 1j):
                e = np.zeros(w.shape, dtype=complex)
                e[..., i, j] = unit * step
                diff = (sum_rate(h, w + e, p) - sum_rate(h, w - e, p)) / (2 * step)
                grad[..., i, j] += unit * diff
    return grad


def test_system_params():
    p = SystemParams()
    assert (p.k_users, p.m_antennas, p.p_max, p.noise_var) == (4, 8, 1.0, 0.1)
    assert SystemParams.from_dict(p.to_dict()) == p
    with pytest.raises(ContractViolation):
        SystemParams(p_max=0)
    with pytest.raises(ContractViolation):
        SystemParams(noise_var=-1)
    with pytest.raises(ContractViolation):
        SystemParams(k_users=0)


def test_sinr_against_loops(rng):
    p = SystemParams(k_users=2, m_antennas=2)
    h = generate(3, 1, 2, 2).channels[0]
    w = random_w(rng, p)
    expected = []
    for k in range(2):
        gains = [abs(sum(h[k, m] * w[m, j] for m in range(2))) ** 2 for j in range(2)]
        expected.append(gains[k] / (sum(g for j, g in enumerate(gains) if j != k) + p.noise_var))
    assert np.max(np.abs(sinr(h, w, p) - expected)) < 1e-12
    assert abs(sum_rate(h, w, p) - np.sum(np.log2(1 + np.array(expected)))) < 1e-12


def test_sum_rate_zero_beamformer(sys_params, channels):
    w = np.zeros((len(channels), 8, 4), dtype=complex)
    assert np.all(sum_rate(channels, w, sys_params) == 0)


def test_sum_rate_dimension_check(sys_params, channels):
    with pytest.raises(ContractViolation):
        sum_rate(channels, np.zeros((len(channels), 4, 8), dtype=complex), sys_params)


def test_sum_rate_grad_finite_differences(sys_params, rng):
    h = generate(11, 100, 4, 8).channels
    w = random_w(rng, sys_params, 100)
    d = sum_rate_grad(h, w, sys_params)
    fd = fd_grad(h, w, sys_params)
    rel = frobenius_norm(d - fd) / frobenius_norm(fd)
    assert np.max(rel) < 1e-5


def test_sum_rate_grad_is_ascent_direction(sys_params, channels, rng):
    w = random_w(rng, sys_params, len(channels))
    d = sum_rate_grad(channels, w, sys_params)
    eps = 1e-7
    gain = sum_rate(channels, w + eps * d, sys_params) - sum_rate(channels, w, sys_params)
    assert np.allclose(gain, eps * frobenius_norm(d) ** 2, rtol=1e-3)


def test_sum_rate_hvp_finite_differences(small_sys, rng):
    h = generate(12, 10, 2, 3).channels
    w = random_w(rng, small_sys, 10)
    v = random_w(rng, small_sys, 10, scale=1.0)
    eps = 1e-6
    fd = (sum_rate_grad(h, w + eps * v, small_sys) - sum_rate_grad(h, w - eps * v, small_sys)) / (2 * eps)
    hv = sum_rate_hvp(h, w, small_sys, v)
    assert np.max(frobenius_norm(hv - fd) / frobenius_norm(fd)) < 1e-5


def test_sum_rate_hvp_symmetric(small_sys, rng):
    h = generate(13, 5, 2, 3).channels
    w = random_w(rng, small_sys, 5)
    u = random_w(rng, small_sys, 5, scale=1.0)
    v = random_w(rng, small_sys, 5, scale=1.0)
    assert np.allclose(inner(u, sum_rate_hvp(h, w, small_sys, v)),
                       inner(sum_rate_hvp(h, w, small_sys, u), v), rtol=1e-9, atol=1e-12)


def test_prox_power_inside_is_identity(sys_params, rng):
    w = random_w(rng, sys_params, scale=0.05)
    assert frobenius_norm(w) ** 2 < sys_params.p_max
    assert np.array_equal(prox_power(w, sys_params), w)


def test_prox_power_projects(rng):
    p = SystemParams(p_max=2.0)
    for scale in (1.0, 10.0, 1e6, 1e12):
        z = random_w(rng, p, 20, scale=scale)
        w = prox_power(z, p)
        assert np.all(frobenius_norm(w) ** 2 <= p.p_max + 1e-12)
        assert np.all(is_feasible(w, p))
        outside = frobenius_norm(z) ** 2 > p.p_max
        assert np.allclose(frobenius_norm(w[outside]) ** 2, p.p_max, rtol=1e-12)
        # same direction
        assert np.allclose(inner(w, z), frobenius_norm(w) * frobenius_norm(z), rtol=1e-12)


def test_prox_power_idempotent(rng):
    p = SystemParams()
    z = random_w(rng, p, 50, scale=3.0)
    w = prox_power(z, p)
    assert np.array_equal(prox_power(w, p), w)


def test_prox_power_backward(rng):
    p = SystemParams()
    z = random_w(rng, p, 10, scale=2.0)
    z[0] *= 0.01
    g = random_w(rng, p, 10, scale=1.0)
    v = random_w(rng, p, 10, scale=1.0)
    eps = 1e-6
    jv = (prox_power(z + eps * v, p) - prox_power(z - eps * v, p)) / (2 * eps)
    assert np.allclose(inner(g, jv), inner(prox_power_backward(z, g, p), v), rtol=1e-6, atol=1e-9)
    assert np.array_equal(prox_power_backward(z, g, p)[0], g[0])


def test_is_feasible():
    p = SystemParams(k_users=1, m_antennas=1)
    assert is_feasible(np.array([[1.0 + 0j]]), p)
    assert not is_feasible(np.array([[1.001 + 0j]]), p)
