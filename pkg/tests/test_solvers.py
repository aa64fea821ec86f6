import logging

import numpy as np
import pytest

from ubf.channel import generate
from ubf.errors import ContractViolation, DegenerateChannelError
from ubf.numerics import frobenius_norm
from ubf.objective import SystemParams, is_feasible, sum_rate
from ubf.solvers import classical_pgd, solve, wmmse, zero_forcing


def off_diagonal(g):
    return g[..., ~np.eye(g.shape[-1], dtype=bool)]


def test_zero_forcing_identity():
    p = SystemParams(k_users=2, m_antennas=2, p_max=2.0)
    w = zero_forcing(np.eye(2, dtype=complex), p)
    assert np.allclose(w, np.eye(2), atol=1e-12)


def test_zero_forcing_nulls_interference(sys_params, channels):
    w = zero_forcing(channels, sys_params)
    assert np.max(np.abs(off_diagonal(np.matmul(channels, w)))) < 1e-8
    assert np.allclose(frobenius_norm(w) ** 2, sys_params.p_max, rtol=1e-12)
    assert np.allclose(zero_forcing(channels[3], sys_params), w[3], atol=1e-12)


def test_zero_forcing_contract(channels):
    with pytest.raises(ContractViolation):
        zero_forcing(np.zeros((3, 2), dtype=complex), SystemParams(k_users=3, m_antennas=2))
    with pytest.raises(ContractViolation):
        zero_forcing(channels, SystemParams(k_users=4, m_antennas=6))


def test_zero_forcing_degenerate(caplog):
    caplog.set_level(logging.WARNING, logger='ubf.solvers')
    p = SystemParams(k_users=2, m_antennas=3)
    with pytest.raises(DegenerateChannelError) as e:
        zero_forcing(np.zeros((2, 3), dtype=complex), p)
    assert e.value.error_code == 2
    assert any("diagonal loading" in r.getMessage() for r in caplog.records)


def test_classical_pgd_monotone(sys_params, channels):
    report = classical_pgd(channels, sys_params, iters=50, trace=True)
    zf_rate = sum_rate(channels, zero_forcing(channels, sys_params), sys_params)
    trace = np.array([zf_rate] + report.rate_trace)
    assert trace.shape == (51, len(channels))
    assert np.all(np.diff(trace, axis=0) >= 0)
    assert np.all(report.rate_final >= zf_rate)
    assert np.mean(report.rate_final) > np.mean(zf_rate)
    assert np.all(is_feasible(report.w_final, sys_params))
    assert report.iterations_run == 50
    assert np.allclose(report.rate_final, sum_rate(channels, report.w_final, sys_params))


def test_classical_pgd_channels_are_independent(sys_params, channels):
    stack = classical_pgd(channels, sys_params, iters=20)
    single = classical_pgd(channels[5], sys_params, iters=20)
    assert np.max(np.abs(stack.w_final[5] - single.w_final)) < 1e-12
    assert stack.rate_trace is None


def test_classical_pgd_contract(sys_params, channels):
    with pytest.raises(ContractViolation):
        classical_pgd(channels, sys_params, iters=0)
    with pytest.raises(ContractViolation):
        classical_pgd(channels, sys_params, step=0)


def test_classical_pgd_frozen_step_is_logged(channels, caplog):
    caplog.set_level(logging.WARNING, logger='ubf.solvers')
    # high SNR: ZF is close to optimal, a huge step lands on a worse point
    p = SystemParams(noise_var=1e-4)
    report = classical_pgd(channels[:4], p, iters=5, step=1e6, max_halvings=1, trace=True)
    assert np.all(np.diff(np.array(report.rate_trace), axis=0) >= 0)
    assert any("backtracking exhausted" in r.getMessage() for r in caplog.records)


def test_wmmse_monotone(sys_params):
    h = generate(21, 100, 4, 8).channels
    report = wmmse(h, sys_params, iters=40, trace=True)
    zf_rate = sum_rate(h, zero_forcing(h, sys_params), sys_params)
    trace = np.array([zf_rate] + report.rate_trace)
    assert np.all(np.diff(trace, axis=0) >= -1e-8)
    assert np.all(frobenius_norm(report.w_final) ** 2 <= sys_params.p_max + 1e-9)
    assert np.mean(report.rate_final) > np.mean(zf_rate)


def test_wmmse_single_user_is_mrt():
    p = SystemParams(k_users=1, m_antennas=4, p_max=1.5)
    h = generate(22, 10, 1, 4).channels
    report = wmmse(h, p, iters=10)
    gain = np.sum(np.abs(h) ** 2, axis=(-2, -1))
    assert np.allclose(report.rate_final, np.log2(1 + p.p_max * gain / p.noise_var), rtol=1e-8)


def test_wmmse_matches_pgd_quality(sys_params, channels):
    w_rate = np.mean(wmmse(channels, sys_params).rate_final)
    p_rate = np.mean(classical_pgd(channels, sys_params).rate_final)
    assert w_rate > 0.95 * p_rate


def test_solve(sys_params, channels):
    assert np.allclose(solve('zf', channels, sys_params), zero_forcing(channels, sys_params))
    with pytest.raises(ContractViolation):
        solve('mmse', channels, sys_params)
