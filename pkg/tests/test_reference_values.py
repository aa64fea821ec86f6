'''full-scale runs on the 5000-channel test set

Deselected by default, run with ``py.test -m slow`` (minutes to hours).
'''
import numpy as np
import pytest

from ubf.bench import ExperimentConfig, run_experiment
from ubf.channel import TEST_SEED, TEST_SIZE, generate
from ubf.objective import SystemParams, sum_rate
from ubf.solvers import classical_pgd, wmmse, zero_forcing
from ubf.unrolled import UnrolledModel, forward

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def test_channels():
    return generate(TEST_SEED, TEST_SIZE, 4, 8, 'test').channels


def pinv_zero_forcing(h, p):
    w = np.linalg.pinv(h)
    return w * (np.sqrt(p.p_max) / np.linalg.norm(w, axis=(-2, -1)))[..., None, None]


def test_zero_forcing_matches_pseudo_inverse(test_channels):
    p = SystemParams()
    w = zero_forcing(test_channels, p)
    assert np.allclose(w, pinv_zero_forcing(test_channels, p), atol=1e-9)

    rate = np.mean(sum_rate(test_channels, w, p))
    oracle = np.mean(sum_rate(test_channels, pinv_zero_forcing(test_channels, p), p))
    assert abs(rate - oracle) < 1e-6
    assert abs(rate - 14.16) < 0.1


def test_pgd_and_wmmse_reference(test_channels):
    p = SystemParams()
    h = test_channels[:1000]
    pgd = np.mean(classical_pgd(h, p).rate_final)
    wm = np.mean(wmmse(h, p).rate_final)
    assert abs(pgd - 14.81) <= 0.25
    assert abs(wm - 14.82) <= 0.25
    assert abs(pgd - wm) < 0.2


def test_feasible_at_reference_size(test_channels, rng):
    p = SystemParams()
    h = test_channels[:100]
    for _ in range(1000):
        m = UnrolledModel.build(int(rng.integers(1, 26)), 0.0, p)
        w, _ = forward(m.with_vector(rng.standard_normal(m.depth)), h)
        assert np.all(np.sum(np.abs(w) ** 2, axis=(-2, -1)) <= p.p_max + 1e-9)


def by_key(rows):
    return {(r.method, r.train_size): r for r in rows}


def test_desk_run(tmpdir):
    rows = by_key(run_experiment(ExperimentConfig.desk(output_dir=str(tmpdir))))
    zf = rows['zf', 0].mean
    for n in (100, 1000):
        assert rows['pgdnet', n].mean >= zf
        assert rows['autopgd', n].mean >= 14.2
        assert rows['mlp', n].mean < zf
    assert 1.0 <= rows['mlp', 100].mean <= 3.5

    diag = tmpdir.join('diagnostics_autopgd_1000.csv').readlines()
    first, last = float(diag[1].split(',')[-1]), float(diag[-1].split(',')[-1])
    assert last > first
