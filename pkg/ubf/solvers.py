"""ubf.solvers -- per-instance baselines

* :py:func:`zero_forcing` -- closed form, full power, equal scaling
* :py:func:`classical_pgd` -- projected gradient ascent from ZF with
  backtracking
* :py:func:`wmmse` -- weighted MMSE block coordinate ascent from ZF

All solvers accept one channel ``(K, M)`` or a stack ``(N, K, M)`` and solve
the channels of a stack independently (vectorized over the stack).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateChannelError, NumericFailure, SingularMatrixError, require
from .numerics import diagonal_load, frobenius_norm, hermitian, identity, matmul, solve_hermitian_psd
from .objective import ascent_direction, prox_power, sum_rate

log = logging.getLogger('ubf.solvers')

PGD_ITERATIONS = 200
PGD_STEP = 0.05
PGD_MAX_HALVINGS = 30

WMMSE_ITERATIONS = 100
WMMSE_BISECTION_TOL = 1e-10
WMMSE_MAX_HALVINGS = 100


@dataclass
class SolverReport:
    '''Result of an iterative solver

    For a stack of channels ``w_final`` and ``rate_final`` carry the batch
    axis and every ``rate_trace`` entry is an array over the stack.
    '''
    w_final: np.ndarray
    rate_final: np.ndarray
    iterations_run: int
    rate_trace: Optional[List[np.ndarray]] = field(default=None)


def _batch(h):
    require(h.ndim in (2, 3), "expected a channel or a stack of channels, got shape %s", h.shape)
    return (h[None], True) if h.ndim == 2 else (h, False)


def _unbatch(x, single):
    return x[0] if single else x


def zero_forcing(h, p):
    """ZF beamformer ``H^H (H H^H)^-1`` scaled to ``||W||_F^2 = P_max``"""
    require(p.k_users <= p.m_antennas, "zero forcing needs K <= M, got K=%d, M=%d",
            p.k_users, p.m_antennas)
    require(h.shape[-2:] == (p.k_users, p.m_antennas),
            "channel shape %s does not match K=%d, M=%d", h.shape, p.k_users, p.m_antennas)

    gram = matmul(h, hermitian(h))
    rhs = np.broadcast_to(identity(p.k_users), gram.shape)
    try:
        inverse = solve_hermitian_psd(gram, rhs)
    except SingularMatrixError:
        log.warning("singular Gram matrix, retrying with diagonal loading")
        try:
            inverse = solve_hermitian_psd(diagonal_load(gram), rhs)
        except SingularMatrixError as e:
            raise DegenerateChannelError("degenerate channel, ZF does not exist: %s", e)

    w = matmul(hermitian(h), inverse)
    norm = frobenius_norm(w)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DegenerateChannelError("degenerate channel, ZF beamformer has norm %s", norm)
    return w * (np.sqrt(p.p_max) / np.asarray(norm))[..., None, None]


def classical_pgd(h, p, iters=PGD_ITERATIONS, step=PGD_STEP, backtracking=True,
                  trace=False, max_halvings=PGD_MAX_HALVINGS):
    '''projected gradient ascent on the sum-rate

    ``W <- prox_power(W + eta D(W))`` starting from ZF.  With backtracking, the
    step of each iteration starts at ``step`` and is halved per channel until
    the sum-rate does not decrease; a channel that exhausts ``max_halvings``
    keeps its iterate for that iteration.
    '''
    require(iters >= 1, "iters must be at least 1, got %s", iters)
    require(step > 0, "step must be positive, got %s", step)
    hb, single = _batch(h)

    w = zero_forcing(hb, p)
    rate = sum_rate(hb, w, p)
    rates = [] if trace else None
    frozen = 0

    for t in range(iters):
        d = ascent_direction(hb, w, p)
        eta = np.full(len(hb), float(step))
        candidate = prox_power(w + eta[:, None, None] * d, p)
        candidate_rate = sum_rate(hb, candidate, p)

        if backtracking:
            worse = candidate_rate < rate
            for _ in range(max_halvings):
                if not np.any(worse):
                    break
                eta[worse] *= 0.5
                candidate[worse] = prox_power(w[worse] + eta[worse][:, None, None] * d[worse], p)
                candidate_rate[worse] = sum_rate(hb[worse], candidate[worse], p)
                worse = candidate_rate < rate
            if np.any(worse):
                frozen += int(np.sum(worse))
                candidate[worse] = w[worse]
                candidate_rate[worse] = rate[worse]

        w, rate = candidate, candidate_rate
        if rates is not None:
            rates.append(_unbatch(rate, single))
        log.debug("pgd iteration %d: mean rate %.6f", t, np.mean(rate))

    if frozen:
        log.warning("pgd: backtracking exhausted %d time(s), iterates frozen", frozen)
    return SolverReport(_unbatch(w, single), _unbatch(rate, single), iters, rates)


def _transmit_power(a, b, mu):
    n = a.shape[-1]
    x = solve_hermitian_psd(a + mu[:, None, None] * identity(n), b)
    return x, np.sum(np.abs(x) ** 2, axis=(-2, -1))


def _transmit_update(a, b, p):
    '''solve ``(A + mu I) W = B`` with the smallest feasible ``mu >= 0``

    ``mu = 0`` is taken when the (diagonally loaded) unconstrained solution
    meets the power budget.  Otherwise ``mu`` is bracketed by doubling and
    bisected until the power is within the tolerance below ``P_max``; the
    feasible end of the bracket is returned.
    '''
    batch = len(a)
    try:
        x0, power0 = _transmit_power(diagonal_load(a), b, np.zeros(batch))
        need = power0 > p.p_max
    except SingularMatrixError:
        x0 = np.zeros(b.shape, dtype=np.complex128)
        need = np.ones(batch, dtype=bool)
    if not np.any(need):
        return x0

    a, b = a[need], b[need]
    scale = np.real(np.trace(a, axis1=-2, axis2=-1)) / a.shape[-1]
    lo = np.zeros(len(a))
    hi = np.maximum(scale, 1e-12)
    for _ in range(WMMSE_MAX_HALVINGS):
        x_hi, power_hi = _transmit_power(a, b, hi)
        over = power_hi > p.p_max
        if not np.any(over):
            break
        lo = np.where(over, hi, lo)
        hi = np.where(over, 2.0 * hi, hi)
    else:
        raise NumericFailure("wmmse: could not bracket the power multiplier")

    for _ in range(WMMSE_MAX_HALVINGS):
        active = p.p_max - power_hi > WMMSE_BISECTION_TOL
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        x_mid, power_mid = _transmit_power(a, b, mid)
        feasible = power_mid <= p.p_max
        move_hi = active & feasible
        lo = np.where(active & ~feasible, mid, lo)
        hi = np.where(move_hi, mid, hi)
        x_hi[move_hi] = x_mid[move_hi]
        power_hi = np.where(move_hi, power_mid, power_hi)

    if not np.all(np.isfinite(power_hi)):
        raise NumericFailure("wmmse: bisection on the power multiplier failed")
    x0[need] = x_hi
    return x0


def wmmse(h, p, iters=WMMSE_ITERATIONS, trace=False):
    '''weighted MMSE sum-rate maximization (MISO)

    Per iteration, with ``G = H W``::

        u_k = G_kk / (sum_j |G_kj|^2 + sigma^2)      receiver scalar
        v_k = 1 / (1 - conj(u_k) G_kk)               MSE weight
        W   = (sum_k v_k |u_k|^2 h_k h_k^H + mu I)^-1 [h_k v_k u_k]_k

    Initialized with ZF at full power.
    '''
    require(iters >= 1, "iters must be at least 1, got %s", iters)
    hb, single = _batch(h)
    hh = hermitian(hb)

    w = zero_forcing(hb, p)
    rates = [] if trace else None
    for t in range(iters):
        g = matmul(hb, w)
        g_kk = np.diagonal(g, axis1=-2, axis2=-1)
        total = np.sum(np.abs(g) ** 2, axis=-1) + p.noise_var
        u = g_kk / total
        v = total / (total - np.abs(g_kk) ** 2)

        a = matmul(hh * (v * np.abs(u) ** 2)[:, None, :], hb)
        b = hh * (v * u)[:, None, :]
        w = _transmit_update(a, b, p)

        if rates is not None or log.isEnabledFor(logging.DEBUG):
            rate = sum_rate(hb, w, p)
            if rates is not None:
                rates.append(_unbatch(rate, single))
            log.debug("wmmse iteration %d: mean rate %.6f", t, np.mean(rate))

    rate = sum_rate(hb, w, p)
    return SolverReport(_unbatch(w, single), _unbatch(rate, single), iters, rates)


SOLVERS = {
    'zf': lambda h, p: zero_forcing(h, p),
    'pgd': lambda h, p: classical_pgd(h, p).w_final,
    'wmmse': lambda h, p: wmmse(h, p).w_final,
}


def solve(method, h, p):
    '''beamformers of a named solver for a channel stack'''
    require(method in SOLVERS, "unknown solver %r, expected one of %s", method, sorted(SOLVERS))
    log.info("solving %d channel(s) with %s", 1 if h.ndim == 2 else len(h), method)
    return SOLVERS[method](h, p)
