"""ubf.objective -- the MISO sum-rate problem

Problem::

    maximize    sum_k log2(1 + SINR_k(W))
    subject to  ||W||_F^2 <= P_max

with ``G = H W`` and ``SINR_k = |G_kk|^2 / (sum_{j != k} |G_kj|^2 + sigma^2)``.

Gradient convention
-------------------

:py:func:`sum_rate_grad` returns the real-coordinate gradient packed as a
complex matrix, ``D = dR/dRe(W) + i dR/dIm(W)``, which equals twice the
Wirtinger derivative ``dR/dW*``.  With this scaling
``R(W + eps D) - R(W) = eps ||D||_F^2 + o(eps)``, and a central finite
difference taken per real coordinate reproduces ``D`` directly.

In closed form, with ``a_k = sum_j |G_kj|^2 + sigma^2`` and
``b_k = a_k - |G_kk|^2``::

    C_kj = G_kj (1/a_k - 1/b_k)     (j != k)
    C_kk = G_kk / a_k
    D    = 2 / ln(2) * H^H C

All functions accept stacks of channels ``(..., K, M)`` with matching
beamformers ``(..., M, K)``.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import require
from .numerics import frobenius_norm, hermitian, inner, matmul

log = logging.getLogger('ubf.objective')

LN2 = np.log(2.0)

#: absolute slack of the power feasibility predicate
FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class SystemParams:
    '''System constants of the downlink

    Defaults are the simulation values: 8 antennas, 4 users, unit transmit
    power, noise variance 0.1.
    '''
    k_users: int = 4
    m_antennas: int = 8
    p_max: float = 1.0
    noise_var: float = 0.1

    def __post_init__(self):
        require(self.k_users >= 1, "k_users must be positive, got %s", self.k_users)
        require(self.m_antennas >= 1, "m_antennas must be positive, got %s", self.m_antennas)
        require(self.p_max > 0, "p_max must be positive, got %s", self.p_max)
        require(self.noise_var > 0, "noise_var must be positive, got %s", self.noise_var)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(k_users=int(d['k_users']), m_antennas=int(d['m_antennas']),
                   p_max=float(d['p_max']), noise_var=float(d['noise_var']))


def check_dims(h, w, p):
    require(h.shape[-2:] == (p.k_users, p.m_antennas),
            "channel shape %s does not match K=%d, M=%d", h.shape, p.k_users, p.m_antennas)
    require(w.shape[-2:] == (p.m_antennas, p.k_users),
            "beamformer shape %s does not match M=%d, K=%d", w.shape, p.m_antennas, p.k_users)


def _powers(h, w, p):
    g = matmul(h, w)
    power = np.abs(g) ** 2
    signal = np.diagonal(power, axis1=-2, axis2=-1)
    total = np.sum(power, axis=-1) + p.noise_var
    return g, signal, total


def sinr(h, w, p):
    """per-user SINR, shape ``(..., K)``"""
    check_dims(h, w, p)
    _, signal, total = _powers(h, w, p)
    return signal / (total - signal)


def sum_rate(h, w, p):
    """sum-rate in bits/s/Hz, a float or an array over the batch axes"""
    return np.sum(np.log(1.0 + sinr(h, w, p)), axis=-1) / LN2


def _inverse_weights(total, signal, p):
    '''``1/a_k`` and ``1/b_k`` broadcast to ``(..., K, K)``, the latter zero on the diagonal'''
    eye = np.eye(p.k_users, dtype=bool)
    inv_a = (1.0 / total)[..., :, None]
    inv_b = np.where(eye, 0.0, (1.0 / (total - signal))[..., :, None])
    return inv_a, inv_b


def sum_rate_grad(h, w, p):
    """ascent direction of the sum-rate (see module docs for the scaling)"""
    check_dims(h, w, p)
    g, signal, total = _powers(h, w, p)
    inv_a, inv_b = _inverse_weights(total, signal, p)
    return (2.0 / LN2) * matmul(hermitian(h), g * (inv_a - inv_b))


#: alias used by the iterative solvers and the unrolled layers
ascent_direction = sum_rate_grad


def sum_rate_hvp(h, w, p, v):
    '''directional derivative of :py:func:`sum_rate_grad` along ``v``

    This is the real Hessian of the sum-rate applied to ``v``; the Hessian is
    symmetric, so the result is also the vector-Jacobian product needed when
    back-propagating through a gradient step.
    '''
    check_dims(h, w, p)
    check_dims(h, v, p)
    g, signal, total = _powers(h, w, p)
    inv_a, inv_b = _inverse_weights(total, signal, p)
    dg = matmul(h, v)

    d_total = 2.0 * np.sum(np.real(np.conj(g) * dg), axis=-1)
    d_signal = 2.0 * np.real(np.conj(np.diagonal(g, axis1=-2, axis2=-1))
                             * np.diagonal(dg, axis1=-2, axis2=-1))
    d_inv_a = (-d_total)[..., :, None] * inv_a ** 2
    d_inv_b = (-(d_total - d_signal))[..., :, None] * inv_b ** 2

    dc = dg * (inv_a - inv_b) + g * (d_inv_a - d_inv_b)
    return (2.0 / LN2) * matmul(hermitian(h), dc)


def _prox_scale(z, p):
    norm = frobenius_norm(z)
    radius = np.sqrt(p.p_max)
    outside = norm > radius
    scale = np.where(outside, radius / np.where(outside, norm, 1.0), 1.0)
    return norm, outside, scale


def prox_power(z, p):
    """project onto the ball ``||W||_F^2 <= P_max``

    Points inside the ball are returned unchanged, so the projection is
    idempotent.  Projected points land on or just inside the sphere.
    """
    norm, outside, scale = _prox_scale(z, p)
    if not np.any(outside):
        return z.copy()

    radius = np.sqrt(p.p_max)
    w = z * np.asarray(scale)[..., None, None]
    for _ in range(4):
        over = frobenius_norm(w) > radius
        if not np.any(over):
            break
        scale = np.where(over, np.nextafter(scale, 0.0), scale)
        w = z * np.asarray(scale)[..., None, None]
    return w


def prox_power_backward(z, grad_w, p):
    '''pull a gradient w.r.t. ``prox_power(z)`` back to ``z``

    Inside the ball the projection is the identity.  Outside it is
    ``r z / ||z||`` whose Jacobian removes the radial component and rescales.
    '''
    norm, outside, scale = _prox_scale(z, p)
    safe = np.where(outside, norm, 1.0)
    radial = inner(z, grad_w) / safe ** 2
    projected = np.asarray(scale)[..., None, None] * (grad_w - np.asarray(radial)[..., None, None] * z)
    return np.where(np.asarray(outside)[..., None, None], projected, grad_w)


def is_feasible(w, p, slack=FEASIBILITY_SLACK):
    return frobenius_norm(w) ** 2 <= p.p_max + slack
