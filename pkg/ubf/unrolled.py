"""ubf.unrolled -- projected gradient ascent unrolled into a trainable network

Layer ``l`` of an :py:class:`UnrolledModel` is one projected gradient step
with its own step size::

    standard:  W <- prox_power(W + eta_l D(W))
    hybrid:    W <- prox_power(W + eta_l G_l D(W))

where ``D`` is :py:func:`ubf.objective.ascent_direction` and ``G_l`` a complex
``M x M`` matrix initialized to the identity.  The input of the first layer is
the ZF beamformer, so a model with all steps zero reproduces ZF and every
output is feasible whatever the parameters are.

Parameters are trained on the sum-loss ``-sum_i R(h_i, W_i)`` (see
:py:mod:`ubf.training`); gradients are central finite differences over the
parameter vector or an analytic reverse-mode pass.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import DatasetIOError, DatasetFormatError, require
from .numerics import cmat, hermitian, identity, inner, matmul
from .objective import (SystemParams, ascent_direction, prox_power, prox_power_backward,
                        sum_rate, sum_rate_hvp)
from .solvers import zero_forcing
from .training import TrainConfig, fit, scheduler_lr  # noqa: F401 (re-exported)

log = logging.getLogger('ubf.unrolled')

LAYER_TYPES = ('standard', 'hybrid')
FD_STEP = 1e-6


@dataclass(frozen=True)
class LayerParams:
    eta: float
    g_transform: Optional[np.ndarray] = None

    def __post_init__(self):
        require(np.isfinite(self.eta), "eta must be finite, got %s", self.eta)
        if self.g_transform is not None:
            require(self.g_transform.ndim == 2 and self.g_transform.shape[0] == self.g_transform.shape[1],
                    "g_transform must be square, got %s", self.g_transform.shape)
            require(np.all(np.isfinite(self.g_transform)), "g_transform has non-finite entries")


@dataclass(frozen=True)
class UnrolledModel:
    '''An immutable unrolled network

    :param layers: one :py:class:`LayerParams` per layer
    :param layer_type: ``standard`` or ``hybrid``
    :param sys: the system the model was built for
    :param provenance: ``seed``, ``train_size`` and ``hpo_trial_id`` of the
                       run that produced the model
    '''
    layers: Tuple[LayerParams, ...]
    layer_type: str
    sys: SystemParams
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        require(self.layer_type in LAYER_TYPES, "unknown layer type %r", self.layer_type)
        require(len(self.layers) >= 1, "a model needs at least one layer")
        hybrid = self.layer_type == 'hybrid'
        for layer in self.layers:
            require((layer.g_transform is not None) == hybrid,
                    "%s layers %s a gradient transformation", self.layer_type,
                    "need" if hybrid else "take no")
            if hybrid:
                require(layer.g_transform.shape[0] == self.sys.m_antennas,
                        "g_transform must be %dx%d", self.sys.m_antennas, self.sys.m_antennas)

    @classmethod
    def build(cls, depth, eta0, sys, layer_type='standard', provenance=None):
        """all layers start at ``eta0``, hybrid transformations at the identity"""
        require(depth >= 1, "depth must be at least 1, got %s", depth)
        g = identity(sys.m_antennas) if layer_type == 'hybrid' else None
        layers = tuple(LayerParams(float(eta0), None if g is None else g.copy()) for _ in range(depth))
        return cls(layers, layer_type, sys, dict(provenance or {}))

    @property
    def depth(self):
        return len(self.layers)

    @property
    def etas(self):
        return np.array([layer.eta for layer in self.layers])

    @property
    def parameter_count(self):
        per_layer = 1 if self.layer_type == 'standard' else 1 + 2 * self.sys.m_antennas ** 2
        return self.depth * per_layer

    def to_vector(self):
        '''flat real parameters, per layer ``eta`` then ``Re(G)``, ``Im(G)`` row-major'''
        if self.layer_type == 'standard':
            return self.etas
        return np.concatenate([np.concatenate([[l.eta], l.g_transform.real.ravel(),
                                               l.g_transform.imag.ravel()])
                               for l in self.layers])

    def with_vector(self, vector):
        vector = np.asarray(vector, dtype=float)
        require(vector.shape == (self.parameter_count,), "expected %d parameters, got shape %s",
                self.parameter_count, vector.shape)
        if self.layer_type == 'standard':
            layers = tuple(LayerParams(float(v)) for v in vector)
        else:
            m = self.sys.m_antennas
            layers = []
            for chunk in vector.reshape(self.depth, -1):
                g = (chunk[1:1 + m * m] + 1j * chunk[1 + m * m:]).reshape(m, m)
                layers.append(LayerParams(float(chunk[0]), g))
            layers = tuple(layers)
        return replace(self, layers=layers)

    def to_dict(self):
        d = {
            'layer_type': self.layer_type,
            'L': self.depth,
            'eta': [float(e) for e in self.etas],
            'sys': self.sys.to_dict(),
            'provenance': dict(self.provenance),
        }
        if self.layer_type == 'hybrid':
            d['g_transform'] = [{'real': l.g_transform.real.tolist(), 'imag': l.g_transform.imag.tolist()}
                                for l in self.layers]
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            sys = SystemParams.from_dict(d['sys'])
            etas = [float(e) for e in d['eta']]
            require(len(etas) == int(d['L']), "model has L=%s but %d step sizes", d['L'], len(etas))
            if d['layer_type'] == 'hybrid':
                gs = [cmat(np.array(g['real'], dtype=float) + 1j * np.array(g['imag'], dtype=float))
                      for g in d['g_transform']]
                require(len(gs) == len(etas), "model has %d step sizes but %d transformations",
                        len(etas), len(gs))
            else:
                gs = [None] * len(etas)
            layers = tuple(LayerParams(e, g) for e, g in zip(etas, gs))
            return cls(layers, d['layer_type'], sys, dict(d.get('provenance') or {}))
        except (KeyError, TypeError) as e:
            raise DatasetFormatError("malformed model document: missing or bad %s", e)

    def save(self, path):
        try:
            with open(path, 'w') as f:
                json.dump(self.to_dict(), f, indent=2)
        except OSError as e:
            raise DatasetIOError("cannot write model %s: %s", path, e)
        log.info("saved %s model (L=%d) to %s", self.layer_type, self.depth, path)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                d = json.load(f)
        except OSError as e:
            raise DatasetIOError("cannot read model %s: %s", path, e)
        except ValueError as e:
            raise DatasetFormatError("%s is not a JSON document: %s", path, e)
        return cls.from_dict(d)


@dataclass
class ForwardDiagnostics:
    '''Iterates of a forward pass, index 0 is the ZF input

    For a stack of channels each entry carries the batch axis.
    '''
    per_layer_w: List[np.ndarray]
    per_layer_rate: List[np.ndarray]


def _layer_direction(layer, d):
    return d if layer.g_transform is None else matmul(layer.g_transform, d)


def forward(model, h, diagnostics=False):
    '''beamformers of ``model`` for one channel or a stack

    :returns: ``(W, ForwardDiagnostics or None)``
    '''
    p = model.sys
    w = zero_forcing(h, p)
    ws = [w] if diagnostics else None
    for layer in model.layers:
        d = ascent_direction(h, w, p)
        w = prox_power(w + layer.eta * _layer_direction(layer, d), p)
        if diagnostics:
            ws.append(w)
    if not diagnostics:
        return w, None
    return w, ForwardDiagnostics(ws, [sum_rate(h, x, p) for x in ws])


def batch_loss(model, h):
    """sum-loss ``-sum_i R(h_i, W_i)`` over a stack of channels"""
    w, _ = forward(model, h)
    return -float(np.sum(sum_rate(h, w, model.sys)))


def _fd_grad(model, h, step):
    vector = model.to_vector()
    grad = np.empty_like(vector)
    for i in range(len(vector)):
        plus = vector.copy()
        minus = vector.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (batch_loss(model.with_vector(plus), h)
                   - batch_loss(model.with_vector(minus), h)) / (2.0 * step)
    return grad


def _analytic_grad(model, h):
    '''reverse-mode gradient of the sum-loss

    Per layer ``Z = W + eta G D(W)`` and ``W' = prox_power(Z)``; the pullback
    of ``D`` is the sum-rate Hessian-vector product.
    '''
    p = model.sys
    ws, zs, ds = [zero_forcing(h, p)], [], []
    for layer in model.layers:
        d = ascent_direction(h, ws[-1], p)
        z = ws[-1] + layer.eta * _layer_direction(layer, d)
        ds.append(d)
        zs.append(z)
        ws.append(prox_power(z, p))

    g_w = -ascent_direction(h, ws[-1], p)
    grads = []
    for layer, w, z, d in reversed(list(zip(model.layers, ws[:-1], zs, ds))):
        g_z = prox_power_backward(z, g_w, p)
        step = _layer_direction(layer, d)
        g_eta = float(np.sum(inner(step, g_z)))
        if layer.g_transform is None:
            grads.append([g_eta])
            u = layer.eta * g_z
        else:
            g_g = layer.eta * matmul(g_z, hermitian(d))
            if g_g.ndim > 2:
                g_g = np.sum(g_g, axis=tuple(range(g_g.ndim - 2)))
            grads.append(np.concatenate([[g_eta], g_g.real.ravel(), g_g.imag.ravel()]))
            u = layer.eta * matmul(hermitian(layer.g_transform), g_z)
        g_w = g_z + sum_rate_hvp(h, w, p, u)
    return np.concatenate(grads[::-1])


def resolve_grad_method(model, method):
    if method == 'auto':
        return 'fd' if model.layer_type == 'standard' else 'analytic'
    require(method in ('fd', 'analytic'), "unknown gradient method %r", method)
    return method


def param_grad(model, h, method='fd', step=FD_STEP):
    '''gradient of :py:func:`batch_loss` w.r.t. :py:meth:`UnrolledModel.to_vector`

    ``fd`` takes central differences (two forward passes per parameter),
    ``analytic`` back-propagates through the layers.
    '''
    require(len(h) >= 1, "gradient of an empty batch")
    method = resolve_grad_method(model, method)
    return _fd_grad(model, h, step) if method == 'fd' else _analytic_grad(model, h)


def mean_rate(model, h):
    w, _ = forward(model, h)
    return float(np.mean(sum_rate(h, w, model.sys)))


def train(model, train_set, val_set, cfg=None, seed=None):
    '''train ``model`` on the sum-loss, returns ``(best model, TrainingTrace)``

    Training is deterministic; ``seed`` is kept in the model's provenance.
    '''
    cfg = cfg or TrainConfig()
    method = resolve_grad_method(model, cfg.grad_method)
    h_train, h_val = train_set.channels, val_set.channels
    log.info("training %s model (L=%d, %d parameters, %s gradients) on %d channels",
             model.layer_type, model.depth, model.parameter_count, method, len(h_train))

    def loss_and_grad(vector, h):
        m = model.with_vector(vector)
        return batch_loss(m, h), param_grad(m, h, method)

    def evaluate(vector, h):
        return mean_rate(model.with_vector(vector), h)

    def describe(vector):
        return model.with_vector(vector).etas

    best, trace = fit(model.to_vector(), loss_and_grad, evaluate, h_train, h_val, cfg,
                      name='unrolled', describe=describe)
    provenance = dict(model.provenance, seed=seed, train_size=len(train_set) + len(val_set))
    return replace(model.with_vector(best), provenance=provenance), trace
