"""ubf.mlp -- fully-connected black-box baseline

The network maps ``[Re(H), Im(H)]`` (flattened, ``2 K M`` inputs) through
ReLU hidden layers to ``2 M K`` linear outputs, read as ``[Re(W), Im(W)]``.
The output is projected onto the power ball, so it is always feasible.

``depth`` counts weight layers: depth 5 is input -> 3 x 256 hidden -> output.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .errors import DatasetFormatError, DatasetIOError, require
from .objective import SystemParams, ascent_direction, prox_power, prox_power_backward, sum_rate
from .training import TrainConfig, fit

log = logging.getLogger('ubf.mlp')

ACTIVATIONS = ('relu',)
DEFAULT_DEPTH = 5
DEFAULT_WIDTH = 256


def hidden_for_depth(depth, width=DEFAULT_WIDTH):
    require(depth >= 2, "an MLP needs at least 2 weight layers, got %s", depth)
    return [width] * (depth - 2)


@dataclass(frozen=True)
class MlpModel:
    '''Weights are stored ``(fan_in, fan_out)``, applied as ``x @ W + b``'''
    layer_dims: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    sys: SystemParams
    activation: str = 'relu'
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.sys
        require(self.activation in ACTIVATIONS, "unknown activation %r", self.activation)
        require(self.layer_dims[0] == 2 * p.k_users * p.m_antennas,
                "input dimension must be 2KM=%d, got %d", 2 * p.k_users * p.m_antennas, self.layer_dims[0])
        require(self.layer_dims[-1] == 2 * p.m_antennas * p.k_users,
                "output dimension must be 2MK=%d, got %d", 2 * p.m_antennas * p.k_users, self.layer_dims[-1])
        require(len(self.weights) == len(self.biases) == len(self.layer_dims) - 1,
                "%d layer dims need %d weight matrices", len(self.layer_dims), len(self.layer_dims) - 1)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            require(w.shape == (self.layer_dims[i], self.layer_dims[i + 1]),
                    "weight %d has shape %s, expected %s", i, w.shape, self.layer_dims[i:i + 2])
            require(b.shape == (self.layer_dims[i + 1],), "bias %d has shape %s", i, b.shape)
            require(np.all(np.isfinite(w)) and np.all(np.isfinite(b)), "layer %d has non-finite parameters", i)

    @classmethod
    def build(cls, sys, depth=DEFAULT_DEPTH, width=DEFAULT_WIDTH, seed=0, hidden=None, provenance=None):
        '''He-initialized weights (normal, scaled by fan-in), zero biases'''
        io = 2 * sys.k_users * sys.m_antennas
        hidden = list(hidden) if hidden is not None else hidden_for_depth(depth, width)
        dims = tuple([io] + hidden + [io])
        rng = np.random.default_rng(seed)
        weights = tuple(rng.standard_normal((a, b)) * np.sqrt(2.0 / a) for a, b in zip(dims[:-1], dims[1:]))
        biases = tuple(np.zeros(b) for b in dims[1:])
        return cls(dims, weights, biases, sys, provenance=dict(provenance or {}))

    @property
    def depth(self):
        return len(self.weights)

    @property
    def parameter_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_vector(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def with_vector(self, vector):
        vector = np.asarray(vector, dtype=float)
        require(vector.shape == (self.parameter_count,), "expected %d parameters, got shape %s",
                self.parameter_count, vector.shape)
        weights, biases, at = [], [], 0
        for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            weights.append(vector[at:at + a * b].reshape(a, b))
            at += a * b
            biases.append(vector[at:at + b].copy())
            at += b
        return replace(self, weights=tuple(weights), biases=tuple(biases))

    def to_dict(self):
        return {
            'layer_dims': list(self.layer_dims),
            'activation': self.activation,
            'weights': [w.ravel().tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
            'sys': self.sys.to_dict(),
            'provenance': dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            dims = tuple(int(x) for x in d['layer_dims'])
            weights = tuple(np.array(w, dtype=float).reshape(a, b)
                            for w, a, b in zip(d['weights'], dims[:-1], dims[1:]))
            biases = tuple(np.array(b, dtype=float) for b in d['biases'])
            return cls(dims, weights, biases, SystemParams.from_dict(d['sys']),
                       d.get('activation', 'relu'), dict(d.get('provenance') or {}))
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetFormatError("malformed MLP document: %s", e)

    def save(self, path):
        try:
            with open(path, 'w') as f:
                json.dump(self.to_dict(), f)
        except OSError as e:
            raise DatasetIOError("cannot write model %s: %s", path, e)
        log.info("saved MLP %s to %s", self.layer_dims, path)

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


def features(h):
    """``[Re(H), Im(H)]`` flattened per channel, shape ``(..., 2KM)``"""
    lead = h.shape[:-2]
    return np.concatenate([h.real.reshape(lead + (-1,)), h.imag.reshape(lead + (-1,))], axis=-1)


def _to_beamformer(out, p):
    lead = out.shape[:-1]
    half = p.m_antennas * p.k_users
    shape = lead + (p.m_antennas, p.k_users)
    return out[..., :half].reshape(shape) + 1j * out[..., half:].reshape(shape)


def _from_beamformer(w):
    lead = w.shape[:-2]
    return np.concatenate([w.real.reshape(lead + (-1,)), w.imag.reshape(lead + (-1,))], axis=-1)


def _dense(m, x):
    '''returns the raw output and the activations feeding each layer'''
    inputs = []
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        inputs.append(x)
        x = x @ w + b
        if i < m.depth - 1:
            x = np.maximum(x, 0.0)
    return x, inputs


def mlp_forward(m, h):
    """feasible beamformers for one channel or a stack"""
    out, _ = _dense(m, features(h))
    return prox_power(_to_beamformer(out, m.sys), m.sys)


def mlp_loss_and_grad(m, h):
    '''sum-loss over a stack and its gradient w.r.t. :py:meth:`MlpModel.to_vector`

    The output gradient is the negated ascent direction pulled back through
    the exact projection Jacobian.
    '''
    p = m.sys
    out, inputs = _dense(m, features(h))
    z = _to_beamformer(out, p)
    w = prox_power(z, p)
    loss = -float(np.sum(sum_rate(h, w, p)))

    delta = _from_beamformer(prox_power_backward(z, -ascent_direction(h, w, p), p))
    delta = np.atleast_2d(delta)
    grads = [None] * m.depth
    for i in reversed(range(m.depth)):
        x = np.atleast_2d(inputs[i])
        grads[i] = np.concatenate([(x.T @ delta).ravel(), np.sum(delta, axis=0)])
        if i > 0:
            delta = (delta @ m.weights[i].T) * (x > 0)
    return loss, np.concatenate(grads)


def mlp_loss(m, h):
    w = mlp_forward(m, h)
    return -float(np.sum(sum_rate(h, w, m.sys)))


def mean_rate(m, h):
    return float(np.mean(sum_rate(h, mlp_forward(m, h), m.sys)))


def mlp_train(m, train_set, val_set, cfg=None, seed=None):
    '''train on the sum-loss by backpropagation, returns ``(best model, TrainingTrace)``'''
    cfg = cfg or TrainConfig()
    log.info("training MLP %s (%d parameters) on %d channels", m.layer_dims, m.parameter_count,
             len(train_set))

    def loss_and_grad(vector, h):
        return mlp_loss_and_grad(m.with_vector(vector), h)

    def evaluate(vector, h):
        return mean_rate(m.with_vector(vector), h)

    def describe(vector):
        return "|theta|=%.6g" % np.linalg.norm(vector)

    best, trace = fit(m.to_vector(), loss_and_grad, evaluate, train_set.channels, val_set.channels,
                      cfg, name='mlp', describe=describe)
    provenance = dict(m.provenance, seed=seed, train_size=len(train_set) + len(val_set))
    return replace(m.with_vector(best), provenance=provenance), trace
