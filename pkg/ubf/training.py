"""ubf.training -- the epoch loop shared by the unrolled network and the MLP

Models expose their trainable parameters as one flat real vector; the loop
only sees that vector, a ``loss_and_grad(vector, channels)`` function
returning the batch sum-loss and its gradient, and an ``evaluate(vector,
channels)`` function returning the mean validation sum-rate.
"""

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DatasetIOError, TrainingAborted, require

log = logging.getLogger('ubf.training')

OPTIMIZERS = ('adam', 'sgd')
SCHEDULERS = ('cosine', 'step')
GRAD_METHODS = ('auto', 'fd', 'analytic')

DEFAULT_LR = {'adam': 1e-3, 'sgd': 1e-2}
STEP_DECAY_EVERY = 50
FULL_BATCH_LIMIT = 1000
LARGE_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    '''Training meta-parameters

    ``base_lr`` defaults per optimizer; ``batch_size`` defaults to the full
    training set up to 1000 samples and 256 above.
    '''
    optimizer: str = 'adam'
    scheduler: str = 'cosine'
    base_lr: Optional[float] = None
    epochs: int = 200
    batch_size: Optional[int] = None
    early_stop_patience: int = 20
    grad_method: str = 'auto'

    def __post_init__(self):
        require(self.optimizer in OPTIMIZERS, "unknown optimizer %r", self.optimizer)
        require(self.scheduler in SCHEDULERS, "unknown scheduler %r", self.scheduler)
        require(self.grad_method in GRAD_METHODS, "unknown gradient method %r", self.grad_method)
        if self.base_lr is None:
            object.__setattr__(self, 'base_lr', DEFAULT_LR[self.optimizer])
        require(self.base_lr > 0, "base_lr must be positive, got %s", self.base_lr)
        require(self.epochs >= 1, "epochs must be at least 1, got %s", self.epochs)
        require(self.batch_size is None or self.batch_size >= 1,
                "batch_size must be positive, got %s", self.batch_size)
        require(self.early_stop_patience >= 1,
                "early_stop_patience must be positive, got %s", self.early_stop_patience)

    def batch_for(self, n):
        if self.batch_size is not None:
            return self.batch_size
        return n if n <= FULL_BATCH_LIMIT else LARGE_BATCH

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if d.get(k) is not None}
        return cls(**known)


def scheduler_lr(cfg, epoch):
    """learning rate of ``epoch`` (0 based)"""
    require(0 <= epoch < cfg.epochs, "epoch %s outside [0, %d)", epoch, cfg.epochs)
    if cfg.scheduler == 'cosine':
        return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
    return cfg.base_lr * 0.5 ** (epoch // STEP_DECAY_EVERY)


class Sgd(object):
    def step(self, params, grad, lr):
        return params - lr * grad


class Adam(object):
    '''Adam on a flat parameter vector, minimizing'''

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grad, lr):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name):
    require(name in OPTIMIZERS, "unknown optimizer %r", name)
    return Adam() if name == 'adam' else Sgd()


@dataclass
class TrainingTrace:
    '''Per-epoch record of a training run

    ``initial_val_rate`` is the validation rate of the initial parameters;
    ``best_epoch`` is -1 when no epoch improved on them.
    '''
    initial_val_rate: float = float('nan')
    epochs: List[int] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    train_losses: List[float] = field(default_factory=list)
    val_rates: List[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_rate: float = float('nan')

    def append(self, epoch, lr, train_loss, val_rate):
        self.epochs.append(epoch)
        self.lrs.append(lr)
        self.train_losses.append(train_loss)
        self.val_rates.append(val_rate)

    def __len__(self):
        return len(self.epochs)

    def to_rows(self):
        return [dict(epoch=e, lr=lr, train_loss=loss, val_rate=rate)
                for e, lr, loss, rate in zip(self.epochs, self.lrs, self.train_losses, self.val_rates)]

    def save_csv(self, path):
        try:
            with open(path, 'w', newline='') as f:
                w = csv.DictWriter(f, fieldnames=['epoch', 'lr', 'train_loss', 'val_rate'])
                w.writeheader()
                for row in self.to_rows():
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        except OSError as e:
            raise DatasetIOError("cannot write training trace %s: %s", path, e)


def fit(params, loss_and_grad, evaluate, train_channels, val_channels, cfg, name='model',
        describe=None):
    '''minimize the sum-loss over ``train_channels``

    Batches are sequential slices of the training set.  After every epoch the
    validation rate is measured; the best snapshot (starting with the initial
    parameters) is returned together with the trace.  Training stops early
    after ``cfg.early_stop_patience`` epochs without improvement.

    :param describe: maps a parameter vector to what :py:class:`TrainingAborted`
                     reports, defaults to the vector itself
    :raises TrainingAborted: on a non-finite loss or gradient
    '''
    require(len(train_channels) >= 1, "training set is empty")
    require(len(val_channels) >= 1, "validation set is empty")
    describe = describe or (lambda v: np.array(v))

    params = np.array(params, dtype=float)
    optimizer = make_optimizer(cfg.optimizer)
    batch = cfg.batch_for(len(train_channels))

    trace = TrainingTrace()
    best = params.copy()
    best_rate = trace.initial_val_rate = float(evaluate(params, val_channels))
    stale = 0

    for epoch in range(cfg.epochs):
        lr = scheduler_lr(cfg, epoch)
        epoch_loss = 0.0
        for start in range(0, len(train_channels), batch):
            loss, grad = loss_and_grad(params, train_channels[start:start + batch])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingAborted("%s: non-finite %s at epoch %d (params %s)" % (
                    name, 'loss' if not np.isfinite(loss) else 'gradient', epoch,
                    describe(params)), params=describe(params))
            params = optimizer.step(params, grad, lr)
            epoch_loss += loss

        val_rate = float(evaluate(params, val_channels))
        trace.append(epoch, lr, float(epoch_loss), val_rate)
        log.debug("%s epoch %d: lr %.3g, loss %.6f, val rate %.6f", name, epoch, lr, epoch_loss, val_rate)

        if val_rate > best_rate:
            best, best_rate, stale = params.copy(), val_rate, 0
            trace.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                log.info("%s: early stop at epoch %d", name, epoch)
                break

    trace.best_val_rate = best_rate
    if trace.best_epoch < 0:
        log.warning("%s: no epoch improved on the initial parameters", name)
    log.info("%s: best val rate %.6f at epoch %d", name, best_rate, trace.best_epoch)
    return best, trace
