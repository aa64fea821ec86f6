"""ubf.hpo -- Tree-structured Parzen Estimator search

A search space is a tuple of dimensions:

* :py:class:`IntRange` -- integers, sampled as a continuous value and rounded
* :py:class:`LogUniform` -- positive reals, sampled in the log10 domain
* :py:class:`Categorical` -- unordered choices

The first ``n_startup`` trials (and any trial whose history cannot be split
into a non-empty good and bad set) draw uniformly from the space.  Afterwards
completed trials are ranked by validation rate and split at the ``gamma``
quantile; one Parzen density is fitted per dimension on each side and the
candidate (drawn from the good density) with the largest density ratio is
suggested.

Each trial draws from its own generator seeded with ``(seed, trial_id)``, so a
search resumed from its history file continues exactly as an uninterrupted
one would.
"""

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import truncnorm

from .channel import HPO_SEED
from .errors import DatasetFormatError, DatasetIOError, SearchFailed, UbfError, require
from .mlp import MlpModel, mlp_forward, mlp_train
from .training import TrainConfig
from .unrolled import UnrolledModel, forward, train

log = logging.getLogger('ubf.hpo')

STATUS_COMPLETE = 'complete'
STATUS_FAILED = 'failed'
STATUS_PRUNED = 'pruned-by-latency'
STATUSES = (STATUS_COMPLETE, STATUS_FAILED, STATUS_PRUNED)

#: trial budgets by training set size, smaller sizes use the first entry
BUDGET_PRESETS = {100: 50, 1000: 50, 10000: 20, 50000: 5}

LATENCY_WARMUP = 32
LATENCY_CALLS = 256

BANDWIDTH_FLOOR = 0.01
PSEUDO_COUNT = 1.0


@dataclass(frozen=True)
class IntRange:
    name: str
    low: int
    high: int

    def __post_init__(self):
        require(self.low <= self.high, "%s: empty range [%s, %s]", self.name, self.low, self.high)

    @property
    def bounds(self):
        return float(self.low), float(self.high)

    def to_internal(self, value):
        return float(value)

    def from_internal(self, x):
        return int(min(max(round(x), self.low), self.high))

    def contains(self, value):
        return isinstance(value, int) and self.low <= value <= self.high


@dataclass(frozen=True)
class LogUniform:
    name: str
    low: float
    high: float

    def __post_init__(self):
        require(0 < self.low < self.high, "%s: need 0 < low < high, got [%s, %s]",
                self.name, self.low, self.high)

    @property
    def bounds(self):
        return math.log10(self.low), math.log10(self.high)

    def to_internal(self, value):
        return math.log10(value)

    def from_internal(self, x):
        return float(min(max(10.0 ** x, self.low), self.high))

    def contains(self, value):
        return self.low <= value <= self.high


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: Tuple[str, ...]

    def __post_init__(self):
        require(len(self.choices) >= 1, "%s: no choices", self.name)

    def contains(self, value):
        return value in self.choices


@dataclass(frozen=True)
class SearchSpace:
    name: str
    dims: Tuple = ()

    @classmethod
    def autopgd(cls):
        return cls('autopgd', (
            IntRange('depth', 3, 25),
            LogUniform('eta0', 1e-4, 1e-1),
            Categorical('optimizer', ('adam', 'sgd')),
            Categorical('scheduler', ('cosine', 'step')),
            Categorical('layer_type', ('standard', 'hybrid')),
        ))

    @classmethod
    def automlp(cls):
        return cls('automlp', (
            IntRange('depth', 3, 8),
            LogUniform('lr', 1e-4, 1e-1),
            Categorical('scheduler', ('cosine', 'step')),
        ))

    @classmethod
    def named(cls, name):
        require(name in ('autopgd', 'automlp'), "unknown search space %r", name)
        return getattr(cls, name)()

    def contains(self, assignment):
        return all(d.contains(assignment.get(d.name)) for d in self.dims)


@dataclass
class TrialRecord:
    '''One evaluated trial, ``val_rate`` is None unless complete'''
    trial_id: int
    assignment: dict
    val_rate: Optional[float] = None
    latency_us: Optional[float] = None
    status: str = STATUS_COMPLETE

    @property
    def score(self):
        """ranking key, pruned and failed trials rank at ``-inf``"""
        return self.val_rate if self.status == STATUS_COMPLETE else -math.inf

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        require(d.get('status') in STATUSES, "unknown trial status %r", d.get('status'))
        return cls(int(d['trial_id']), dict(d['assignment']), d.get('val_rate'),
                   d.get('latency_us'), d['status'])


@dataclass(frozen=True)
class TpeConfig:
    n_startup: int = 10
    gamma: float = 0.25
    n_candidates: int = 24
    budget: int = 50
    seed: int = HPO_SEED

    def __post_init__(self):
        require(self.budget >= 1, "budget must be at least 1, got %s", self.budget)
        require(0 <= self.n_startup < self.budget,
                "n_startup (%s) must be below the budget (%s)", self.n_startup, self.budget)
        require(0 < self.gamma < 1, "gamma must lie in (0, 1), got %s", self.gamma)
        require(self.n_candidates >= 1, "n_candidates must be positive, got %s", self.n_candidates)

    @classmethod
    def for_budget(cls, budget, seed=HPO_SEED, **kw):
        n_startup = min(cls.n_startup, max(budget - 1, 0))
        return cls(n_startup=n_startup, budget=budget, seed=seed, **kw)


def budget_for(train_size):
    budget = BUDGET_PRESETS[min(BUDGET_PRESETS)]
    for size in sorted(BUDGET_PRESETS):
        if train_size >= size:
            budget = BUDGET_PRESETS[size]
    return budget


def trial_rng(seed, trial_id):
    return np.random.default_rng(np.random.SeedSequence([seed, trial_id]))


def sample_random(space, rng):
    assignment = {}
    for d in space.dims:
        if isinstance(d, Categorical):
            assignment[d.name] = d.choices[rng.integers(len(d.choices))]
        else:
            lo, hi = d.bounds
            assignment[d.name] = d.from_internal(rng.uniform(lo, hi))
    return assignment


def split_history(history, gamma):
    '''split completed trials into (good, bad) at the gamma quantile

    Trials are ranked by validation rate, ties by lower ``trial_id``; the good
    set holds ``ceil(gamma n)`` trials, at least one.
    '''
    complete = sorted((r for r in history if r.status == STATUS_COMPLETE),
                      key=lambda r: (-r.val_rate, r.trial_id))
    n_good = max(1, int(math.ceil(gamma * len(complete))))
    return complete[:n_good], complete[n_good:]


class _Parzen(object):
    '''truncated Gaussian kernels plus a uniform prior on ``[lo, hi]``'''

    def __init__(self, points, lo, hi):
        self.mu = np.asarray(points, dtype=float)
        self.lo, self.hi = lo, hi
        n = len(self.mu)
        width = hi - lo
        spread = np.std(self.mu) * n ** (-0.2) if n > 1 else 0.0
        self.sigma = max(spread, BANDWIDTH_FLOOR * width) if width > 0 else 1.0
        self.a = (lo - self.mu) / self.sigma
        self.b = (hi - self.mu) / self.sigma
        self.mass = ndtr(self.b) - ndtr(self.a)

    def log_pdf(self, x):
        n = len(self.mu)
        width = self.hi - self.lo
        if width <= 0:
            return 0.0
        z = (x - self.mu) / self.sigma
        kernels = np.exp(-0.5 * z ** 2) / (math.sqrt(2 * math.pi) * self.sigma * self.mass)
        return math.log((np.sum(kernels) + 1.0 / width) / (n + 1))

    def sample(self, rng):
        i = rng.integers(len(self.mu) + 1)
        if i == len(self.mu) or self.hi <= self.lo:
            return rng.uniform(self.lo, self.hi)
        return float(truncnorm.rvs(self.a[i], self.b[i], loc=self.mu[i], scale=self.sigma,
                                   random_state=rng))


class _Frequencies(object):
    def __init__(self, values, choices):
        counts = np.array([sum(1 for v in values if v == c) for c in choices], dtype=float)
        self.choices = choices
        self.p = (counts + PSEUDO_COUNT) / (counts.sum() + PSEUDO_COUNT * len(choices))

    def log_pdf(self, value):
        return math.log(self.p[self.choices.index(value)])

    def sample(self, rng):
        return self.choices[rng.choice(len(self.choices), p=self.p)]


def _fit(dim, records):
    values = [r.assignment[dim.name] for r in records]
    if isinstance(dim, Categorical):
        return _Frequencies(values, dim.choices)
    lo, hi = dim.bounds
    return _Parzen([dim.to_internal(v) for v in values], lo, hi)


def suggest(history, space, cfg, rng=None):
    '''next assignment to evaluate

    :param rng: generator of this trial, defaults to the one derived from
                ``cfg.seed`` and the number of recorded trials
    '''
    require(len(space.dims) >= 1, "search space %r is empty", space.name)
    rng = rng if rng is not None else trial_rng(cfg.seed, len(history))

    complete = [r for r in history if r.status == STATUS_COMPLETE]
    if len(complete) < max(cfg.n_startup, 2):
        return sample_random(space, rng)
    good, bad = split_history(complete, cfg.gamma)
    if not good or not bad:
        return sample_random(space, rng)

    models = [(d, _fit(d, good), _fit(d, bad)) for d in space.dims]
    best, best_score = None, -math.inf
    for _ in range(cfg.n_candidates):
        candidate, score = {}, 0.0
        for d, l, g in models:
            x = l.sample(rng)
            score += l.log_pdf(x) - g.log_pdf(x)
            candidate[d.name] = x if isinstance(d, Categorical) else d.from_internal(x)
        if score > best_score:
            best, best_score = candidate, score
    return best


@dataclass
class TrialOutcome:
    '''What a trial function returns; ``model`` and ``trace`` are optional extras'''
    val_rate: float
    latency_us: Optional[float] = None
    model: object = field(default=None, repr=False)
    trace: object = field(default=None, repr=False)


def read_history(path):
    if not path or not os.path.exists(path):
        return []
    try:
        with open(path) as f:
            lines = [line for line in f if line.strip()]
    except OSError as e:
        raise DatasetIOError("cannot read search history %s: %s", path, e)
    try:
        history = [TrialRecord.from_json(line) for line in lines]
    except (ValueError, KeyError, TypeError) as e:
        raise DatasetFormatError("%s: malformed search history: %s", path, e)
    log.info("resuming search from %s with %d recorded trial(s)", path, len(history))
    return history


def _append_history(path, record):
    if not path:
        return
    try:
        with open(path, 'a') as f:
            f.write(record.to_json() + '\n')
    except OSError as e:
        raise DatasetIOError("cannot append to search history %s: %s", path, e)


def best_trial(history):
    complete = [r for r in history if r.status == STATUS_COMPLETE]
    if not complete:
        return None
    return min(complete, key=lambda r: (-r.val_rate, r.trial_id))


def run_search(space, budget, train_fn, latency_limit_us=None, seed=HPO_SEED, history_path=None,
               cfg=None):
    '''evaluate ``budget`` trials sequentially

    :param train_fn: ``train_fn(assignment, trial_id)`` returning a
                     :py:class:`TrialOutcome`; numeric failures mark the
                     trial failed
    :param latency_limit_us: prune trials slower than this, ``None`` only records
    :param history_path: JSON-lines file, appended to and resumed from
    :returns: ``(best TrialRecord, history)``
    :raises SearchFailed: if no trial completed
    '''
    require(budget >= 1, "budget must be at least 1, got %s", budget)
    cfg = cfg or TpeConfig.for_budget(budget, seed=seed)
    history = read_history(history_path)

    for trial_id in range(len(history), budget):
        assignment = suggest(history, space, cfg, trial_rng(cfg.seed, trial_id))
        try:
            outcome = train_fn(assignment, trial_id)
        except UbfError as e:
            log.warning("trial %d %s failed: %s", trial_id, assignment, e)
            record = TrialRecord(trial_id, assignment, status=STATUS_FAILED)
        else:
            if outcome.val_rate is None or not math.isfinite(outcome.val_rate):
                log.warning("trial %d %s: non-finite validation rate", trial_id, assignment)
                record = TrialRecord(trial_id, assignment, None, outcome.latency_us, STATUS_FAILED)
            elif latency_limit_us is not None and outcome.latency_us is not None \
                    and outcome.latency_us > latency_limit_us:
                log.warning("trial %d pruned: latency %.1f us over the limit of %.1f us",
                            trial_id, outcome.latency_us, latency_limit_us)
                record = TrialRecord(trial_id, assignment, None, outcome.latency_us, STATUS_PRUNED)
            else:
                record = TrialRecord(trial_id, assignment, float(outcome.val_rate), outcome.latency_us)
        history.append(record)
        _append_history(history_path, record)
        log.info("trial %d/%d %s: %s %s", trial_id + 1, budget, assignment, record.status,
                 "" if record.val_rate is None else "%.6f" % record.val_rate)

    best = best_trial(history)
    if best is None:
        raise SearchFailed("%s search: none of %d trials completed" % (space.name, len(history)), history)
    log.info("%s search: best trial %d %s with val rate %.6f", space.name, best.trial_id,
             best.assignment, best.val_rate)
    return best, history


def measure_latency(model, channels, warmup=LATENCY_WARMUP, calls=LATENCY_CALLS):
    '''median wall-clock microseconds of a single-channel forward pass

    :param model: an :py:class:`UnrolledModel`, an :py:class:`MlpModel` or any
                  function mapping one channel to a beamformer
    '''
    require(len(channels) >= LATENCY_WARMUP, "need at least %d sample channels, got %d",
            LATENCY_WARMUP, len(channels))
    if callable(model):
        run = model
    elif isinstance(model, MlpModel):
        def run(h):
            return mlp_forward(model, h)
    else:
        def run(h):
            return forward(model, h)

    n = len(channels)
    for i in range(warmup):
        run(channels[i % n])
    times = np.empty(calls)
    for i in range(calls):
        h = channels[i % n]
        start = time.perf_counter()
        run(h)
        times[i] = time.perf_counter() - start
    return float(np.median(times) * 1e6)


def latency_sample(*datasets):
    '''channels for :py:func:`measure_latency`, repeated when the sets are small'''
    channels = np.concatenate([d.channels for d in datasets])
    if len(channels) < LATENCY_WARMUP:
        channels = np.resize(channels, (LATENCY_WARMUP,) + channels.shape[1:])
    return channels


def _trial_cfg(base_cfg, **kw):
    return TrainConfig(epochs=base_cfg.epochs, batch_size=base_cfg.batch_size,
                       early_stop_patience=base_cfg.early_stop_patience, **kw)


def make_autopgd_trial(train_set, val_set, sys, base_cfg, seed=HPO_SEED, provenance=None):
    '''trial function training an unrolled model per assignment'''
    sample = latency_sample(train_set, val_set)

    def trial(assignment, trial_id):
        model = UnrolledModel.build(assignment['depth'], assignment['eta0'], sys,
                                    assignment['layer_type'],
                                    dict(provenance or {}, hpo_trial_id=trial_id))
        cfg = _trial_cfg(base_cfg, optimizer=assignment['optimizer'],
                         scheduler=assignment['scheduler'], grad_method=base_cfg.grad_method)
        model, trace = train(model, train_set, val_set, cfg, seed)
        return TrialOutcome(trace.best_val_rate, measure_latency(model, sample), model, trace)
    return trial


def make_automlp_trial(train_set, val_set, sys, base_cfg, seed=HPO_SEED, provenance=None):
    '''trial function training an MLP per assignment'''
    sample = latency_sample(train_set, val_set)

    def trial(assignment, trial_id):
        model = MlpModel.build(sys, depth=assignment['depth'], seed=seed,
                               provenance=dict(provenance or {}, hpo_trial_id=trial_id))
        cfg = _trial_cfg(base_cfg, optimizer='adam', scheduler=assignment['scheduler'],
                         base_lr=assignment['lr'])
        model, trace = mlp_train(model, train_set, val_set, cfg, seed)
        return TrialOutcome(trace.best_val_rate, measure_latency(model, sample), model, trace)
    return trial


TRIAL_FACTORIES = {'autopgd': make_autopgd_trial, 'automlp': make_automlp_trial}
