"""ubf.bench -- experiment orchestration and reports

An experiment evaluates every method for every training set size and seed on
one shared test set and aggregates the per-seed mean test sum-rates into
:py:class:`ResultRow` objects.  With an ``output_dir`` it writes:

==========================  ===================================================
 file                        content
==========================  ===================================================
 ``config.json``             the experiment configuration
 ``results.csv``             one row per (method, train_size), deterministic
 ``results.json``            same rows as JSON
 ``relative.csv``            percentage of the PGD-200 mean, gains of Auto-PGD
 ``latency.csv``             inference cost per cell (timing, not deterministic)
 ``curves/*.csv``            training trace per trained cell
 ``models/*.json``           trained models
 ``diagnostics_*.csv``       per-layer rates of the unrolled models (first seed)
 ``hpo_<method>_<size>.jsonl``  search histories, resumable
==========================  ===================================================

Seeds: the training draw of a cell uses the experiment seed itself, model
initialization uses the experiment seed plus :py:data:`INIT_SEED_OFFSET`.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from .channel import EXPERIMENT_SEEDS, HPO_SEED, TEST_SEED, draw_subset, generate, split_train_val
from .config import ConfigDict
from .errors import ContractViolation, DatasetFormatError, DatasetIOError, ExperimentError, UbfError, require
from .hpo import SearchSpace, TRIAL_FACTORIES, budget_for, latency_sample, measure_latency, run_search
from .mlp import mlp_forward
from .objective import SystemParams, sum_rate
from .solvers import PGD_ITERATIONS, classical_pgd, wmmse, zero_forcing
from .training import TrainConfig
from .unrolled import UnrolledModel, forward

log = logging.getLogger('ubf.bench')

METHODS = ('zf', 'pgd200', 'wmmse100', 'mlp', 'pgdnet', 'autopgd', 'automlp')
SIZE_INDEPENDENT = ('zf', 'pgd200', 'wmmse100')
SEARCHED = {'autopgd': 'autopgd', 'automlp': 'automlp'}

#: fixed assignments of the methods trained without search
PGDNET = dict(depth=10, eta0=1e-3, optimizer='adam', scheduler='cosine', layer_type='standard')
MLP = dict(depth=5, lr=1e-3, scheduler='cosine')
FIXED = {'pgdnet': ('autopgd', PGDNET), 'mlp': ('automlp', MLP)}

INIT_SEED_OFFSET = 1000003
MASTER_SEED_OFFSET = 1

CSV_FIELDS = ['method', 'train_size', 'n_seeds', 'mean', 'std', 'ci95_lo', 'ci95_hi', 'per_seed_rates']
LATENCY_FIELDS = ['method', 'train_size', 'seed', 'depth', 'parameter_count', 'gradient_evaluations',
                  'latency_us', 'reduction_vs_pgd200']


def worker_count():
    '''worker threads, from ``UBF_THREADS`` (default 1)'''
    value = os.environ.get('UBF_THREADS', '1')
    try:
        n = int(value)
    except ValueError:
        raise ContractViolation("UBF_THREADS must be a positive integer, got %r", value)
    require(n >= 1, "UBF_THREADS must be a positive integer, got %r", value)
    return n


@dataclass(frozen=True)
class ExperimentConfig:
    sys: SystemParams = field(default_factory=SystemParams)
    train_sizes: Tuple[int, ...] = (100, 1000)
    seeds: Tuple[int, ...] = EXPERIMENT_SEEDS[:3]
    test_size: int = 2000
    test_seed: int = TEST_SEED
    hpo_seed: int = HPO_SEED
    methods: Tuple[str, ...] = METHODS
    hpo_budget_per_size: Dict[int, int] = field(default_factory=lambda: {100: 20, 1000: 20})
    output_dir: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    latency_limit_us: Optional[float] = None
    master_size: Optional[int] = None

    def __post_init__(self):
        require(len(self.train_sizes) >= 1, "train_sizes must not be empty")
        require(all(n >= 10 for n in self.train_sizes), "train sizes must be at least 10, got %s",
                list(self.train_sizes))
        require(len(self.seeds) >= 1, "seeds must not be empty")
        require(all(0 <= s < 2 ** 64 for s in self.seeds), "seeds must be unsigned 64-bit integers")
        require(self.test_size >= 1, "test_size must be at least 1, got %s", self.test_size)
        unknown = set(self.methods) - set(METHODS)
        require(not unknown, "unknown method(s) %s, expected a subset of %s", sorted(unknown), list(METHODS))
        require(all(b >= 1 for b in self.hpo_budget_per_size.values()), "HPO budgets must be positive")
        require(self.master_size is None or self.master_size >= max(self.train_sizes),
                "master_size %s is smaller than the largest training size", self.master_size)

    @classmethod
    def desk(cls, **kw):
        return cls(**kw)

    @classmethod
    def full(cls, **kw):
        d = dict(train_sizes=(100, 1000, 10000, 50000), seeds=EXPERIMENT_SEEDS, test_size=5000,
                 hpo_budget_per_size={100: 50, 1000: 50, 10000: 20, 50000: 5})
        d.update(kw)
        return cls(**d)

    def budget_for(self, size):
        return self.hpo_budget_per_size.get(size, budget_for(size))

    @classmethod
    def from_config(cls, cfg):
        '''build from a :py:class:`ConfigDict`, missing keys take the desk defaults'''
        cfg = cfg if isinstance(cfg, ConfigDict) else ConfigDict(cfg)
        base = cls()
        try:
            sys = dict(base.sys.to_dict(), **(cfg.get('sys') or {}))
            train = dict(base.train.to_dict(), **(cfg.get('train') or {}))
            budgets = cfg.get('hpo_budget_per_size')
            budgets = base.hpo_budget_per_size if budgets is None else {
                int(k): int(v) for k, v in budgets.items()}
            return cls(
                sys=SystemParams.from_dict(sys),
                train_sizes=tuple(int(n) for n in cfg.get('train_sizes', base.train_sizes)),
                seeds=tuple(int(s) for s in cfg.get('seeds', base.seeds)),
                test_size=int(cfg.get('test_size', base.test_size)),
                test_seed=int(cfg.get('test_seed', base.test_seed)),
                hpo_seed=int(cfg.get('hpo_seed', base.hpo_seed)),
                methods=tuple(cfg.get('methods', base.methods)),
                hpo_budget_per_size=budgets,
                output_dir=cfg.get('output_dir'),
                train=TrainConfig.from_dict(train),
                latency_limit_us=_optional(float, cfg.get('latency_limit_us')),
                master_size=_optional(int, cfg.get('master_size')),
            )
        except ContractViolation:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ContractViolation("bad experiment config: %s", e)

    def to_dict(self):
        return {
            'sys': self.sys.to_dict(),
            'train_sizes': list(self.train_sizes),
            'seeds': list(self.seeds),
            'test_size': self.test_size,
            'test_seed': self.test_seed,
            'hpo_seed': self.hpo_seed,
            'methods': list(self.methods),
            'hpo_budget_per_size': {str(k): v for k, v in sorted(self.hpo_budget_per_size.items())},
            'output_dir': self.output_dir,
            'train': {k: v for k, v in self.train.to_dict().items()
                      if k in ('epochs', 'early_stop_patience', 'batch_size', 'grad_method')},
            'latency_limit_us': self.latency_limit_us,
            'master_size': self.master_size,
        }


def _optional(kind, value):
    return None if value is None else kind(value)


def ci95_from_stats(mean, std, n):
    '''two-sided 95% t interval of a mean from ``n`` samples with sample std'''
    require(n >= 2, "a confidence interval needs at least 2 values, got %s", n)
    half = stats.t.ppf(0.975, n - 1) * std / math.sqrt(n)
    return mean - half, mean + half


def ci95(values):
    values = np.asarray(values, dtype=float)
    require(len(values) >= 2, "a confidence interval needs at least 2 values, got %d", len(values))
    return ci95_from_stats(float(np.mean(values)), float(np.std(values, ddof=1)), len(values))


@dataclass
class ResultRow:
    method: str
    train_size: int
    per_seed_rates: List[float]
    mean: float
    std: float
    ci95_lo: float
    ci95_hi: float

    @classmethod
    def from_rates(cls, method, train_size, rates):
        rates = [float(r) for r in rates]
        mean = float(np.mean(rates))
        if len(rates) >= 2:
            std = float(np.std(rates, ddof=1))
            lo, hi = ci95(rates)
        else:
            std, lo, hi = 0.0, mean, mean
        return cls(method, int(train_size), rates, mean, std, float(lo), float(hi))

    @property
    def n_seeds(self):
        return len(self.per_seed_rates)

    @property
    def sort_key(self):
        return self.method, self.train_size

    def to_dict(self):
        return asdict(self)

    def to_csv(self):
        return {
            'method': self.method,
            'train_size': self.train_size,
            'n_seeds': self.n_seeds,
            'mean': repr(self.mean),
            'std': repr(self.std),
            'ci95_lo': repr(self.ci95_lo),
            'ci95_hi': repr(self.ci95_hi),
            'per_seed_rates': ';'.join(repr(r) for r in self.per_seed_rates),
        }

    @classmethod
    def from_csv(cls, d):
        return cls(d['method'], int(d['train_size']),
                   [float(r) for r in d['per_seed_rates'].split(';') if r],
                   float(d['mean']), float(d['std']), float(d['ci95_lo']), float(d['ci95_hi']))


def _write_csv(path, fieldnames, rows):
    try:
        with open(path, 'w', newline='') as f:
            w = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
            w.writeheader()
            for row in rows:
                w.writerow(row)
    except OSError as e:
        raise DatasetIOError("cannot write %s: %s", path, e)


def report(rows, path, format='csv'):
    '''write result rows, sorted by (method, train_size)'''
    require(format in ('csv', 'json'), "unknown report format %r", format)
    rows = sorted(rows, key=lambda r: r.sort_key)
    if format == 'csv':
        _write_csv(path, CSV_FIELDS, [r.to_csv() for r in rows])
    else:
        try:
            with open(path, 'w') as f:
                json.dump([r.to_dict() for r in rows], f, indent=2)
                f.write('\n')
        except OSError as e:
            raise DatasetIOError("cannot write %s: %s", path, e)
    log.info("wrote %d result row(s) to %s", len(rows), path)


def read_report(path):
    '''read rows written by :py:func:`report`, either format'''
    try:
        with open(path, newline='') as f:
            text = f.read()
    except OSError as e:
        raise DatasetIOError("cannot read %s: %s", path, e)
    try:
        if text.lstrip().startswith('['):
            return [ResultRow(**d) for d in json.loads(text)]
        return [ResultRow.from_csv(d) for d in csv.DictReader(text.splitlines())]
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError("%s: malformed result rows: %s", path, e)


def relative_report(rows, reference='pgd200'):
    '''each row as percentage of the reference mean, plus Auto-PGD's gains

    ``autopgd_gain`` is set on the ``pgdnet`` and ``automlp`` rows: Auto-PGD's
    mean at the same size minus the row's mean.
    '''
    ref = [r for r in rows if r.method == reference]
    ref_mean = ref[0].mean if ref else None
    autopgd = {r.train_size: r.mean for r in rows if r.method == 'autopgd'}

    out = []
    for r in sorted(rows, key=lambda r: r.sort_key):
        gain = None
        if r.method in ('pgdnet', 'automlp') and r.train_size in autopgd:
            gain = autopgd[r.train_size] - r.mean
        out.append({
            'method': r.method,
            'train_size': r.train_size,
            'mean': r.mean,
            'percent_of_%s' % reference: None if not ref_mean else 100.0 * r.mean / ref_mean,
            'autopgd_gain': gain,
        })
    return out


def diagnostics_report(model, channels, path=None):
    '''mean sum-rate after every layer, row 0 is the ZF input

    Each row carries the layer's learned step size (none for row 0).
    '''
    _, diag = forward(model, channels, diagnostics=True)
    rows = [{'layer': 0, 'eta': None, 'mean_rate': float(np.mean(diag.per_layer_rate[0]))}]
    for i, (layer, rate) in enumerate(zip(model.layers, diag.per_layer_rate[1:])):
        rows.append({'layer': i + 1, 'eta': layer.eta, 'mean_rate': float(np.mean(rate))})
    if path:
        _write_csv(path, ['layer', 'eta', 'mean_rate'],
                   [{k: '' if v is None else repr(v) if isinstance(v, float) else v for k, v in row.items()}
                    for row in rows])
    return rows


@dataclass
class CellResult:
    method: str
    train_size: int
    seed: int
    rate: float
    latency: dict = field(default_factory=dict)
    model: object = field(default=None, repr=False)
    trace: object = field(default=None, repr=False)


class Experiment(object):
    '''state of one :py:func:`run_experiment` call'''

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg.output_dir
        p = cfg.sys
        self.test = generate(cfg.test_seed, cfg.test_size, p.k_users, p.m_antennas, 'test')
        self.master = None
        if cfg.master_size:
            self.master = generate(cfg.test_seed + MASTER_SEED_OFFSET, cfg.master_size,
                                   p.k_users, p.m_antennas, 'master')
        self.assignments = {}
        self.cells = []

    def path(self, *parts):
        return os.path.join(self.out, *parts) if self.out else None

    def data(self, size, seed):
        p = self.cfg.sys
        if self.master is not None:
            d = draw_subset(self.master, size, seed)
        else:
            d = generate(seed, size, p.k_users, p.m_antennas, 'train')
        return split_train_val(d)

    def test_rate(self, w):
        return float(np.mean(sum_rate(self.test.channels, w, self.cfg.sys)))

    def solve(self, method):
        p = self.cfg.sys
        h = self.test.channels
        log.info("evaluating %s on %d test channels", method, len(h))
        if method == 'zf':
            w, run, evals = zero_forcing(h, p), (lambda x: zero_forcing(x, p)), 0
        elif method == 'pgd200':
            w, run, evals = classical_pgd(h, p).w_final, (lambda x: classical_pgd(x, p)), PGD_ITERATIONS
        else:
            w, run, evals = wmmse(h, p).w_final, (lambda x: wmmse(x, p)), 0
        latency = dict(depth='', parameter_count=0, gradient_evaluations=evals,
                       latency_us=measure_latency(run, latency_sample(self.test)),
                       reduction_vs_pgd200='')
        return CellResult(method, 0, self.cfg.seeds[0], self.test_rate(w), latency)

    def search(self, method, size):
        '''HPO on the HPO seed's data, the assignment is reused for every seed'''
        cfg = self.cfg
        train, val = self.data(size, cfg.hpo_seed)
        trial = TRIAL_FACTORIES[SEARCHED[method]](train, val, cfg.sys, cfg.train, cfg.hpo_seed,
                                                  dict(train_size=size))
        best, _ = run_search(SearchSpace.named(SEARCHED[method]), cfg.budget_for(size), trial,
                             cfg.latency_limit_us, cfg.hpo_seed,
                             self.path('hpo_%s_%d.jsonl' % (method, size)))
        log.info("%s at N=%d: chose %s (trial %d, val rate %.6f)", method, size, best.assignment,
                 best.trial_id, best.val_rate)
        self.assignments[method, size] = best
        return best

    def train(self, method, size, seed):
        cfg = self.cfg
        if method in FIXED:
            space, assignment = FIXED[method]
            trial_id = None
        else:
            space = SEARCHED[method]
            best = self.assignments[method, size]
            assignment, trial_id = best.assignment, best.trial_id

        log.info("training %s at N=%d, seed %d", method, size, seed)
        try:
            train, val = self.data(size, seed)
            trial = TRIAL_FACTORIES[space](train, val, cfg.sys, cfg.train, seed + INIT_SEED_OFFSET,
                                           dict(train_size=size))
            outcome = trial(assignment, trial_id)
            model = replace(outcome.model, provenance=dict(outcome.model.provenance, seed=seed,
                                                           train_size=size, hpo_trial_id=trial_id))
            if isinstance(model, UnrolledModel):
                w, _ = forward(model, self.test.channels)
            else:
                w = mlp_forward(model, self.test.channels)
        except UbfError as e:
            raise ExperimentError(method, size, seed, e)

        unrolled = isinstance(model, UnrolledModel)
        latency = dict(depth=model.depth, parameter_count=model.parameter_count,
                       gradient_evaluations=model.depth if unrolled else 0,
                       latency_us=outcome.latency_us,
                       reduction_vs_pgd200=PGD_ITERATIONS / model.depth if unrolled else '')
        return CellResult(method, size, seed, self.test_rate(w), latency, model, outcome.trace)

    def save_cell(self, cell):
        if not self.out or cell.model is None:
            return
        name = '%s_%d_%d' % (cell.method, cell.train_size, cell.seed)
        cell.trace.save_csv(self.path('curves', name + '.csv'))
        cell.model.save(self.path('models', name + '.json'))
        if isinstance(cell.model, UnrolledModel) and cell.seed == self.cfg.seeds[0]:
            diagnostics_report(cell.model, self.test.channels,
                               self.path('diagnostics_%s_%d.csv' % (cell.method, cell.train_size)))

    def rows(self):
        rows = []
        n_seeds = len(self.cfg.seeds)
        for cell in self.cells:
            if cell.method in SIZE_INDEPENDENT:
                rows.append(ResultRow.from_rates(cell.method, 0, [cell.rate] * n_seeds))
        trained = {}
        for cell in self.cells:
            if cell.method not in SIZE_INDEPENDENT:
                trained.setdefault((cell.method, cell.train_size), {})[cell.seed] = cell.rate
        for (method, size), by_seed in trained.items():
            rows.append(ResultRow.from_rates(method, size, [by_seed[s] for s in self.cfg.seeds
                                                            if s in by_seed]))
        return sorted(rows, key=lambda r: r.sort_key)

    def flush_partial(self):
        if self.out:
            report(self.rows(), self.path('results.partial.json'), 'json')
            log.warning("partial results written to %s", self.path('results.partial.json'))

    def write(self, rows):
        if not self.out:
            return
        report(rows, self.path('results.csv'), 'csv')
        report(rows, self.path('results.json'), 'json')
        relative = relative_report(rows)
        _write_csv(self.path('relative.csv'), list(relative[0]) if relative else ['method'],
                   [{k: '' if v is None else v for k, v in r.items()} for r in relative])
        cells = sorted(self.cells, key=lambda c: (c.method, c.train_size, c.seed))
        _write_csv(self.path('latency.csv'), LATENCY_FIELDS,
                   [dict(c.latency, method=c.method, train_size=c.train_size, seed=c.seed) for c in cells])


def run_experiment(cfg):
    '''evaluate every (method, train_size, seed) cell of ``cfg``

    Size-independent methods are computed once; their row has ``train_size``
    0 and repeats the rate for every seed.  Trained cells run on
    ``UBF_THREADS`` worker threads.

    :raises ExperimentError: when a cell fails.  On any failure the finished
                             rows are flushed to ``results.partial.json`` first.
    '''
    if not cfg.methods:
        return []
    exp = Experiment(cfg)
    if exp.out:
        for d in (exp.out, exp.path('curves'), exp.path('models')):
            try:
                os.makedirs(d, exist_ok=True)
            except OSError as e:
                raise DatasetIOError("cannot create %s: %s", d, e)
        try:
            with open(exp.path('config.json'), 'w') as f:
                json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        except OSError as e:
            raise DatasetIOError("cannot write %s: %s", exp.path('config.json'), e)

    methods = [m for m in METHODS if m in cfg.methods]
    try:
        for method in methods:
            if method in SIZE_INDEPENDENT:
                try:
                    exp.cells.append(exp.solve(method))
                except UbfError as e:
                    raise ExperimentError(method, 0, None, e)

        for method in methods:
            if method in SEARCHED:
                for size in cfg.train_sizes:
                    try:
                        exp.search(method, size)
                    except UbfError as e:
                        raise ExperimentError(method, size, cfg.hpo_seed, e)

        jobs = [(m, n, s) for m in methods if m not in SIZE_INDEPENDENT
                for n in cfg.train_sizes for s in cfg.seeds]
        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            futures = [pool.submit(exp.train, *job) for job in jobs]
            for future in futures:
                cell = future.result()
                exp.cells.append(cell)
                exp.save_cell(cell)
    except BaseException:
        exp.flush_partial()
        raise

    rows = exp.rows()
    exp.write(rows)
    for row in rows:
        log.info("%-9s N=%-6d mean %.4f  std %.4f  CI [%.4f, %.4f]", row.method, row.train_size,
                 row.mean, row.std, row.ci95_lo, row.ci95_hi)
    return rows
