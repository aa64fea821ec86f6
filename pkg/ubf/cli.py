"""ubf -- unrolled projected gradient beamforming toolkit

Commands:

  gen-data   draw a Rayleigh channel dataset
  solve      run ZF, PGD or WMMSE on a dataset
  train      train PGD-Net, an unrolled model or an MLP
  hpo        TPE hyperparameter search for Auto-PGD or Auto-MLP
  bench      run an experiment from a config file
  diag       per-layer rates of an unrolled model
  report     convert result rows between CSV and JSON

Exit codes: 0 success, 1 bad input, 2 numeric failure, 3 I/O failure.
"""

import csv
import logging

import numpy as np

from . import channel
from .arguments import arg, opt, parse_seed, positive_float, positive_int
from .bench import FIXED, ExperimentConfig, diagnostics_report, read_report, report, run_experiment
from .config import ConfigDict, apply_overrides, load_config
from .errors import DatasetIOError, require
from .hpo import SearchSpace, TRIAL_FACTORIES, budget_for, run_search
from .main import Main
from .objective import SystemParams, sum_rate
from .solvers import classical_pgd, wmmse, zero_forcing
from .training import TrainConfig
from .unrolled import UnrolledModel

log = logging.getLogger('ubf.cli')

main = Main(prog='ubf', description=__doc__)
command = main.command


@arg('--seed', help="random seed (unsigned 64 bit)", default=0)
def seed_arg(value):
    return parse_seed(value)


@arg('--p-max', help="transmit power budget (default: 1.0)", default=None)
def p_max_arg(value):
    return positive_float(value)


@arg('--noise-var', help="noise variance (default: 0.1)", default=None)
def noise_var_arg(value):
    return positive_float(value)


@arg('--epochs', help="training epochs", default=None)
def epochs_arg(value):
    return positive_int(value)


#: training options a model family does not take
IGNORED = {
    "pgdnet": {"depth", "eta0", "layer_type", "optimizer", "scheduler", "lr"},
    "unrolled": {"lr"},
    "mlp": {"eta0", "layer_type", "optimizer"},
}

set_arg = arg('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
              help="override a config value, e.g. --set sys.p_max=2 (repeatable)")


def _sys_for(dataset, cfg=None, p_max=None, noise_var=None):
    d = dict(SystemParams().to_dict(), **((cfg or {}).get('sys') or {}))
    d.update(k_users=dataset.k_users, m_antennas=dataset.m_antennas)
    if p_max is not None:
        d['p_max'] = p_max
    if noise_var is not None:
        d['noise_var'] = noise_var
    return SystemParams.from_dict(d)


def _write_rows(path, fieldnames, rows):
    try:
        with open(path, 'w', newline='') as f:
            w = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
            w.writeheader()
            w.writerows(rows)
    except OSError as e:
        raise DatasetIOError("cannot write %s: %s", path, e)


@command('gen-data',
    seed_arg,
    arg('--count', help="number of channels", type=positive_int, required=True),
    arg('--k-users', help="users (default: 4)", type=positive_int, default=4),
    arg('--m-antennas', help="transmit antennas (default: 8)", type=positive_int, default=8),
    arg('--split-tag', help="split tag stored in the file", choices=channel.SPLIT_TAGS, default='train'),
    arg('out', help="dataset file to write"),
)
def gen_data(seed, count, k_users, m_antennas, split_tag, out):
    '''draw a Rayleigh channel dataset

    Channels are i.i.d. CN(0, 1); the same seed gives the same file.
    '''
    channel.save(channel.generate(seed, count, k_users, m_antennas, split_tag), out)


@command('solve',
    arg('--method', help="solver", choices=('zf', 'pgd', 'wmmse'), required=True),
    arg('--iters', help="iterations (default: 200 for pgd, 100 for wmmse)", type=positive_int),
    opt('--no-backtracking', help="pgd: keep the fixed step of 0.05"),
    p_max_arg,
    noise_var_arg,
    arg('dataset', help="dataset file"),
    arg('out', help="CSV file with one sum-rate per channel"),
)
def solve(method, iters, no_backtracking, p_max, noise_var, dataset, out):
    '''run a classical solver on every channel of a dataset'''
    d = channel.load(dataset)
    p = _sys_for(d, p_max=p_max, noise_var=noise_var)
    h = d.channels
    if method == 'zf':
        w = zero_forcing(h, p)
    elif method == 'pgd':
        w = classical_pgd(h, p, backtracking=not no_backtracking,
                          **({'iters': iters} if iters else {})).w_final
    else:
        w = wmmse(h, p, **({'iters': iters} if iters else {})).w_final
    rates = sum_rate(h, w, p)
    _write_rows(out, ['index', 'sum_rate'], [{'index': i, 'sum_rate': repr(float(r))}
                                            for i, r in enumerate(rates)])
    log.info("%s on %d channels: mean sum-rate %.6f", method, len(h), np.mean(rates))
    print("%s mean sum-rate: %.6f bits/s/Hz" % (method, np.mean(rates)))


@command('train',
    arg('--method', help="model family", choices=('pgdnet', 'unrolled', 'mlp'), required=True),
    arg('--train-data', help="training dataset, split 90/10 into train and validation", required=True),
    arg('--depth', help="layers (unrolled) or weight layers (mlp)", type=positive_int),
    arg('--eta0', help="initial step size of every layer", type=positive_float),
    arg('--layer-type', help="unrolled layer type", choices=('standard', 'hybrid')),
    arg('--optimizer', choices=('adam', 'sgd')),
    arg('--scheduler', choices=('cosine', 'step')),
    arg('--lr', help="base learning rate", type=positive_float),
    epochs_arg,
    seed_arg,
    arg('--config', '-C', help="experiment config supplying sys and train settings"),
    set_arg,
    arg('--trace', help="write the training trace to this CSV file"),
    arg('out_model', help="model file to write (JSON)"),
)
def train(method, train_data, depth, eta0, layer_type, optimizer, scheduler, lr, epochs, seed,
          config, overrides, trace, out_model):
    '''train a model on a dataset

    pgdnet is the unrolled model with 10 layers, eta0 1e-3, adam and cosine
    schedule; its options cannot be changed.
    '''
    cfg = load_config(config) if config else ConfigDict()
    apply_overrides(cfg, overrides)
    d = channel.load(train_data)
    require(d.split_tag == 'train', "%s holds a %r split, expected 'train'", train_data, d.split_tag)
    p = _sys_for(d, cfg)
    train_set, val_set = channel.split_train_val(d)

    base = TrainConfig.from_dict(dict(cfg.get('train') or {}, **({'epochs': epochs} if epochs else {})))
    if method == 'pgdnet':
        space, assignment = FIXED['pgdnet']
    elif method == 'unrolled':
        space = 'autopgd'
        assignment = dict(FIXED['pgdnet'][1])
        assignment.update({k: v for k, v in dict(depth=depth, eta0=eta0, layer_type=layer_type,
                                                  optimizer=optimizer, scheduler=scheduler).items()
                           if v is not None})
    else:
        space, assignment = FIXED['mlp'][0], dict(FIXED['mlp'][1])
        assignment.update({k: v for k, v in dict(depth=depth, lr=lr, scheduler=scheduler).items()
                           if v is not None})
    given = dict(depth=depth, eta0=eta0, layer_type=layer_type, optimizer=optimizer, scheduler=scheduler, lr=lr)
    ignored = sorted(IGNORED[method] & {k for k, v in given.items() if v is not None})
    if ignored:
        log.warning("%s ignores %s", method, ", ".join("--" + k.replace("_", "-") for k in ignored))

    outcome = TRIAL_FACTORIES[space](train_set, val_set, p, base, seed, dict(train_size=len(d)))(
        assignment, None)
    outcome.model.save(out_model)
    if trace:
        outcome.trace.save_csv(trace)
    print("%s: best val rate %.6f bits/s/Hz (epoch %d)" % (method, outcome.val_rate,
                                                           outcome.trace.best_epoch))


@command('hpo',
    arg('--space', help="search space", choices=('autopgd', 'automlp'), required=True),
    arg('--budget', help="trials (default: by dataset size)", type=positive_int),
    arg('--latency-limit-us', help="prune trials slower than this", type=positive_float),
    arg('--seed', help="search seed (default: 0)", type=parse_seed, default=channel.HPO_SEED),
    epochs_arg,
    arg('dataset', help="training dataset, split 90/10 into train and validation"),
    arg('history_out', help="JSON-lines trial history, resumed when it exists"),
)
def hpo(space, budget, latency_limit_us, seed, epochs, dataset, history_out):
    '''TPE search over the Auto-PGD or Auto-MLP space

    Prints the best trial as JSON.
    '''
    d = channel.load(dataset)
    p = _sys_for(d)
    train_set, val_set = channel.split_train_val(d)
    base = TrainConfig(**({'epochs': epochs} if epochs else {}))
    trial = TRIAL_FACTORIES[space](train_set, val_set, p, base, seed, dict(train_size=len(d)))
    best, _ = run_search(SearchSpace.named(space), budget or budget_for(len(d)), trial,
                         latency_limit_us, seed, history_out)
    print(best.to_json())


@command('bench',
    set_arg,
    arg('config', help="experiment config (JSON or YAML), see samples/desk.json"),
    arg('out_dir', help="output directory"),
)
def bench(overrides, config, out_dir):
    '''run an experiment and write its reports

    UBF_THREADS sets the number of worker threads.
    '''
    cfg = apply_overrides(load_config(config), overrides)
    cfg['output_dir'] = out_dir
    rows = run_experiment(ExperimentConfig.from_config(cfg))
    for row in rows:
        print("%-9s %6d  %.4f +- %.4f  [%.4f, %.4f]" % (row.method, row.train_size, row.mean,
                                                      row.std, row.ci95_lo, row.ci95_hi))


@command('diag',
    arg('model', help="unrolled model file"),
    arg('dataset', help="channels to evaluate on"),
    arg('out', help="CSV file, one row per layer"),
)
def diag(model, dataset, out):
    '''mean sum-rate after each layer of an unrolled model'''
    m = UnrolledModel.load(model)
    d = channel.load(dataset)
    require((d.k_users, d.m_antennas) == (m.sys.k_users, m.sys.m_antennas),
            "dataset has K=%d, M=%d, model expects K=%d, M=%d", d.k_users, d.m_antennas,
            m.sys.k_users, m.sys.m_antennas)
    for row in diagnostics_report(m, d.channels, out):
        log.info("layer %d: %.6f", row['layer'], row['mean_rate'])


@command('report',
    arg('--format', help="output format", choices=('csv', 'json'), default='csv'),
    arg('rows', help="results.csv or results.json"),
    arg('out', help="file to write"),
)
def report_cmd(format, rows, out):
    '''convert result rows, sorted by method and training size'''
    report(read_report(rows), out, format)


def run(argv=None):
    '''console script entry point'''
    return main(argv=argv)

