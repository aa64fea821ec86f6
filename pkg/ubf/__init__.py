"""ubf -- unrolled projected gradient beamforming

Multi-user MISO downlink beamforming: maximize the sum-rate of ``K``
single-antenna users served by ``M`` transmit antennas under a total power
budget.  The package holds classical per-channel solvers (ZF, projected
gradient ascent, WMMSE), an unrolled network whose layers are projected
gradient steps with learned step sizes, an MLP baseline, a TPE hyperparameter
search and an experiment harness.

Quickstart
----------

Solve a few channels and compare::

    from ubf import SystemParams, generate, zero_forcing, classical_pgd, sum_rate

    p = SystemParams()                       # K=4, M=8, P_max=1, sigma^2=0.1
    h = generate(seed=1, count=100, k_users=4, m_antennas=8).channels

    zf = sum_rate(h, zero_forcing(h, p), p).mean()
    pgd = classical_pgd(h, p).rate_final.mean()

Train an unrolled network::

    from ubf import UnrolledModel, TrainConfig, split_train_val, train, forward

    train_set, val_set = split_train_val(generate(42, 100, 4, 8))
    model = UnrolledModel.build(depth=5, eta0=5e-4, sys=p)
    model, trace = train(model, train_set, val_set, TrainConfig(epochs=50))
    w, diagnostics = forward(model, h, diagnostics=True)

Run an experiment from the command line::

    $ ubf -vv bench samples/desk.json out/
    $ ubf report --format json out/results.csv out/results.json

"""
from .bench import ExperimentConfig, ResultRow, ci95, diagnostics_report, relative_report, report, run_experiment
from .channel import Dataset, draw_subset, generate, load, save, split_train_val
from .config import ConfigDict, apply_overrides, load_config
from .errors import (ContractViolation, DatasetFormatError, DatasetIOError, DegenerateChannelError,
                     ExperimentError, NumericFailure, SearchFailed, SingularMatrixError, TrainingAborted,
                     TruncatedDatasetError, UbfError)
from .hpo import SearchSpace, TpeConfig, TrialRecord, measure_latency, run_search, suggest
from .mlp import MlpModel, mlp_forward, mlp_train
from .objective import (SystemParams, ascent_direction, is_feasible, prox_power, sinr, sum_rate,
                        sum_rate_grad, sum_rate_hvp)
from .solvers import SolverReport, classical_pgd, wmmse, zero_forcing
from .training import TrainConfig, scheduler_lr
from .unrolled import ForwardDiagnostics, LayerParams, UnrolledModel, forward, param_grad, train

PYTHON_ARGCOMPLETE_OK = True

__version__ = '1.0.0'
