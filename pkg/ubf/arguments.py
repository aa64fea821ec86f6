"""ubf.arguments -- command line arguments

:py:class:`arg` collects what is passed to
:py:meth:`argparse.ArgumentParser.add_argument`.  Decorating a one-argument
function with an :py:class:`arg` turns the function into the argument's
validator; its return value is stored::

    @arg('--seed', help="random seed", default=0)
    def seed_arg(value):
        return parse_seed(value)

Decorating a function with the full :py:class:`argparse.Action` signature
runs it as the action instead (used for the managed ``-v`` flags).
"""

import inspect
import logging
from argparse import Action

from .errors import ContractViolation

log = logging.getLogger('ubf.arguments')


class ArgAction(Action):
    '''runs the function an :py:class:`arg` decorates'''

    def set_arg_func(self, arg_func):
        self.arg_func = arg_func

    def __call__(self, parser, namespace, values, option_string=None):
        if self.arg_func.__code__.co_argcount == 1:
            try:
                setattr(namespace, self.dest, self.arg_func(values))
            except ContractViolation as e:
                parser.error("argument %s: %s" % (option_string or self.dest, e))
        else:
            self.arg_func(self, parser, namespace, values, option_string)


class arg(object):
    """arguments of one add_argument() call"""

    def __init__(self, *args, **opts):
        self.args = args
        self.opts = opts

    @property
    def dest(self):
        if self.opts.get('dest'):
            return self.opts['dest']
        for prefix in ('--', '-'):
            for a in self.args:
                if a.startswith(prefix):
                    return a[len(prefix):].replace('-', '_')
        return self.args[0]

    def apply(self, parser):
        opts = dict(self.opts)
        if 'dest' not in opts and not self.args[0][0].isalnum():
            opts['dest'] = self.dest
        log.debug("apply: %s", self)
        parser.add_argument(*self.args, **opts)

    def __repr__(self):
        return "arg(%s, %s)" % (self.args, self.opts)

    def __call__(self, *args, **kwargs):
        # arg(...)(more options) derives a new arg
        if not (len(args) == 1 and inspect.isfunction(args[0])):
            _opts = self.opts.copy()
            _opts.update(**kwargs)
            return self.__class__(*(args or self.args), **_opts)

        func = args[0]
        self.func = func

        def arg_action_factory(*args, **kwargs):
            a = ArgAction(*args, **kwargs)
            a.set_arg_func(func)
            return a

        self.opts['action'] = arg_action_factory
        return self


class opt(arg):
    """flag, ``action="store_true"``"""

    def apply(self, parser):
        self.opts['action'] = 'store_true'
        self.opts['default'] = False
        arg.apply(self, parser)


def positive_int(value):
    try:
        n = int(value)
    except ValueError:
        raise ContractViolation("expected an integer, got %r", value)
    if n < 1:
        raise ContractViolation("expected a positive integer, got %s", n)
    return n


def positive_float(value):
    try:
        x = float(value)
    except ValueError:
        raise ContractViolation("expected a number, got %r", value)
    if not x > 0:
        raise ContractViolation("expected a positive number, got %s", x)
    return x


def parse_seed(value):
    try:
        n = int(value)
    except ValueError:
        raise ContractViolation("expected an integer seed, got %r", value)
    if not 0 <= n < 2 ** 64:
        raise ContractViolation("seed must be an unsigned 64-bit integer, got %s", n)
    return n
