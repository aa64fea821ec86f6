"""ubf.command_decorator -- subcommands from decorated functions

A :py:class:`CommandDecorator` owns the argument parser.  Decorating a
function registers it as subcommand; the first paragraph of its docstring is
the help line, the rest the description::

    command = CommandDecorator(prog='ubf')

    @command('solve', arg('dataset'), arg('out'))
    def solve(dataset, out):
        '''solve a dataset with a classical solver

        Writes one sum-rate per channel.
        '''

Parsed options are passed as keyword arguments.
"""

import argparse
import logging
from textwrap import dedent

import argcomplete

from .arguments import arg

log = logging.getLogger('ubf.command_decorator')


class ArgParseExit(Exception):
    '''argparse wants to exit: help was printed (code 0) or usage was wrong

    Usage errors are contract violations of the command line and carry
    error code 1.
    '''

    def __init__(self, error_code, message):
        super(ArgParseExit, self).__init__(message)
        self.error_code = error_code
        self.message = message

    def __str__(self):
        return self.message.strip() if self.message else ''


class NoAction(RuntimeError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    '''parser (and subparser class) raising :py:class:`ArgParseExit`'''

    def exit(self, status=0, message=None):
        raise ArgParseExit(1 if status else 0, message)


class CommandDecorator(object):

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('formatter_class', argparse.RawDescriptionHelpFormatter)
        if kwargs.get('epilog'):
            kwargs['epilog'] = dedent(kwargs['epilog'])
        self.formatter_class = kwargs['formatter_class']
        self.argparser = ArgumentParser(**kwargs)
        self.commands = None
        self.add_arguments(*args)

    def has_action(self):
        return self.commands is not None and len(self.commands.choices) > 0

    def add_parser(self, command, **kwargs):
        if self.commands is None:
            self.commands = self.argparser.add_subparsers(metavar='COMMAND')
        return self.commands.add_parser(command, **kwargs)

    def __getitem__(self, name):
        if self.commands is None:
            raise KeyError(name)
        return self.commands.choices[name]

    def get_action(self, name):
        return self[name].get_default('action')

    def add_arguments(self, *args, **kwargs):
        argparser = kwargs.get('argparser', self.argparser)
        for a in args:
            if isinstance(a, str):
                a = arg(a)
            elif not isinstance(a, arg):
                raise ValueError("cannot convert %s into arg type" % a)
            a.apply(argparser)

    def __call__(self, name, *args, **opts):
        def factory(func):
            help, desc = None, None
            if func.__doc__ is not None:
                help, _, desc = func.__doc__.partition("\n\n")
                help = help.strip()
                desc = dedent(desc)
            kwargs = dict(help=help, description=desc, formatter_class=self.formatter_class)
            kwargs.update(opts)

            command = self.add_parser(name, **kwargs)
            self.add_arguments(*args, argparser=command)
            command.set_defaults(action=func)
            return func

        return factory

    def compile_args(self, argv=None, preprocessor=None):
        argcomplete.autocomplete(self.argparser)
        args = self.argparser.parse_args(argv)
        if preprocessor:
            preprocessor(args)

        action = getattr(args, 'action', None)
        if action is None:
            raise NoAction("no command given")
        opts = vars(args).copy()
        del opts['action']
        return action, opts

    def execute(self, argv=None, preprocessor=None):
        """parse ``argv`` (default ``sys.argv[1:]``) and run the command"""
        action, kwargs = self.compile_args(argv, preprocessor)
        log.debug("running %s(%s)", action.__name__, kwargs)
        return action(**kwargs)
