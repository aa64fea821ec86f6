"""ubf.main -- the main function of the command line

:py:class:`Main` owns a :py:class:`~ubf.command_decorator.CommandDecorator`
and manages the arguments common to all commands:

.. option:: --debug

   set log level ``DEBUG`` and print tracebacks

.. option:: -v, -vv, -vvv

   set log level ``WARNING``, ``INFO`` or ``DEBUG``

.. option:: --quiet

   set log level ``CRITICAL`` and print no error messages

The default log level is ``ERROR``.  Exceptions carrying an ``error_code``
(:py:class:`ubf.errors.UbfError`, argparse exits) end the program with that
code and a one-line message on stderr; a plain :py:class:`OSError` exits
with 3.

Usage::

    main = Main(prog='ubf')
    command = main.command

    @command('gen-data', arg('out'))
    def gen_data(out):
        ...

    if __name__ == '__main__':
        main()
"""

import logging
import sys
import traceback

from .arguments import arg
from .command_decorator import ArgParseExit, CommandDecorator, NoAction
from .errors import DatasetIOError, UbfError

log = logging.getLogger('ubf.main')

LOG_FORMAT = "%(name)-20.20s %(levelname)-10.10s %(message)s"


class Main(object):
    """Main function provider

    :param error_handler: gets the exit code, default :py:func:`sys.exit`;
        ``None`` returns the code instead
    :param catch_exceptions: exception classes reported as error message
    :param kwargs: passed to :py:class:`~ubf.command_decorator.CommandDecorator`
    """

    def __init__(self, error_handler=sys.exit, log_format=LOG_FORMAT,
                 catch_exceptions=(UbfError, ArgParseExit, OSError), **kwargs):
        logging.basicConfig(format=log_format)
        logging.getLogger().setLevel(logging.ERROR)

        self.error_handler = error_handler
        self.catch_exceptions = catch_exceptions
        self.command = CommandDecorator(**kwargs)

        self.debug = False
        self.verbosity = 0
        self.quiet = False
        self.exception = None
        self.init_managed_args()

    def init_managed_args(self):
        logger = logging.getLogger()
        _main = self

        @arg('--debug', help="print debug output and tracebacks", nargs=0)
        def debug_arg(self, parser, namespace, values, option_string=None):
            _main.debug = True
            logger.setLevel(logging.DEBUG)

        @arg('-v', '--verbosity', help="verbosity: set loglevel -v warning, -vv info, -vvv debug", nargs=0)
        def verbosity_arg(self, parser, namespace, values, option_string=None):
            _main.verbosity += 1
            level = {1: logging.WARNING, 2: logging.INFO}.get(_main.verbosity, logging.DEBUG)
            logger.setLevel(level)

        @arg('--quiet', help="no output but results", nargs=0)
        def quiet_arg(self, parser, namespace, values, option_string=None):
            logger.setLevel(logging.CRITICAL)
            _main.quiet = True

        self.command.add_arguments(debug_arg, verbosity_arg, quiet_arg)

    def store_args(self, args):
        for name in ('debug', 'verbosity', 'quiet'):
            if hasattr(args, name):
                delattr(args, name)
        self.args = args
        log.debug("args: %s", args)

    def __call__(self, *argv, **kwargs):
        """run the command line

        :param argv: arguments, default ``sys.argv[1:]``
        :param error_handler: override the instance's handler for this call
        :returns: whatever ``error_handler`` returns for the exit code
        """
        error_handler = kwargs.pop('error_handler', self.error_handler)
        if error_handler is None:
            error_handler = lambda code: code  # noqa: E731
        argv = list(argv) if argv else kwargs.pop('argv', None)

        self.exception = None
        self.debug, self.verbosity, self.quiet = False, 0, False
        try:
            result = self.command.execute(argv, preprocessor=self.store_args)
            return error_handler(result if isinstance(result, int) else 0)

        except NoAction:
            self.command.argparser.print_help(sys.stderr)
            return error_handler(1)

        except self.catch_exceptions as e:
            log.debug("caught exception", exc_info=1)
            if self.debug or self.verbosity >= 3:
                traceback.print_exc()
            elif not self.quiet and str(e):
                sys.stderr.write("%s\n" % e)

            self.exception = e
            if hasattr(e, 'error_code'):
                return error_handler(e.error_code)
            return error_handler(DatasetIOError.error_code)
