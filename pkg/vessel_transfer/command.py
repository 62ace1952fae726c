"""
Command module for the vessel-transfer package.

Every subcommand (``synth``, ``preprocess``, ``train``, ``select-transfer``,
``predict``, ``evaluate``) is a ``Command`` subclass living in
``vessel_transfer/commands/``. The base class owns the shared flags and the
``run()`` template that turns ``execute()`` outcomes into exit codes.
"""

import abc
import logging
from typing import Any, Optional

from .errors import VesselTransferError
from .output import Output


class Command(metaclass=abc.ABCMeta):
    """
    Abstract base class for all vessel-transfer subcommands.

    Subclasses implement ``define_arguments()`` and ``execute()``; the runner
    calls ``run()``.

    Attributes:
        log (Logger): Logger namespaced under the command's module
    """

    def __init__(self, log_level: Optional[int] = None):
        # Namespaced under the package so --verbose reaches it.
        self.log = logging.getLogger(f"{type(self).__module__}.{type(self).__name__}")
        if log_level is not None:
            self.log.setLevel(log_level)

    @staticmethod
    def define_common_arguments(parser, output_default: str = "table") -> None:
        """
        Add the flags every subcommand shares.

        Args:
            parser (ArgumentParser): The argument parser to add arguments to
            output_default (str): Default rendering for ``--output``
        """
        dests = {action.dest for action in parser._actions}  # pylint: disable=protected-access
        if "output" not in dests:
            parser.add_argument(
                "--output",
                help="Output format",
                choices=["plain", "table", "json"],
                default=output_default,
                type=str,
                metavar="FORMAT",
            )
        if "verbose" not in dests:
            parser.add_argument(
                "--verbose", help="Verbose output", action="store_true", default=False
            )
        if "seed" not in dests:
            parser.add_argument("--seed", type=int, help="Random seed")

    @abc.abstractmethod
    def define_arguments(self, parser) -> Any:
        """
        Define command-specific arguments.

        Args:
            parser: The argument parser to add arguments to

        Returns:
            The updated argument parser
        """
        self.define_common_arguments(parser)
        return parser

    @abc.abstractmethod
    def execute(self, args: Any) -> Any:
        """
        Execute the command with the parsed arguments.

        Args:
            args: Parsed command-line arguments
        """
        raise NotImplementedError("Command subclasses must implement execute()")

    def output(self, args) -> Output:
        """Return an ``Output`` bound to this invocation's ``--output`` choice."""
        return Output(args)

    def run(self, args: Any) -> int:
        """
        Run the command and map its outcome to a process exit code.

        ``execute()`` must return an ``int`` exit code or ``None`` (treated as
        ``0``). Any other return, including a ``bool``, is logged and treated
        as failure so it can never reach ``sys.exit`` as a bogus code.

        Args:
            args: The parsed arguments.

        Returns:
            int: ``0`` on success, non-zero on failure.
        """
        try:
            result = self.execute(args)
        except Exception as e:  # pylint: disable=broad-exception-caught
            return self.handle_exception(e)
        if result is None:
            return 0
        if isinstance(result, bool) or not isinstance(result, int):
            self.log.warning(
                "%s.execute() returned %r; expected an int exit code or None. "
                "Treating it as failure.",
                type(self).__name__,
                result,
            )
            return 1
        return result

    def handle_exception(self, exc: Exception) -> int:
        """
        Map an exception raised by ``execute()`` to an exit code.

        Domain errors carry their own exit code and are reported by message
        alone; anything else is reported with its type. A traceback is
        attached only when debug logging is on (``--verbose``).

        Args:
            exc: The exception raised by ``execute()``.

        Returns:
            int: A non-zero exit code.
        """
        debug = self.log.isEnabledFor(logging.DEBUG)
        if isinstance(exc, VesselTransferError):
            self.log.error("%s", exc.message, exc_info=debug)
            return exc.exit_code or 1
        self.log.error(
            "%s failed: %s: %s",
            type(self).__name__,
            type(exc).__name__,
            exc,
            exc_info=debug,
        )
        return 1
