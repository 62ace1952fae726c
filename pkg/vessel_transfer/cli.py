"""
CLI runner for the vessel-transfer package.

``run()`` discovers the subcommand modules in ``<package>/commands/``, builds
the ``argparse`` parser, installs configuration defaults, wires up shell
completion, and dispatches to the selected command; ``make_main()`` wraps
that as a console-script callable.

A subcommand is a public module ``commands/<name>.py`` defining a class named
after the module in CamelCase: ``commands/select_transfer.py`` provides
``SelectTransfer`` and is invoked as ``select-transfer``.
"""

import argparse
import importlib
import logging
import os
import sys

from . import logger as vt_logger
from .config import Config
from .errors import ConfigurationError


def _discover_commands(commands_dir):
    """Return the sorted subcommand module names under ``commands_dir``.

    Only public ``.py`` modules count; modules whose name starts with an
    underscore are private support code and are skipped.
    """
    commands = []
    if not os.path.isdir(commands_dir):
        return commands
    for item in sorted(os.listdir(commands_dir)):
        if not item.endswith(".py") or item.startswith("_"):
            continue
        commands.append(item[:-3])
    return commands


def _class_name(module_name):
    """``select_transfer`` -> ``SelectTransfer``."""
    return "".join(part.capitalize() for part in module_name.split("_"))


def _setup_logging(log, package, verbose):
    """Raise every ``<package>*`` logger to DEBUG when ``--verbose`` is set."""
    if not verbose:
        return
    log.setLevel(logging.DEBUG)
    vt_logger.new(package, level=logging.DEBUG)
    for name, existing in logging.root.manager.loggerDict.items():
        if name.startswith(package) and isinstance(existing, logging.Logger):
            existing.setLevel(logging.DEBUG)


def _preparse_config(argv):
    """Pull ``--config PATH`` out of ``argv`` before the full parse."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    return known.config


def run(package="vessel_transfer", prog="vessel-transfer", description="", argv=None):
    """Run the CLI: discover subcommands, parse, and dispatch.

    Args:
        package (str): Importable package to scan.
        prog (str): Program name shown in help/usage.
        description (str): Short description for the top-level parser.
        argv (list, optional): Arguments; defaults to ``sys.argv[1:]``.

    Returns:
        int: ``0`` on success, ``1`` on runtime failure, ``2`` on usage errors.
    """
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)

    vt_logger.new(package)
    log = vt_logger.new(f"{package}.cli")

    pkg = importlib.import_module(package)
    if not pkg.__file__:
        log.error("Cannot locate the '%s' package on disk", package)
        return 1
    commands_dir = os.path.join(os.path.dirname(pkg.__file__), "commands")

    try:
        config = Config(package, config_file=_preparse_config(argv))
    except ConfigurationError as e:
        log.error("%s", e.message)
        return 2

    # --verbose and --config live on a parent parser so they are accepted
    # before or after the subcommand. SUPPRESS keeps the subparser default
    # from clobbering a value given at the top level.
    parent_parser = argparse.ArgumentParser(add_help=False)
    parent_parser.add_argument(
        "--verbose",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Verbose output",
    )
    parent_parser.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        metavar="PATH",
        help="File of 'key = value' lines mirroring the flags",
    )
    parser = argparse.ArgumentParser(
        prog=prog, description=description, parents=[parent_parser]
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    commands = _discover_commands(commands_dir)
    log.debug("Discovered commands: %s", commands)

    known_dests = set()
    for command in commands:
        module_path = f"{package}.commands.{command}"
        try:
            module = importlib.import_module(module_path)
            class_name = _class_name(command)
            command_class = getattr(module, class_name, None)
            if command_class is None:
                log.warning(
                    "Class '%s' not found in module '%s'", class_name, module_path
                )
                continue
            command_parser = subparsers.add_parser(
                command.replace("_", "-"),
                help=(command_class.__doc__ or "").strip().splitlines()[0]
                if command_class.__doc__
                else None,
                parents=[parent_parser],
            )
            command_class().define_arguments(command_parser)
            config.apply_to_parser(command_parser)
            command_parser.set_defaults(command_class=command_class)
            known_dests.update(a.dest for a in command_parser._actions)  # pylint: disable=protected-access
        except Exception as e:  # pylint: disable=broad-except
            log.warning("Error setting up %s: %s", command, e)

    for key in config.unknown_keys(known_dests):
        log.warning("Ignoring unknown config key %r", key)

    try:
        import argcomplete  # pylint: disable=import-outside-toplevel

        argcomplete.autocomplete(parser)
    except ImportError:
        pass

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse has already printed usage (or help).
        return e.code if isinstance(e.code, int) else 2

    _setup_logging(log, package, getattr(args, "verbose", False))
    log.debug("Parsed arguments: %s", args)

    command_class = getattr(args, "command_class", None)
    if command_class is None or not callable(command_class):
        log.error("No handler found for %s", getattr(args, "command", None))
        return 1

    command_instance = command_class()
    log.debug("Executing command: %s", args.command)
    try:
        exit_code = command_instance.run(args)
    except Exception as e:  # pylint: disable=broad-except
        log.error(
            "Error executing command: %s", e, exc_info=log.isEnabledFor(logging.DEBUG)
        )
        return 1

    return exit_code or 0


def make_main(package="vessel_transfer", prog=None, description=""):
    """Build a console-script ``main`` entry point.

    The returned callable runs ``run()`` and turns a non-zero result into
    ``sys.exit``; success returns ``None``.
    """

    def main():
        resolved_prog = prog or os.path.basename(sys.argv[0])
        exit_code = run(package=package, prog=resolved_prog, description=description)
        if exit_code:
            sys.exit(exit_code)

    return main
