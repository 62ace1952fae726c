# pylint: disable=line-too-long

"""
Logger module for the vessel-transfer package.

Every command and pipeline stage gets its logger from the ``new()`` factory so
that console output has one layout: a short ``time [LEVEL] message`` line at
INFO, and the detailed process/thread/module layout once ``--verbose`` lowers
the level to DEBUG.

Library modules (``drunet``, ``transfer``, ...) use ``logging.getLogger(__name__)``
directly; their records reach the console through the ``vessel_transfer``
package logger configured here.

Example:
    >>> from vessel_transfer import logger
    >>> log = logger.new("vessel_transfer")
    >>> log.info("Round %d: %d sources accepted", 2, 3)
    2026-10-18 12:34:56 [INFO] Round 2: 3 sources accepted
"""

import logging

VERBOSE_FORMAT = "%(asctime)s [%(levelname)s] (%(processName)s %(threadName)s) %(module)s:%(lineno)d: %(message)s"
DEFAULT_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"


def new(name, level=logging.INFO, format_string=None) -> logging.Logger:
    """
    Create and configure a logger.

    Args:
        name (str): Logger name, typically ``__name__`` or the package name
        level (int | str, optional): Log level. Default is logging.INFO
        format_string (str, optional): Custom format string for log messages

    Returns:
        logging.Logger: Configured logger instance.
    """
    logger = logging.getLogger(name)

    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    # Always update the level so a later call (after --verbose) can reconfigure.
    logger.setLevel(level)

    if not format_string:
        format_string = VERBOSE_FORMAT if level <= logging.DEBUG else DEFAULT_FORMAT

    formatter = logging.Formatter(format_string)

    if not logger.handlers:
        sh = logging.StreamHandler()
        sh.setFormatter(formatter)
        logger.addHandler(sh)
    else:
        for handler in logger.handlers:
            handler.setFormatter(formatter)

    # The logger owns its handler; bubbling to root would print every line twice.
    logger.propagate = False

    return logger
