# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:14'

Usage:
from .log_obj import log

>>> set_log_level('DEBUG')
"""
import logging
import os
import sys

LOGGER_NAME = 'HyKey'
LOG_FORMAT = '%(asctime)s | %(levelname)s | %(name)s(%(filename)s:%(lineno)s) | %(message)s'
LEVEL_ENV = 'HYKEY_LOG_LEVEL'


def level_of(value, fallback=logging.INFO):
    """
    :param value: name ('DEBUG', 'info', ...), logging int or None
    :param fallback: used for None and unknown names
    :return: logging int
    """
    if isinstance(value, int):
        return value
    if not value:
        return fallback
    level = logging.getLevelName(str(value).upper())
    return level if isinstance(level, int) else fallback


def chain_handles(logger, level):
    """True when some handler on the propagation chain already emits `level`"""
    node = logger
    while node is not None:
        if any(h.level <= level for h in node.handlers):
            return True
        node = node.parent if node.propagate else None
    return False


def create_logger(name=LOGGER_NAME, level=None, stream=None):
    """
    package logger; a stdout handler is attached only when nothing upstream would print
    :param name:
    :param level: defaults to $HYKEY_LOG_LEVEL, then INFO
    :param stream: defaults to sys.stdout
    :return: logging.Logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(level_of(level if level is not None else os.environ.get(LEVEL_ENV)))
    if not chain_handles(logger, logger.getEffectiveLevel()):
        handler = logging.StreamHandler(stream or sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    return logger


def set_log_level(level):
    """
    set the package logger level from a config value
    :param level:
    :return: the logging int applied
    """
    value = level_of(level)
    log.setLevel(value)
    return value


log = create_logger()
