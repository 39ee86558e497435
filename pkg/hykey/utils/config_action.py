# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:24'

Usage:
resolve a run config: defaults < config file < HYKEY_* environment < command-line flags
"""
import copy
import json
import os

import toml
from flask import Config

from ..exception import InvalidConfigException
from .constant import DEFAULT_RUN_CONFIG, ENV_PREFIX


def _file_loader(path):
    """
    pick json or toml by suffix
    :param path:
    :return:
    """
    suffix = os.path.splitext(path)[1].lower()
    if suffix == '.json':
        return json.load
    if suffix in ('.toml', '.tml'):
        return toml.load
    raise InvalidConfigException(f'unsupported config file type {suffix!r}, use .json or .toml', field='config')


def load_run_config(config_file=None, overrides=None, defaults=None, environ=True):
    """
    build the resolved RunConfig
    :param config_file: optional json/toml path, only UPPER_CASE keys are read
    :param overrides: flag values, None values are ignored
    :param defaults: base mapping, DEFAULT_RUN_CONFIG when not given
    :param environ: read HYKEY_* variables
    :return: flask.Config

    Usage:
    >>> config = load_run_config('train.toml', {'SEED': 3})
    >>> config['SEED']
    >>> 3
    """
    defaults = copy.deepcopy(DEFAULT_RUN_CONFIG if defaults is None else defaults)
    config = Config(os.getcwd(), defaults)

    if config_file:
        if not os.path.isfile(config_file):
            raise InvalidConfigException(f'config file {config_file!r} does not exist', field='config')
        try:
            config.from_file(os.path.abspath(config_file), load=_file_loader(config_file))
        except (ValueError, toml.TomlDecodeError) as e:
            raise InvalidConfigException(f'cannot parse {config_file!r}: {e}', field='config')

    if environ:
        config.from_prefixed_env(ENV_PREFIX)

    if overrides:
        config.from_mapping({k: v for k, v in overrides.items() if v is not None})

    # tables merge key by key so a file can override a single loss weight
    for key, value in defaults.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict) and config[key] is not value:
            merged = dict(value)
            merged.update(config[key])
            config[key] = merged
        elif isinstance(value, dict) and not isinstance(config.get(key), dict):
            raise InvalidConfigException(f'expected a table, got {config.get(key)!r}', field=key)
    return config


def config_echo(config):
    """
    plain dict copy of the resolved config, embedded into every artifact
    :param config:
    :return:
    """
    return {k: copy.deepcopy(v) for k, v in sorted(config.items()) if k.isupper()}
