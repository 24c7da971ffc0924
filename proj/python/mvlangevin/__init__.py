"""Kinetic Langevin McKean-Vlasov experiments.

Experiment functions take a config as a dict (merged over the defaults) or as
JSON text, and return plain dicts and lists.
"""

import json

from . import _core
from ._core import ConfigError, constants, noise_report, w1_1d, w1_exact

__all__ = [
    "ConfigError",
    "admissibility_report",
    "constants",
    "contract",
    "converge",
    "default_config",
    "moments",
    "noise_report",
    "sec5_figure",
    "w1_1d",
    "w1_exact",
]


def _text(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return json.dumps(config)


def default_config():
    return json.loads(_core.default_config())


def admissibility_report(config=None):
    """Returns (report text, exit code); the code is 0 when admissible."""
    return _core.admissibility_report(_text(config))


def sec5_figure(config=None, write_files=False):
    return _core.sec5_figure(_text(config), write_files)


def converge(config=None, write_files=False):
    return _core.converge(_text(config), write_files)


def contract(config=None, write_files=False):
    return _core.contract(_text(config), write_files)


def moments(config=None, write_files=False):
    return _core.moments(_text(config), write_files)
