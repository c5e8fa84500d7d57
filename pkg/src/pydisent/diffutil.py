# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import collections
import collections.abc
import hashlib
import os
import threading

import numpy as np
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError


# probabilities are clamped into this interval before every log
PROB_CLAMP = (1e-7, 1 - 1e-7)

# modality tags, in the order they are stacked everywhere
MODALITIES = ('v', 'a')

# fixed IAF stack order: (F_c^v, F_c^a, F_s^v, F_s^a)
STACK_ORDER = ('Fc_v', 'Fc_a', 'Fs_v', 'Fs_a')

Shape = collections.namedtuple('Shape', 'rows cols')


class PyDisentException(Exception):
    """Base class for pydisent errors"""


class InvalidArgumentError(PyDisentException, ValueError):
    """Argument violates an operation's precondition"""


class ConfigError(InvalidArgumentError):
    """Unknown key or unparsable value in a config or spec file"""


class EvaluationError(PyDisentException):
    """An objective evaluated to a non-finite value"""


class FeatureParseError(PyDisentException):
    """Malformed feature or label file"""

    def __init__(self, msg, filename=None, lineno=None):
        self.filename = filename
        self.lineno = lineno
        where = ''
        if filename is not None:
            where = f'{filename}:{lineno}: ' if lineno is not None else f'{filename}: '
        super().__init__(f'{where}{msg}')


def list_like(data):
    return (not isinstance(data, (str, bytes, np.ndarray)) and
            isinstance(data, collections.abc.Iterable))


def as_vector(values, name='vector'):
    """Coerce to a finite 1-d float64 array"""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f'{name} must be finite')
    return arr


def check_binary(labels, name='labels'):
    arr = np.asarray(labels, dtype=np.float64).reshape(-1)
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidArgumentError(f'{name} must be binary (0 or 1)')
    return arr


def file_md5_digest(*filenames):
    """md5 over the concatenated contents of files, None if any is missing"""
    hash_md5 = hashlib.md5()
    for filename in filenames:
        if not os.path.exists(filename):
            return None
        with open(filename, 'rb') as f:
            for chunk in iter(lambda: f.read(4096), b''):
                hash_md5.update(chunk)
    return hash_md5.hexdigest()


def seeded_rng(seed, *stream):
    """Independent generator for (seed, stream...), schedule independent"""
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


class _ActiveTapeTracker:
    """Which GradTape (if any) records operations on this thread"""
    _ns = threading.local()

    @property
    def ns(self):
        if not hasattr(self._ns, 'stack'):
            self._ns.stack = []
        return self._ns

    @property
    def current(self):
        stack = self.ns.stack
        return stack[-1] if stack else None

    def push(self, tape):
        self.ns.stack.append(tape)

    def pop(self, tape):
        stack = self.ns.stack
        assert stack and stack[-1] is tape, 'GradTape contexts must nest'
        stack.pop()

    def suspended(self):
        """Context in which nothing is recorded (finite differences, eval)"""
        tracker = self

        class _Suspend:
            def __enter__(self):
                self.saved = tracker.ns.stack
                tracker.ns.stack = []

            def __exit__(self, *args):
                tracker.ns.stack = self.saved

        return _Suspend()


active_tape = _ActiveTapeTracker()


def parse_key_values(lines, fields, filename='<string>'):
    """Read ``key=value`` lines into a dict

    Values are YAML scalars or flow collections (``[1, 2]``, ``{orth: false}``).
    Blank lines and ``#`` comments are skipped.

    :param lines: iterable of text lines
    :param fields: the allowed keys
    :param filename: used in error messages
    """
    yaml = YAML(typ='safe')
    values = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f'{filename}:{lineno}: expected key=value, got {line!r}')
        if key not in fields:
            raise ConfigError(f'{filename}:{lineno}: unknown key {key!r}')
        if key in values:
            raise ConfigError(f'{filename}:{lineno}: duplicate key {key!r}')
        try:
            values[key] = yaml.load(raw.strip()) if raw.strip() else None
        except YAMLError as exc:
            raise ConfigError(f'{filename}:{lineno}: cannot parse {key}: {exc}')
    return values


def read_key_values(filename, fields):
    with open(filename, 'r') as f:
        return parse_key_values(f, fields, filename=filename)


def _flow(value):
    if value is None:
        return 'null'
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        text = repr(float(value))
        # YAML only reads 1e-09 as a float when it has a fraction part
        if 'e' in text and '.' not in text:
            text = text.replace('e', '.0e', 1)
        return text
    if isinstance(value, dict):
        return '{' + ', '.join(f'{k}: {_flow(v)}' for k, v in value.items()) + '}'
    if list_like(value) or isinstance(value, np.ndarray):
        return '[' + ', '.join(_flow(v) for v in value) + ']'
    return str(value)


def format_key_values(record):
    """Inverse of parse_key_values for a namedtuple record"""
    return ''.join(f'{key}={_flow(value)}\n' for key, value in record._asdict().items())
