# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import collections
import functools

import numpy as np

from pydisent.autodiff import Tensor2
from pydisent.diffutil import EvaluationError, InvalidArgumentError


LOSS_META = 'loss_term_meta'

# groups of the total objective: (task + untask) + alpha * (...) + beta * (...)
LOSS_GROUPS = {
    'diagnosis': ('task', 'untask'),
    'disentangle': ('orth', 'cmd', 'recon'),
    'individual': ('align', 'contri'),
}

# terms which an ablation may switch off, task always stays on
TOGGLEABLE_TERMS = ('orth', 'cmd', 'untask', 'align', 'contri', 'recon')

LOSS_TERMS = collections.OrderedDict()

LossMeta = collections.namedtuple('LossMeta', 'name group nonnegative')


def group_of(name):
    return next((group for group, names in LOSS_GROUPS.items() if name in names), None)


def loss_term(name, nonnegative=True):
    """ Decorator to register a function as one of the terms of the total objective

    The decorated function must return a 1x1 Tensor2 (or a tuple whose first
    item is one).  In debug runs the result is checked for finiteness.

    :param name: key used in LossBreakdown and in the ablation toggles
    :param nonnegative: the term is >= 0 on every input
    :return: decorator
    """
    group = group_of(name)
    if group is None:
        raise InvalidArgumentError(f'Unknown loss term: {name}')

    def mark(f):
        @functools.wraps(f)
        def wrapper(*args, **kwargs):
            result = f(*args, **kwargs)
            scalar = result[0] if isinstance(result, tuple) else result
            check_scalar(scalar, name)
            return result

        meta = LossMeta(name, group, nonnegative)
        setattr(wrapper, LOSS_META, meta)
        LOSS_TERMS[name] = wrapper
        return wrapper
    return mark


def check_scalar(value, name):
    if not isinstance(value, Tensor2) or value.data.shape != (1, 1):
        raise InvalidArgumentError(f'Loss term {name} must produce a 1x1 Tensor2')
    if not np.isfinite(value.data[0, 0]):
        raise EvaluationError(f'Loss term {name} evaluated to {value.data[0, 0]}')
