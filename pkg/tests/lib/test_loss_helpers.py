# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import numpy as np
import pytest

from pydisent.autodiff import Tensor2
from pydisent.diffutil import EvaluationError, InvalidArgumentError
from pydisent.lib import losses  # noqa: F401  registers the terms
from pydisent.lib.loss_helpers import (
    check_scalar,
    group_of,
    LOSS_GROUPS,
    LOSS_META,
    LOSS_TERMS,
    loss_term,
    TOGGLEABLE_TERMS,
)


def test_every_term_is_registered():
    assert set(LOSS_TERMS) == {name for names in LOSS_GROUPS.values() for name in names}
    for name, func in LOSS_TERMS.items():
        meta = getattr(func, LOSS_META)
        assert meta.name == name
        assert meta.group == group_of(name)
        assert meta.nonnegative


@pytest.mark.parametrize('name, group', (
    ('task', 'diagnosis'),
    ('untask', 'diagnosis'),
    ('orth', 'disentangle'),
    ('cmd', 'disentangle'),
    ('recon', 'disentangle'),
    ('align', 'individual'),
    ('contri', 'individual'),
    ('total', None),
))
def test_group_of(name, group):
    assert group_of(name) == group


def test_task_is_not_toggleable():
    assert 'task' not in TOGGLEABLE_TERMS
    assert set(TOGGLEABLE_TERMS) | {'task'} == set(LOSS_TERMS)


def test_loss_term_unknown_name():
    with pytest.raises(InvalidArgumentError, match='Unknown loss term'):
        loss_term('bogus')


def test_wrapper_keeps_name():
    assert LOSS_TERMS['cmd'].__name__ == 'cmd_loss'
    assert 'moment' in LOSS_TERMS['cmd'].__doc__


@pytest.mark.parametrize('value, error, message', (
    (1.0, InvalidArgumentError, '1x1 Tensor2'),
    (Tensor2([[1.0, 2.0]]), InvalidArgumentError, '1x1 Tensor2'),
    (Tensor2([[np.inf]]), EvaluationError, 'evaluated to inf'),
    (Tensor2([[np.nan]]), EvaluationError, 'evaluated to nan'),
))
def test_check_scalar(value, error, message):
    with pytest.raises(error, match=message):
        check_scalar(value, 'cmd')


def test_check_scalar_passes():
    assert check_scalar(Tensor2([[0.5]]), 'task') is None
