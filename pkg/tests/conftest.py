# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import os

import numpy as np
import pytest

from pydisent.datagen import data_digest, generate, save_features, SyntheticSpec
from pydisent.engine import train, TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope='session')
def tmpdir(tmpdir_factory):
    return tmpdir_factory.mktemp('fixtures')


@pytest.fixture(scope='session')
def small_spec():
    return SyntheticSpec(n_samples=40, d_common=2, d_specific=1, d_nuisance=1,
                         d_v=5, d_a=4, L=3, seed=3)


@pytest.fixture(scope='session')
def small_dataset(small_spec):
    return generate(small_spec)


@pytest.fixture(scope='session')
def data_dir(tmpdir, small_dataset):
    dirname = os.path.join(str(tmpdir), 'small_data')
    save_features(small_dataset, dirname)
    return dirname


@pytest.fixture(scope='session')
def tiny_config():
    return TrainConfig(learning_rate=0.01, batch_size=8, latent_d=2, hidden_h=3,
                       max_epochs=2, patience=2, seed=1)


@pytest.fixture(scope='session')
def trained(small_dataset, tiny_config, data_dir):
    """(checkpoint, history) of a two epoch run on the small dataset"""
    return train(small_dataset, tiny_config, data_digest=data_digest(data_dir))


@pytest.fixture(scope='session')
def config_file(tmpdir, tiny_config):
    filename = os.path.join(str(tmpdir), 'tiny.cfg')
    with open(filename, 'w') as f:
        f.write(tiny_config.to_text())
    return filename


def pytest_addoption(parser):
    parser.addoption('--run-slow', action='store_true', default=False,
                     help='also run the long training acceptance runs')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long training acceptance run')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--run-slow'):
        return
    skip_slow = pytest.mark.skip(reason='long training run, use --run-slow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
