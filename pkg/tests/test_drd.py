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

from pydisent.autodiff import directional_check, Tensor2
from pydisent.diffutil import InvalidArgumentError
from pydisent.drd import (
    decode_cross,
    decode_self,
    DisentangledBundle,
    DrdParams,
    encode,
    FeatureBatch,
    pool_segments,
)
from pydisent.lib.losses import reconstruction_loss


@pytest.fixture
def params():
    return DrdParams.init(5, 4, latent_d=3, hidden_h=6, seed=7)


def zero_biases(params):
    for name, tensor in params.named().items():
        if name.endswith(('.b1', '.b2')):
            tensor.data[:] = 0.0
    return params


def test_param_names_and_shapes(params):
    named = params.named()
    assert len(named) == 2 * 3 * 4
    assert named['drd.enc_c.v.w1'].shape == (5, 6)
    assert named['drd.enc_s.a.w2'].shape == (6, 6)
    assert named['drd.dec.v.w1'].shape == (12, 6)
    assert named['drd.dec.a.w2'].shape == (6, 4)
    assert named['drd.dec.a.b2'].shape == (1, 4)
    assert all(t.requires_grad for t in named.values())


def test_default_hidden_width():
    assert DrdParams.init(5, 4, latent_d=3).hidden_h == 6


def test_init_is_seeded():
    first = DrdParams.init(5, 4, 3, seed=11).named()
    second = DrdParams.init(5, 4, 3, seed=11).named()
    other = DrdParams.init(5, 4, 3, seed=12).named()
    assert all(np.array_equal(first[k].data, second[k].data) for k in first)
    assert not all(np.array_equal(first[k].data, other[k].data) for k in first)


def test_init_bounds(params):
    w = params.named()['drd.enc_c.v.w1'].data
    assert np.abs(w).max() <= 1 / np.sqrt(5)


@pytest.mark.parametrize('widths', ((0, 4, 3), (5, 4, 0)))
def test_init_errors(widths):
    with pytest.raises(InvalidArgumentError, match='positive'):
        DrdParams.init(*widths)


def test_encode_zero_input(params):
    bundle = encode(FeatureBatch('v', np.zeros((2, 5))), zero_biases(params))
    for feature in bundle:
        assert feature.shape == (2, 3)
        assert not np.any(feature.data)


def test_encode_duplicate_rows(params, rng):
    row = rng.standard_normal(4)
    bundle = encode(FeatureBatch('a', np.vstack([row, row, row])), params)
    for feature in bundle:
        assert np.array_equal(feature.data[0], feature.data[1])
        assert np.array_equal(feature.data[0], feature.data[2])


def test_encode_deterministic(params, rng):
    x = rng.standard_normal((6, 5))
    first = encode(FeatureBatch('v', x), params)
    second = encode(FeatureBatch('v', x), DrdParams.init(5, 4, latent_d=3, hidden_h=6, seed=7))
    for a, b in zip(first, second):
        assert np.array_equal(a.data, b.data)


def test_encode_width_mismatch(params):
    with pytest.raises(InvalidArgumentError, match='4 wide, params expect 5'):
        encode(FeatureBatch('v', np.zeros((2, 4))), params)


def test_decode_zero(params):
    zero_biases(params)
    zeros = DisentangledBundle(*(Tensor2(np.zeros((3, 3))) for _ in range(4)))
    assert not np.any(decode_self(zeros, params, 'v').data)
    assert not np.any(decode_cross(zeros, zeros.F_c, params, 'a').data)


def test_decode_shapes(params, rng):
    bundle = encode(FeatureBatch('a', rng.standard_normal((4, 4))), params)
    assert decode_self(bundle, params, 'a').shape == (4, 4)
    other = encode(FeatureBatch('v', rng.standard_normal((4, 5))), params)
    assert decode_cross(other, bundle.F_c, params, 'v').shape == (4, 5)


def test_decode_cross_with_own_common_is_self(params, rng):
    bundle = encode(FeatureBatch('v', rng.standard_normal((4, 5))), params)
    assert np.array_equal(decode_cross(bundle, bundle.F_c, params, 'v').data,
                          decode_self(bundle, params, 'v').data)


def test_decode_errors(params):
    bundle = DisentangledBundle(*(Tensor2(np.zeros((2, 3))) for _ in range(4)))
    with pytest.raises(InvalidArgumentError, match='Swapped common'):
        decode_cross(bundle, Tensor2(np.zeros((3, 3))), params, 'v')

    narrow = bundle._replace(N_s=Tensor2(np.zeros((2, 2))))
    with pytest.raises(InvalidArgumentError, match='N_s'):
        decode_self(narrow, params, 'v')


def test_feature_batch():
    batch = FeatureBatch('v', [[1.0, 2.0], [3.0, 4.0]])
    assert batch.size == 2
    assert batch.width == 2
    assert batch.pooled_from_segments == 1

    with pytest.raises(InvalidArgumentError, match='modality'):
        FeatureBatch('x', [[1.0]])
    with pytest.raises(InvalidArgumentError, match='Non finite'):
        FeatureBatch('v', [[np.inf]])
    with pytest.raises(InvalidArgumentError, match='Segment count'):
        FeatureBatch('v', [[1.0]], 0)


def test_pool_segments(rng):
    segments = rng.standard_normal((3, 4, 2))
    batch = pool_segments('a', segments)
    assert batch.pooled_from_segments == 4
    assert np.allclose(batch.features.data, segments.mean(axis=1))

    with pytest.raises(InvalidArgumentError, match='N x L x d'):
        pool_segments('a', np.zeros((3, 4)))


def test_encode_decode_reconstruction_gradients(params, rng):
    batches = {'v': FeatureBatch('v', rng.standard_normal((4, 5))),
               'a': FeatureBatch('a', rng.standard_normal((4, 4)))}
    w = params.named()['drd.enc_c.v.w1']

    def f(t):
        params.params['drd.enc_c.v.w1'] = t
        bundles = {m: encode(batches[m], params) for m in ('v', 'a')}
        recon_self = {m: decode_self(bundles[m], params, m) for m in ('v', 'a')}
        recon_cross = {'v': decode_cross(bundles['v'], bundles['a'].F_c, params, 'v'),
                       'a': decode_cross(bundles['a'], bundles['v'].F_c, params, 'a')}
        return reconstruction_loss(batches, recon_self, recon_cross)

    u = rng.standard_normal(w.shape)
    assert directional_check(f, w.data, u / np.linalg.norm(u)) <= 1e-4


@pytest.mark.parametrize('modality, width', (('v', 5), ('a', 4)))
def test_encode_permutes_with_the_rows(params, rng, modality, width):
    x = rng.standard_normal((7, width))
    order = rng.permutation(7)
    bundle = encode(FeatureBatch(modality, x), params)
    permuted = encode(FeatureBatch(modality, x[order]), params)
    for name, a, b in zip(bundle._fields, bundle, permuted):
        assert np.allclose(a.data[order], b.data, rtol=0, atol=1e-12), name


def test_decode_concatenation_order(params, rng):
    bundle = DisentangledBundle(*(Tensor2(rng.standard_normal((4, 3))) for _ in range(4)))
    w1, b1, w2, b2 = (t.data for t in params.layer('dec', 'v'))

    def decoder(*parts):
        return np.tanh(np.hstack([p.data for p in parts]) @ w1 + b1) @ w2 + b2

    expected = decoder(bundle.N_c, bundle.N_s, bundle.F_s, bundle.F_c)
    assert np.allclose(decode_self(bundle, params, 'v').data, expected, rtol=0, atol=1e-12)

    swapped = decoder(bundle.F_c, bundle.F_s, bundle.N_s, bundle.N_c)
    assert not np.allclose(swapped, expected)


def test_decode_cross_differs_from_self(params, rng):
    bundle_v = encode(FeatureBatch('v', rng.standard_normal((4, 5))), params)
    bundle_a = encode(FeatureBatch('a', rng.standard_normal((4, 4))), params)
    assert not np.allclose(bundle_v.F_c.data, bundle_a.F_c.data)
    cross = decode_cross(bundle_v, bundle_a.F_c, params, 'v').data
    assert not np.allclose(cross, decode_self(bundle_v, params, 'v').data)
