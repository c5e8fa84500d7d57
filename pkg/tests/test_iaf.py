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

from pydisent.autodiff import grad_check, Tensor2
from pydisent.diffutil import InvalidArgumentError, STACK_ORDER
from pydisent.drd import DisentangledBundle, FeatureBatch
from pydisent.engine import TaskHead
from pydisent.iaf import (
    ContributionHead,
    fuse,
    FusionResult,
    IafParams,
    MlpFusion,
    stack_related,
    stack_unrelated,
    UntaskHead,
)
from pydisent.lib.losses import task_loss


def iaf_oracle(stacked, w_q, w_k, w_v):
    """Per sample: S is 4 x d, softmax(mean(S W_Q) (S W_K)^T / sqrt d), weights @ S W_V"""
    d = w_q.shape[0]
    weights, fused = [], []
    for s in np.stack(stacked, axis=1):
        q_ind = (s @ w_q).mean(axis=0)
        logits = (s @ w_k) @ q_ind / np.sqrt(d)
        e = np.exp(logits - logits.max())
        w = e / e.sum()
        weights.append(w)
        fused.append(w @ (s @ w_v))
    return np.array(weights), np.array(fused)


def random_bundles(rng, rows, d):
    return {m: DisentangledBundle(*(Tensor2(rng.standard_normal((rows, d))) for _ in range(4)))
            for m in ('v', 'a')}


@pytest.fixture
def params():
    return IafParams.init(3, seed=5)


def test_stack_order(rng):
    bundles = random_bundles(rng, 2, 3)
    stacked = stack_related(bundles)
    assert stacked == (bundles['v'].F_c, bundles['a'].F_c, bundles['v'].F_s, bundles['a'].F_s)
    assert stack_related((bundles['v'], bundles['a'])) == stacked
    assert stack_unrelated(bundles) == (
        bundles['v'].N_c, bundles['a'].N_c, bundles['v'].N_s, bundles['a'].N_s)


def test_stack_errors(rng):
    bundles = random_bundles(rng, 2, 3)
    with pytest.raises(InvalidArgumentError, match='Expected 2 bundles'):
        stack_related((bundles['v'], ))
    bundles['a'] = bundles['a']._replace(F_s=Tensor2(np.zeros((2, 4))))
    with pytest.raises(InvalidArgumentError, match='differ in shape'):
        stack_related(bundles)


def test_params(params):
    assert params.latent_d == 3
    assert set(params.named()) == {'iaf.W_Q', 'iaf.W_K', 'iaf.W_V'}
    with pytest.raises(InvalidArgumentError, match='d x d'):
        IafParams(np.eye(3), np.eye(3), np.eye(2))


def test_weights_on_simplex(params, rng):
    result = fuse(random_bundles(rng, 100, 3), params)
    w = result.W_attn.data
    assert isinstance(result, FusionResult)
    assert result.stack_order == STACK_ORDER
    assert w.shape == (100, 4)
    assert np.all(w >= 0)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-10


def test_fusion_oracle(params, rng):
    bundles = random_bundles(rng, 100, 3)
    result = fuse(bundles, params)
    weights, fused = iaf_oracle([t.data for t in stack_related(bundles)],
                                *(p.data for p in params))
    assert np.abs(result.W_attn.data - weights).max() <= 1e-12
    assert np.abs(result.F_S.data - fused).max() <= 1e-12


def test_identical_rows_give_uniform_weights(params, rng):
    row = Tensor2(rng.standard_normal((5, 3)))
    same = DisentangledBundle(row, row, row, Tensor2(np.zeros((5, 3))))
    result = fuse(dict(v=same, a=same), params)
    assert np.abs(result.W_attn.data - 0.25).max() <= 1e-12
    assert np.abs(result.F_S.data - (row.data @ params.W_V.data)).max() <= 1e-12


def test_zero_keys_give_uniform_weights(params, rng):
    zero_keys = params._replace(W_K=Tensor2(np.zeros((3, 3)), requires_grad=True))
    result = fuse(random_bundles(rng, 10, 3), zero_keys)
    assert np.array_equal(result.W_attn.data, np.full((10, 4), 0.25))


def test_scaled_keys_keep_the_argmax(params, rng):
    bundles = random_bundles(rng, 50, 3)
    scaled = params._replace(W_K=Tensor2(params.W_K.data * 10, requires_grad=True))
    w1 = fuse(bundles, params).W_attn.data
    w10 = fuse(bundles, scaled).W_attn.data
    assert np.array_equal(w1.argmax(axis=1), w10.argmax(axis=1))
    weights, _ = iaf_oracle([t.data for t in stack_related(bundles)],
                            params.W_Q.data, scaled.W_K.data, params.W_V.data)
    assert np.abs(w10 - weights).max() <= 1e-12


def test_width_mismatch(params, rng):
    with pytest.raises(InvalidArgumentError, match='IAF projections expect 3'):
        fuse(random_bundles(rng, 2, 4), params)


def test_fusion_gradients(params, rng):
    bundles = random_bundles(rng, 6, 3)
    head = TaskHead.init(3, 4, seed=2)
    target = rng.standard_normal(6)

    def f(t):
        return task_loss(head(fuse(bundles, params._replace(W_Q=t)).F_S), target)

    assert grad_check(f, params.W_Q.data) <= 1e-4
    assert grad_check(lambda t: task_loss(head(fuse(bundles, params._replace(W_V=t)).F_S),
                                          target), params.W_V.data) <= 1e-4


def test_fusion_permutes_with_the_rows(params, rng):
    bundles = random_bundles(rng, 9, 3)
    order = rng.permutation(9)
    permuted = {m: DisentangledBundle(*(Tensor2(t.data[order]) for t in b))
                for m, b in bundles.items()}
    result = fuse(bundles, params)
    again = fuse(permuted, params)
    assert np.allclose(result.W_attn.data[order], again.W_attn.data, rtol=0, atol=1e-12)
    assert np.allclose(result.F_S.data[order], again.F_S.data, rtol=0, atol=1e-12)


def test_heads(rng):
    bundles = random_bundles(rng, 6, 3)
    contri = ContributionHead.init(3, seed=2)
    untask = UntaskHead.init(3, seed=2)
    scores = contri.score(bundles)
    assert len(scores) == 4
    for probs in scores:
        assert probs.shape == (6, 1)
        assert np.all((probs.data > 0) & (probs.data < 1))
    assert untask.score(bundles).shape == (6, 1)
    assert untask.w.shape == (12, 1)
    assert set(contri.named()) == {'head.contri.w', 'head.contri.b'}
    assert set(untask.named()) == {'head.untask.w', 'head.untask.b'}
    assert not np.array_equal(contri.w.data, untask.w.data[:3])


def test_mlp_fusion(rng):
    bundles = random_bundles(rng, 6, 3)
    related = MlpFusion.init(12, 3, seed=1)
    result = related(bundles)
    assert result.W_attn is None
    assert result.F_S.shape == (6, 3)
    assert set(related.named()) == {'fuse_mlp.w', 'fuse_mlp.b'}

    raw = MlpFusion.init(9, 3, seed=1, source='raw')
    batches = [FeatureBatch('v', rng.standard_normal((6, 5))),
               FeatureBatch('a', rng.standard_normal((6, 4)))]
    assert raw(batches).F_S.shape == (6, 3)

    with pytest.raises(InvalidArgumentError, match='Unknown fusion source'):
        MlpFusion(related.w, related.b, source='bogus')
