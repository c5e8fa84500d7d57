# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Individual aware fusion of the four related features, the heads that score
them, and the simpler fusion variants used by component ablations.

For each sample the related features are stacked in STACK_ORDER into a 4 x d
matrix S and::

    Q, K, V = S W_Q, S W_K, S W_V
    q_ind   = mean of the rows of Q
    W_attn  = softmax(q_ind K^T / sqrt(d))
    F_S     = W_attn V

All of it is computed for the whole batch at once, one column per stacked
feature.
"""
import collections
import math

from pydisent.autodiff import (
    affine,
    columns,
    hstack,
    matmul,
    sigmoid,
    softmax,
    sum_,
    Tensor2,
    tanh,
)
from pydisent.diffutil import InvalidArgumentError, MODALITIES, seeded_rng, STACK_ORDER
from pydisent.drd import init_affine

IAF_INIT_STREAM = 2
HEAD_INIT_STREAM = 3

FUSION_VARIANTS = ('iaf', 'mlp', 'concat')


class FusionResult(collections.namedtuple(
        'FusionResult', 'F_S W_attn stack_order', defaults=(STACK_ORDER, ))):
    """Fused B x d features and the B x 4 attention weights

    Fusion variants without attention leave W_attn as None.
    """


def stack_related(bundles):
    """The four related features in STACK_ORDER: Fc_v, Fc_a, Fs_v, Fs_a"""
    bundle_v, bundle_a = _per_modality(bundles)
    stacked = (bundle_v.F_c, bundle_a.F_c, bundle_v.F_s, bundle_a.F_s)
    shape = stacked[0].shape
    if any(s.shape != shape for s in stacked):
        raise InvalidArgumentError(
            f'Related features differ in shape: {[tuple(s.shape) for s in stacked]}')
    return stacked


def stack_unrelated(bundles):
    bundle_v, bundle_a = _per_modality(bundles)
    return bundle_v.N_c, bundle_a.N_c, bundle_v.N_s, bundle_a.N_s


def _per_modality(bundles):
    if isinstance(bundles, dict):
        return tuple(bundles[m] for m in MODALITIES)
    if len(bundles) != len(MODALITIES):
        raise InvalidArgumentError(f'Expected {len(MODALITIES)} bundles, got {len(bundles)}')
    return tuple(bundles)


class IafParams(collections.namedtuple('IafParams', 'W_Q W_K W_V')):
    """d x d query, key and value projections"""

    def __new__(cls, W_Q, W_K, W_V):
        mats = tuple(m if isinstance(m, Tensor2) else Tensor2(m, requires_grad=True)
                     for m in (W_Q, W_K, W_V))
        d = mats[0].rows
        if any(m.shape != (d, d) for m in mats):
            raise InvalidArgumentError(
                f'IAF projections must all be d x d: {[tuple(m.shape) for m in mats]}')
        return super().__new__(cls, *mats)

    @classmethod
    def init(cls, latent_d, seed=0):
        rng = seeded_rng(seed, IAF_INIT_STREAM)
        bound = 1.0 / math.sqrt(latent_d)
        return cls(*(Tensor2.uniform(latent_d, latent_d, bound, rng) for _ in range(3)))

    @property
    def latent_d(self):
        return self.W_Q.rows

    def named(self):
        return {f'iaf.{name}': value for name, value in zip(self._fields, self)}


def fuse(bundles, params):
    """Attention weighted fusion of the stacked related features"""
    stacked = stack_related(bundles)
    d = params.latent_d
    if stacked[0].cols != d:
        raise InvalidArgumentError(
            f'Features are {stacked[0].cols} wide, IAF projections expect {d}')

    queries = [matmul(s, params.W_Q) for s in stacked]
    keys = [matmul(s, params.W_K) for s in stacked]
    values = [matmul(s, params.W_V) for s in stacked]

    q_ind = queries[0]
    for q in queries[1:]:
        q_ind = q_ind + q
    q_ind = q_ind / len(stacked)

    scale = 1.0 / math.sqrt(d)
    logits = hstack([sum_(q_ind * k, axis=1) * scale for k in keys])
    w_attn = softmax(logits)

    fused = None
    for e, v in enumerate(values):
        term = columns(w_attn, e, e + 1) * v
        fused = term if fused is None else fused + term
    return FusionResult(F_S=fused, W_attn=w_attn)


class _AffineHead:
    """Single affine layer followed by a sigmoid"""

    prefix = None

    def __init__(self, w, b):
        self.w = w
        self.b = b

    def named(self):
        return {f'{self.prefix}.w': self.w, f'{self.prefix}.b': self.b}

    def __call__(self, x):
        return sigmoid(affine(x, self.w, self.b))


class ContributionHead(_AffineHead):
    """One head shared by the four stacked features"""

    prefix = 'head.contri'

    @classmethod
    def init(cls, latent_d, seed=0):
        return cls(*init_affine(seeded_rng(seed, HEAD_INIT_STREAM, 1), latent_d, 1))

    def score(self, bundles):
        """Probability vectors for each of the four related features"""
        return tuple(self(s) for s in stack_related(bundles))


class UntaskHead(_AffineHead):
    """Predicts y_aux from the 4d concatenation of the unrelated features"""

    prefix = 'head.untask'

    @classmethod
    def init(cls, latent_d, seed=0):
        return cls(*init_affine(seeded_rng(seed, HEAD_INIT_STREAM, 2), 4 * latent_d, 1))

    def score(self, bundles):
        return self(hstack(stack_unrelated(bundles)))


class MlpFusion:
    """tanh(affine) over a concatenation, the attention free variants

    With `source='related'` the input is the 4d concatenation of the stacked
    related features, with `source='raw'` the pooled input features of both
    modalities side by side.
    """

    prefix = 'fuse_mlp'

    def __init__(self, w, b, source='related'):
        if source not in ('related', 'raw'):
            raise InvalidArgumentError(f'Unknown fusion source: {source}')
        self.w = w
        self.b = b
        self.source = source

    @classmethod
    def init(cls, fan_in, latent_d, seed=0, source='related'):
        return cls(*init_affine(seeded_rng(seed, IAF_INIT_STREAM, 1), fan_in, latent_d),
                   source=source)

    def named(self):
        return {f'{self.prefix}.w': self.w, f'{self.prefix}.b': self.b}

    def __call__(self, inputs):
        if self.source == 'related':
            z = hstack(stack_related(inputs))
        else:
            z = hstack([batch.features for batch in inputs])
        return FusionResult(F_S=tanh(affine(z, self.w, self.b)), W_attn=None)
