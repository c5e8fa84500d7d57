# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Representation disentanglement: per modality common/specific encoders and
self/cross decoders.

Each encoder maps a pooled feature batch through two tanh layers to a
2d wide output whose halves are the (related, unrelated) features::

    common encoder   -> (F_c, N_c)
    specific encoder -> (F_s, N_s)

The decoder of a modality reads the 4d concatenation N_c + N_s + F_s + F_c.
"""
import collections
import math

import numpy as np

from pydisent.autodiff import affine, columns, hstack, Tensor2, tanh
from pydisent.diffutil import InvalidArgumentError, MODALITIES, seeded_rng

# stream id used to derive the drd init generator from the seed
DRD_INIT_STREAM = 1


class FeatureBatch(collections.namedtuple(
        'FeatureBatch', 'modality features pooled_from_segments')):
    """B pooled d_m wide feature vectors of one modality"""

    def __new__(cls, modality, features, pooled_from_segments=1):
        if modality not in MODALITIES:
            raise InvalidArgumentError(f'Unknown modality: {modality}')
        if not isinstance(features, Tensor2):
            features = Tensor2(features)
        if features.cols < 1 or features.rows < 1:
            raise InvalidArgumentError(f'Empty feature batch: {features.shape}')
        if not np.all(np.isfinite(features.data)):
            raise InvalidArgumentError(f'Non finite values in {modality} features')
        if int(pooled_from_segments) < 1:
            raise InvalidArgumentError(f'Segment count must be >= 1: {pooled_from_segments}')
        return super().__new__(cls, modality, features, int(pooled_from_segments))

    @property
    def size(self):
        return self.features.rows

    @property
    def width(self):
        return self.features.cols


class DisentangledBundle(collections.namedtuple('DisentangledBundle', 'F_c F_s N_c N_s')):
    """The four B x d features of one modality"""

    @property
    def width(self):
        return self.F_c.cols

    @property
    def related(self):
        return self.F_c, self.F_s

    @property
    def unrelated(self):
        return self.N_c, self.N_s


def pool_segments(modality, segments):
    """Mean pool [N x L x d_m] segment features over L"""
    segments = np.asarray(segments, dtype=np.float64)
    if segments.ndim != 3:
        raise InvalidArgumentError(f'Segments must be N x L x d, got shape {segments.shape}')
    return FeatureBatch(modality, segments.mean(axis=1), segments.shape[1])


def init_affine(rng, fan_in, fan_out):
    """Uniform +-1/sqrt(fan_in) weight and bias"""
    bound = 1.0 / math.sqrt(fan_in)
    return (Tensor2.uniform(fan_in, fan_out, bound, rng),
            Tensor2.uniform(1, fan_out, bound, rng))


class DrdParams:
    """Encoder and decoder weights for both modalities

    Names follow ``drd.<part>.<modality>.<w1|b1|w2|b2>`` where part is one of
    ``enc_c``, ``enc_s`` or ``dec``.
    """

    parts = ('enc_c', 'enc_s', 'dec')

    def __init__(self, input_widths, latent_d, hidden_h, params):
        self.input_widths = dict(input_widths)
        self.latent_d = latent_d
        self.hidden_h = hidden_h
        self.params = params

    @classmethod
    def init(cls, d_v, d_a, latent_d, hidden_h=None, seed=0):
        hidden_h = hidden_h or 2 * latent_d
        if min(d_v, d_a, latent_d, hidden_h) < 1:
            raise InvalidArgumentError(
                f'Widths must be positive: d_v={d_v} d_a={d_a} d={latent_d} h={hidden_h}')
        rng = seeded_rng(seed, DRD_INIT_STREAM)
        widths = dict(v=d_v, a=d_a)
        params = {}
        for modality in MODALITIES:
            d_m = widths[modality]
            for part in cls.parts:
                fan_in, fan_out = ((4 * latent_d, d_m) if part == 'dec'
                                   else (d_m, 2 * latent_d))
                w1, b1 = init_affine(rng, fan_in, hidden_h)
                w2, b2 = init_affine(rng, hidden_h, fan_out)
                prefix = f'drd.{part}.{modality}'
                params.update({f'{prefix}.w1': w1, f'{prefix}.b1': b1,
                               f'{prefix}.w2': w2, f'{prefix}.b2': b2})
        return cls(widths, latent_d, hidden_h, params)

    def named(self):
        return self.params

    def layer(self, part, modality):
        prefix = f'drd.{part}.{modality}'
        return tuple(self.params[f'{prefix}.{name}'] for name in ('w1', 'b1', 'w2', 'b2'))


def _encoder(x, params, part, modality):
    w1, b1, w2, b2 = params.layer(part, modality)
    out = tanh(affine(tanh(affine(x, w1, b1)), w2, b2))
    d = params.latent_d
    return columns(out, 0, d), columns(out, d, 2 * d)


def encode(batch, params):
    """Disentangle one modality's pooled features into a DisentangledBundle"""
    expected = params.input_widths[batch.modality]
    if batch.width != expected:
        raise InvalidArgumentError(
            f'{batch.modality} features are {batch.width} wide, params expect {expected}')
    F_c, N_c = _encoder(batch.features, params, 'enc_c', batch.modality)
    F_s, N_s = _encoder(batch.features, params, 'enc_s', batch.modality)
    return DisentangledBundle(F_c=F_c, F_s=F_s, N_c=N_c, N_s=N_s)


def _check_bundle(bundle, params):
    d = params.latent_d
    rows = bundle.F_c.rows
    for name, feature in zip(bundle._fields, bundle):
        if feature.shape != (rows, d):
            raise InvalidArgumentError(
                f'Bundle {name} is {feature.shape}, expected ({rows}, {d})')


def decode_cross(bundle, F_c_other, params, modality):
    """Reconstruct modality features with the common slot swapped"""
    _check_bundle(bundle, params)
    if F_c_other.shape != bundle.F_c.shape:
        raise InvalidArgumentError(
            f'Swapped common feature is {F_c_other.shape}, expected {bundle.F_c.shape}')
    w1, b1, w2, b2 = params.layer('dec', modality)
    z = hstack((bundle.N_c, bundle.N_s, bundle.F_s, F_c_other))
    return affine(tanh(affine(z, w1, b1)), w2, b2)


def decode_self(bundle, params, modality):
    return decode_cross(bundle, bundle.F_c, params, modality)
