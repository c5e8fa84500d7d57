# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
The seven loss terms and their weighted total

All terms take and return Tensor2 so that they record onto the active
GradTape.  Label arguments are plain arrays.
"""
import collections
import itertools as it
import logging

import numpy as np

from pydisent.autodiff import (
    amax,
    amin,
    central_moment,
    clip,
    frobenius_norm_sq,
    hstack,
    l2_norm,
    log,
    matmul,
    maximum,
    mean,
    relu,
    sum_,
    Tensor2,
)
from pydisent.diffutil import (
    check_binary,
    InvalidArgumentError,
    MODALITIES,
    PROB_CLAMP,
    STACK_ORDER,
)
from pydisent.drd import FeatureBatch
from pydisent.lib.loss_helpers import LOSS_GROUPS, loss_term

DEFAULT_ALPHA = 0.7
DEFAULT_BETA = 0.5
DEFAULT_MARGIN = 0.05

NUM_STACKED = len(STACK_ORDER)

pydisent_logger = logging.getLogger('pydisent')


class CmdConfig(collections.namedtuple(
        'CmdConfig', 'max_order_K epsilon_range_floor', defaults=(5, 1e-9))):

    def __new__(cls, max_order_K=5, epsilon_range_floor=1e-9):
        if int(max_order_K) < 2:
            raise InvalidArgumentError(f'CMD max order must be >= 2, got {max_order_K}')
        if not epsilon_range_floor > 0:
            raise InvalidArgumentError(
                f'CMD range floor must be > 0, got {epsilon_range_floor}')
        return super().__new__(cls, int(max_order_K), float(epsilon_range_floor))


LossBreakdown = collections.namedtuple(
    'LossBreakdown', 'task untask orth cmd recon align contri total')

LOSS_NAMES = LossBreakdown._fields[:-1]


def _column(values, name):
    """Labels and targets as a B x 1 constant array"""
    arr = np.asarray(values.data if isinstance(values, Tensor2) else values,
                     dtype=np.float64)
    return arr.reshape(-1, 1)


def _as_column_tensor(pred, name):
    if not isinstance(pred, Tensor2):
        pred = Tensor2(np.asarray(pred, dtype=np.float64).reshape(-1, 1))
    elif pred.cols != 1:
        if pred.rows != 1:
            raise InvalidArgumentError(f'{name} must be a vector, got {pred.shape}')
        pred = pred.T
    return pred


def bce(pred_prob, target):
    """Mean binary cross entropy of clamped probabilities against targets"""
    pred_prob = _as_column_tensor(pred_prob, 'prediction')
    target = _column(target, 'target')
    if pred_prob.rows != target.shape[0]:
        raise InvalidArgumentError(
            f'{pred_prob.rows} predictions for {target.shape[0]} labels')
    p = clip(pred_prob, *PROB_CLAMP)
    per_sample = target * log(p) + (1.0 - target) * log(1.0 - p)
    return -mean(per_sample)


@loss_term('cmd')
def cmd_loss(x, y, cfg=CmdConfig()):
    """Central moment discrepancy between two B x d batches

    Mean difference plus central moments 2..K, each scaled by a power of the
    joint feature range |b - a| of both batches.
    """
    if x.shape != y.shape:
        raise InvalidArgumentError(f'cmd_loss: shapes {x.shape} and {y.shape} differ')
    if x.rows < 2:
        raise InvalidArgumentError(f'cmd_loss needs at least 2 rows, got {x.rows}')

    joint = hstack((x, y))
    span = amax(joint) - amin(joint)
    if span.item() < cfg.epsilon_range_floor:
        pydisent_logger.warning(
            f'cmd_loss: feature range {span.item()} clamped to {cfg.epsilon_range_floor}')
    span = maximum(span, cfg.epsilon_range_floor)

    total = l2_norm(mean(x, axis=0) - mean(y, axis=0)) / span
    for k in range(2, cfg.max_order_K + 1):
        moment_gap = central_moment(x, k) - central_moment(y, k)
        total = total + l2_norm(moment_gap) / span ** k
    return total


@loss_term('orth')
def orthogonality_loss(bundle_v, bundle_a):
    """Soft orthogonality between the spaces of each modality"""
    total = None
    for bundle in (bundle_v, bundle_a):
        shape = bundle.F_c.shape
        for name, feature in zip(bundle._fields, bundle):
            if feature.shape != shape:
                raise InvalidArgumentError(
                    f'orthogonality_loss: {name} is {feature.shape}, expected {shape}')
        terms = (frobenius_norm_sq(matmul(bundle.F_c.T, bundle.F_s)) +
                 frobenius_norm_sq(matmul(bundle.F_c.T, bundle.N_c)) +
                 frobenius_norm_sq(matmul(bundle.F_s.T, bundle.N_s)))
        total = terms if total is None else total + terms
    return total


@loss_term('recon')
def reconstruction_loss(originals, recon_self, recon_cross):
    """Self and cross reconstruction error, averaged over modalities

    Each argument holds one entry per modality (a sequence in v, a order or a
    dict keyed by modality).  The per reconstruction error is the mean of
    squared differences over the batch.
    """
    def per_modality(arg):
        if isinstance(arg, dict):
            return tuple(arg[m] for m in MODALITIES)
        if len(arg) != len(MODALITIES):
            raise InvalidArgumentError(f'Expected {len(MODALITIES)} modalities, got {len(arg)}')
        return tuple(arg)

    total = None
    for original, rec_self, rec_cross in zip(
            per_modality(originals), per_modality(recon_self), per_modality(recon_cross)):
        if isinstance(original, FeatureBatch):
            original = original.features
        for rec in (rec_self, rec_cross):
            if rec.shape != original.shape:
                raise InvalidArgumentError(
                    f'reconstruction_loss: {rec.shape} vs original {original.shape}')
        terms = mean((original - rec_self) ** 2) + mean((original - rec_cross) ** 2)
        total = terms if total is None else total + terms
    return total / len(MODALITIES)


@loss_term('task')
def task_loss(pred, target):
    """Mean squared error between predictions and targets"""
    pred = _as_column_tensor(pred, 'prediction')
    target = _column(target, 'target')
    if pred.rows != target.shape[0] or pred.rows < 1:
        raise InvalidArgumentError(
            f'task_loss: {pred.rows} predictions for {target.shape[0]} targets')
    return mean((pred - target) ** 2)


@loss_term('untask')
def untask_loss(pred_prob, y_aux):
    """BCE against the reversed auxiliary labels 1 - y_aux"""
    y_aux = check_binary(y_aux, 'y_aux')
    return bce(pred_prob, 1.0 - y_aux)


@loss_term('contri')
def contribution_loss(head_probs, y_aux):
    """Sum of per feature BCE against y_aux

    :param head_probs: four probability vectors in the stack order
        (F_c^v, F_c^a, F_s^v, F_s^a)
    :return: (total, tuple of the four per feature losses)
    """
    if len(head_probs) != NUM_STACKED:
        raise InvalidArgumentError(
            f'contribution_loss needs {NUM_STACKED} heads, got {len(head_probs)}')
    y_aux = check_binary(y_aux, 'y_aux')
    per_feature = tuple(bce(probs, y_aux) for probs in head_probs)
    total = per_feature[0]
    for loss in per_feature[1:]:
        total = total + loss
    return total, per_feature


def ranking_signs(per_feature_losses):
    """+1 where l_i < l_j else -1, for every ordered pair i != j"""
    ell = np.asarray(per_feature_losses, dtype=np.float64).reshape(-1)
    pairs = tuple(it.permutations(range(len(ell)), 2))
    signs = np.array([1.0 if ell[i] < ell[j] else -1.0 for i, j in pairs])
    return pairs, signs


@loss_term('align')
def alignment_loss(w_attn, per_feature_losses, margin=DEFAULT_MARGIN):
    """Pairwise margin ranking of attention weights against feature losses

    For every ordered pair (i, j), i != j, of the stacked features::

        max(0, s_ij * (W_j - W_i + margin))    s_ij = 1 if l_i < l_j else -1

    summed and scaled by 1 / (3 |C|).  The losses only decide the signs and
    carry no gradient.  A B x 4 `w_attn` is scored row by row and averaged.
    """
    if not isinstance(w_attn, Tensor2):
        w_attn = Tensor2(w_attn)
    ell = np.asarray(
        per_feature_losses.data if isinstance(per_feature_losses, Tensor2)
        else [float(v.item()) if isinstance(v, Tensor2) else v
              for v in per_feature_losses], dtype=np.float64).reshape(-1)
    if w_attn.cols != NUM_STACKED or len(ell) != NUM_STACKED:
        raise InvalidArgumentError(
            f'alignment_loss needs {NUM_STACKED} stacked features, '
            f'got weights {w_attn.shape} and {len(ell)} losses')
    if not margin > 0:
        raise InvalidArgumentError(f'alignment margin must be > 0, got {margin}')

    pairs, signs = ranking_signs(ell)

    # column k of pair_diff gives W_j - W_i for pair k = (i, j)
    pair_diff = np.zeros((NUM_STACKED, len(pairs)))
    for k, (i, j) in enumerate(pairs):
        pair_diff[j, k] = 1.0
        pair_diff[i, k] = -1.0

    hinge = relu(matmul(w_attn, Tensor2(pair_diff * signs)) + Tensor2(margin * signs))
    per_row = sum_(hinge, axis=1) / (3 * len(MODALITIES))
    return mean(per_row)


def total_loss(parts, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA):
    """Combine the seven terms into a LossBreakdown

    :param parts: mapping or LossBreakdown with the seven terms, as floats
        or 1x1 Tensor2
    :return: LossBreakdown, total in the same kind as the parts
    """
    if isinstance(parts, LossBreakdown):
        parts = parts._asdict()
    values = {name: parts[name] for name in LOSS_NAMES}
    diagnosis, disentangle, individual = (
        _group_sum(values, LOSS_GROUPS[group])
        for group in ('diagnosis', 'disentangle', 'individual'))
    total = diagnosis + alpha * disentangle + beta * individual
    return LossBreakdown(total=total, **values)


def _group_sum(values, names):
    total = values[names[0]]
    for name in names[1:]:
        total = total + values[name]
    return total


def recombine(breakdown, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA):
    """Recompute the total from the parts of a float LossBreakdown"""
    return total_loss(breakdown_to_floats(breakdown), alpha, beta).total


def breakdown_to_floats(breakdown):
    return LossBreakdown(*(
        value.item() if isinstance(value, Tensor2) else float(value)
        for value in breakdown))
