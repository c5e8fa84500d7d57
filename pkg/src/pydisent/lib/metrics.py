# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Evaluation metrics: regression errors and binary classification scores
"""
import collections

import numpy as np

from pydisent.diffutil import as_vector, check_binary, InvalidArgumentError

CLASS_THRESHOLD = 0.5


class MetricsReport(collections.namedtuple(
        'MetricsReport', 'mae rmse accuracy macro_f1', defaults=(None, None))):
    """mae/rmse always, accuracy/macro_f1 only in classification mode"""

    @property
    def is_classification(self):
        return self.accuracy is not None

    def as_row(self):
        return {k: v for k, v in self._asdict().items() if v is not None}


def _paired(y_true, y_pred):
    y_true = as_vector(y_true, 'y_true')
    y_pred = as_vector(y_pred, 'y_pred')
    if len(y_true) != len(y_pred):
        raise InvalidArgumentError(
            f'{len(y_pred)} predictions for {len(y_true)} targets')
    if not len(y_true):
        raise InvalidArgumentError('metrics of an empty dataset')
    return y_true, y_pred


def mae(y_true, y_pred):
    y_true, y_pred = _paired(y_true, y_pred)
    return float(np.mean(np.abs(y_true - y_pred)))


def rmse(y_true, y_pred):
    y_true, y_pred = _paired(y_true, y_pred)
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def threshold(probs, cutoff=CLASS_THRESHOLD):
    return (as_vector(probs, 'probabilities') >= cutoff).astype(np.float64)


def accuracy(labels, predicted):
    labels, predicted = _paired(check_binary(labels), check_binary(predicted, 'predicted'))
    return float(np.mean(labels == predicted))


def macro_f1(labels, predicted):
    """Unweighted mean of the per class F1 of both classes

    A class absent from both labels and predictions scores 1.
    """
    labels, predicted = _paired(check_binary(labels), check_binary(predicted, 'predicted'))
    scores = []
    for cls in (0.0, 1.0):
        tp = np.sum((predicted == cls) & (labels == cls))
        fp = np.sum((predicted == cls) & (labels != cls))
        fn = np.sum((predicted != cls) & (labels == cls))
        denom = 2 * tp + fp + fn
        scores.append(1.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


def regression_report(y_true, y_pred):
    return MetricsReport(mae(y_true, y_pred), rmse(y_true, y_pred))


def classification_report(labels, probs):
    """Errors of the probabilities plus the scores at the 0.5 threshold"""
    labels = check_binary(labels)
    predicted = threshold(probs)
    return MetricsReport(
        mae(labels, probs), rmse(labels, probs),
        accuracy(labels, predicted), macro_f1(labels, predicted))
