# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Gradient checks of every loss term and of the composed model

Each check compares reverse mode gradients with central differences at
random points.  Points close to a hinge or a ranking switch of the
alignment term, or to a tie in the CMD range, are redrawn.
"""
import collections
import logging

import numpy as np

from pydisent.autodiff import grad_check, hstack, Tensor2
from pydisent.datagen import SampleLabels
from pydisent.diffutil import active_tape, InvalidArgumentError, seeded_rng
from pydisent.drd import DisentangledBundle, FeatureBatch
from pydisent.engine import Model, TrainConfig
from pydisent.lib.losses import (
    alignment_loss,
    cmd_loss,
    contribution_loss,
    DEFAULT_MARGIN,
    orthogonality_loss,
    ranking_signs,
    reconstruction_loss,
    task_loss,
    untask_loss,
)

GRAD_TOLERANCE = 1e-4
GRAD_STEP = 1e-4
KINK_DISTANCE = 1e-3
MAX_REDRAWS = 100

GradCheckResult = collections.namedtuple('GradCheckResult', 'name seed error passed')

pydisent_logger = logging.getLogger('pydisent')

GRAD_CHECKS = collections.OrderedDict()


def grad_check_case(name):
    def mark(f):
        GRAD_CHECKS[name] = f
        return f
    return mark


def _matrix(rng, rows, cols):
    return rng.uniform(-1.0, 1.0, size=(rows, cols))


def _probs(rng, rows):
    return rng.uniform(0.05, 0.95, size=(rows, 1))


def _labels(rng, rows):
    labels = rng.integers(0, 2, size=rows).astype(np.float64)
    labels[:2] = (0.0, 1.0)
    return labels


def _extremes_separated(values):
    flat = np.sort(np.asarray(values).reshape(-1))
    return (len(flat) < 2 or
            min(flat[1] - flat[0], flat[-1] - flat[-2]) >= KINK_DISTANCE)


@grad_check_case('cmd')
def _check_cmd(rng):
    for _ in range(MAX_REDRAWS):
        x, y = _matrix(rng, 8, 4), _matrix(rng, 8, 4)
        if _extremes_separated(np.hstack((x, y))):
            break
    return max(grad_check(lambda t: cmd_loss(t, Tensor2(y)), x, h=GRAD_STEP),
               grad_check(lambda t: cmd_loss(Tensor2(x), t), y, h=GRAD_STEP))


@grad_check_case('orth')
def _check_orth(rng):
    mats = [_matrix(rng, 4, 3) for _ in range(8)]
    bundle_a = DisentangledBundle(*(Tensor2(m) for m in mats[4:]))
    errors = []
    for i in range(4):
        def f(t, i=i):
            parts = [Tensor2(m) for m in mats[:4]]
            parts[i] = t
            return orthogonality_loss(DisentangledBundle(*parts), bundle_a)
        errors.append(grad_check(f, mats[i], h=GRAD_STEP))
    return max(errors)


@grad_check_case('recon')
def _check_recon(rng):
    originals = {m: FeatureBatch(m, _matrix(rng, 4, 5)) for m in ('v', 'a')}
    recon_cross = {m: Tensor2(_matrix(rng, 4, 5)) for m in ('v', 'a')}
    recon_a = Tensor2(_matrix(rng, 4, 5))
    return grad_check(
        lambda t: reconstruction_loss(originals, dict(v=t, a=recon_a), recon_cross),
        _matrix(rng, 4, 5), h=GRAD_STEP)


@grad_check_case('task')
def _check_task(rng):
    target = rng.standard_normal(5)
    return grad_check(lambda t: task_loss(t, target), rng.standard_normal((5, 1)),
                      h=GRAD_STEP)


@grad_check_case('untask')
def _check_untask(rng):
    labels = _labels(rng, 6)
    return grad_check(lambda t: untask_loss(t, labels), _probs(rng, 6), h=GRAD_STEP)


@grad_check_case('contri')
def _check_contri(rng):
    labels = _labels(rng, 6)
    others = [Tensor2(_probs(rng, 6)) for _ in range(3)]
    return grad_check(lambda t: contribution_loss([t] + others, labels)[0],
                      _probs(rng, 6), h=GRAD_STEP)


def hinge_distance(w_attn, per_feature_losses, margin=DEFAULT_MARGIN):
    """Smallest |hinge argument| of the alignment term at (w_attn, losses)"""
    w = np.atleast_2d(np.asarray(w_attn, dtype=np.float64))
    pairs, signs = ranking_signs(per_feature_losses)
    args = [s * (w[:, j] - w[:, i] + margin) for (i, j), s in zip(pairs, signs)]
    return float(np.min(np.abs(args)))


@grad_check_case('align')
def _check_align(rng):
    for _ in range(MAX_REDRAWS):
        w = rng.dirichlet(np.ones(4), size=3)
        ell = rng.uniform(0.1, 1.0, size=4)
        if hinge_distance(w, ell) >= KINK_DISTANCE:
            break
    return grad_check(lambda t: alignment_loss(t, ell), w, h=GRAD_STEP)


def micro_problem(seed):
    """A tiny full model (d_v = d_a = 3, d = 2, h = 4) and a batch of 4"""
    rng = seeded_rng(seed, 99)
    model = Model(TrainConfig(latent_d=2, hidden_h=4, seed=seed), dict(v=3, a=3))
    batches = {m: FeatureBatch(m, rng.standard_normal((4, 3))) for m in ('v', 'a')}
    labels = SampleLabels(rng.standard_normal(4), _labels(rng, 4))
    return model, batches, labels


def _pipeline_is_smooth(model, batches, labels):
    with active_tape.suspended():
        fwd = model.forward(batches)
        _, per_feature = contribution_loss(
            model.contri_head.score(fwd.bundles), labels.y_aux)
    ell = np.array([loss.item() for loss in per_feature])
    gaps = np.abs(ell[:, None] - ell[None, :])[np.triu_indices(4, 1)]
    joint = hstack((fwd.bundles['v'].F_c, fwd.bundles['a'].F_c)).data
    return (hinge_distance(fwd.fusion.W_attn.data, ell) >= KINK_DISTANCE and
            gaps.min() >= KINK_DISTANCE and _extremes_separated(joint))


def _substitute_params(model):
    """name -> setter which puts a tensor in place of that parameter"""
    setters = {}
    for name in model.drd.named():
        setters[name] = lambda t, name=name: model.drd.params.__setitem__(name, t)
    for name in model.fusion.named():
        field = name.split('.', 1)[1]
        setters[name] = lambda t, field=field: setattr(
            model, 'fusion', model.fusion._replace(**{field: t}))
    for head in (model.contri_head, model.untask_head, model.task_head):
        for name in head.named():
            attr = name.rsplit('.', 1)[1]
            setters[name] = lambda t, head=head, attr=attr: setattr(head, attr, t)
    return setters


@grad_check_case('pipeline')
def _check_pipeline(rng):
    seed = int(rng.integers(1 << 30))
    for redraw in range(MAX_REDRAWS):
        model, batches, labels = micro_problem(seed + redraw)
        if _pipeline_is_smooth(model, batches, labels):
            break

    originals = model.named()
    errors = []
    for name, setter in _substitute_params(model).items():
        def f(t, setter=setter):
            setter(t)
            return model.losses(batches, labels).total
        errors.append(grad_check(f, originals[name].data, h=GRAD_STEP))
        setter(originals[name])
    return max(errors)


def run_suite(seeds=range(10), names=None, tolerance=GRAD_TOLERANCE):
    """Run the named checks (default all) at every seed

    :return: list of GradCheckResult
    """
    names = tuple(GRAD_CHECKS) if names is None else tuple(names)
    unknown = [name for name in names if name not in GRAD_CHECKS]
    if unknown:
        raise InvalidArgumentError(
            f'Unknown gradient checks {unknown}, expected some of {tuple(GRAD_CHECKS)}')
    case_ids = {name: i + 1 for i, name in enumerate(GRAD_CHECKS)}
    results = []
    for name in names:
        for seed in seeds:
            error = GRAD_CHECKS[name](seeded_rng(seed, 7, case_ids[name]))
            passed = bool(error <= tolerance)
            results.append(GradCheckResult(name, seed, error, passed))
            log = pydisent_logger.debug if passed else pydisent_logger.warning
            log(f'gradcheck {name} seed {seed}: max relative error {error:.3g}')
    return results
