# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Training and evaluation: Adam, the model assembly, the early stopping
trainer, checkpoints and the ablation sweeps.
"""
import collections
import json
import logging
import os
import pickle

import numpy as np
from ruamel.yaml import YAML

from pydisent.autodiff import affine, GradTape, sigmoid, Tensor2, tanh
from pydisent.datagen import data_digest as dir_data_digest
from pydisent.diffutil import (
    check_binary,
    ConfigError,
    EvaluationError,
    format_key_values,
    InvalidArgumentError,
    MODALITIES,
    read_key_values,
    seeded_rng,
    STACK_ORDER,
)
from pydisent.drd import (
    decode_cross,
    decode_self,
    DisentangledBundle,
    DrdParams,
    encode,
    init_affine,
)
from pydisent.iaf import (
    ContributionHead,
    fuse,
    FUSION_VARIANTS,
    IafParams,
    MlpFusion,
    stack_unrelated,
    UntaskHead,
)
from pydisent.lib.loss_helpers import TOGGLEABLE_TERMS
from pydisent.lib.losses import (
    alignment_loss,
    bce,
    breakdown_to_floats,
    cmd_loss,
    CmdConfig,
    contribution_loss,
    LOSS_NAMES,
    LossBreakdown,
    orthogonality_loss,
    reconstruction_loss,
    task_loss,
    total_loss,
    untask_loss,
)
from pydisent.lib.metrics import (
    accuracy,
    classification_report,
    regression_report,
    threshold,
)
from pydisent.reports import write_table

TASK_HEAD_STREAM = 4
EPOCH_STREAM = 5
PROBE_STREAM = 6

TASKS = ('regression', 'classification')

pydisent_logger = logging.getLogger('pydisent')


class TrainConfig(collections.namedtuple('TrainConfig', (
        'learning_rate', 'batch_size', 'alpha', 'beta', 'epsilon_margin', 'cmd_K',
        'max_epochs', 'patience', 'seed', 'loss_toggles', 'latent_d', 'hidden_h',
        'task', 'fusion', 'val_fraction', 'cmd_epsilon'),
        defaults=(1e-3, 16, 0.7, 0.5, 0.05, 5, 200, 10, 0, None, 8, None,
                  'regression', 'iaf', 0.2, 1e-9))):
    """Hyper parameters of one training run

    ``loss_toggles`` maps any of orth, cmd, untask, align, contri, recon to
    a bool, missing terms are on.  ``hidden_h`` of None means 2 * latent_d.
    """

    def validate(self):
        checks = (
            (self.learning_rate > 0, 'learning_rate must be > 0'),
            (int(self.batch_size) >= 2, 'batch_size must be >= 2'),
            (int(self.patience) >= 1, 'patience must be >= 1'),
            (int(self.max_epochs) >= 0, 'max_epochs must be >= 0'),
            (self.alpha >= 0 and self.beta >= 0, 'alpha and beta must be >= 0'),
            (self.epsilon_margin > 0, 'epsilon_margin must be > 0'),
            (int(self.cmd_K) >= 2, 'cmd_K must be >= 2'),
            (int(self.latent_d) >= 1, 'latent_d must be >= 1'),
            (self.hidden_h is None or int(self.hidden_h) >= 1, 'hidden_h must be >= 1'),
            (self.task in TASKS, f'task must be one of {TASKS}'),
            (self.fusion in FUSION_VARIANTS, f'fusion must be one of {FUSION_VARIANTS}'),
            (0 < self.val_fraction < 1, 'val_fraction must be in (0, 1)'),
            (self.cmd_epsilon > 0, 'cmd_epsilon must be > 0'),
        )
        for ok, msg in checks:
            if not ok:
                raise InvalidArgumentError(f'TrainConfig: {msg}')
        unknown = set(self.toggles) - set(TOGGLEABLE_TERMS)
        if unknown:
            raise InvalidArgumentError(
                f'TrainConfig: unknown loss toggles {sorted(unknown)}, '
                f'expected some of {TOGGLEABLE_TERMS}')
        if not all(isinstance(v, bool) for v in self.toggles.values()):
            raise InvalidArgumentError('TrainConfig: loss toggles must be true or false')
        return self

    @property
    def toggles(self):
        return dict(self.loss_toggles or {})

    @property
    def hidden_width(self):
        return int(self.hidden_h or 2 * self.latent_d)

    @property
    def disabled(self):
        return tuple(term for term in TOGGLEABLE_TERMS if not self.enabled(term))

    def enabled(self, term):
        return term == 'task' or self.toggles.get(term, True)

    def with_disabled(self, terms):
        toggles = self.toggles
        toggles.update({term: False for term in terms})
        return self._replace(loss_toggles=toggles).validate()

    @property
    def cmd_config(self):
        return CmdConfig(self.cmd_K, self.cmd_epsilon)

    def to_text(self):
        return format_key_values(self)

    @classmethod
    def from_file(cls, filename):
        values = read_key_values(filename, cls._fields)
        try:
            return cls(**values).validate()
        except (InvalidArgumentError, TypeError) as exc:
            raise ConfigError(f'{filename}: {exc}')


class AdamMoments(collections.namedtuple('AdamMoments', 'm v t')):
    """First and second moment estimates by parameter name, and the step count"""

    @classmethod
    def zeros(cls, params):
        return cls({name: np.zeros_like(value, dtype=np.float64)
                    for name, value in params.items()},
                   {name: np.zeros_like(value, dtype=np.float64)
                    for name, value in params.items()},
                   0)

    def copy(self):
        return AdamMoments({k: v.copy() for k, v in self.m.items()},
                           {k: v.copy() for k, v in self.v.items()},
                           self.t)


def adam_step(params, grads, moments, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=None):
    """One bias corrected Adam update

    :param params: dict of name to array
    :param grads: dict of name to array, same names and shapes as params
    :param moments: AdamMoments from the previous step
    :param t: step number, defaults to one past the moments' step
    :return: (new params, new AdamMoments), the inputs are not modified
    """
    t = moments.t + 1 if t is None else int(t)
    if t < 1:
        raise InvalidArgumentError(f'Adam step number must be >= 1, got {t}')
    missing = set(params) - set(grads)
    if missing:
        raise InvalidArgumentError(f'No gradient for {sorted(missing)}')

    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        g = np.asarray(grads[name], dtype=np.float64)
        m = moments.m.get(name, np.zeros_like(value))
        v = moments.v.get(name, np.zeros_like(value))
        if not g.shape == m.shape == v.shape == value.shape:
            raise InvalidArgumentError(
                f'adam_step: {name} is {value.shape}, gradient {g.shape}, '
                f'moments {m.shape}/{v.shape}')
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_params[name] = value - lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamMoments(new_m, new_v, t)


class TaskHead:
    """d -> h -> 1 predictor on the fused features"""

    prefix = 'head.task'

    def __init__(self, w1, b1, w2, b2):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def init(cls, latent_d, hidden_h, seed=0):
        rng = seeded_rng(seed, TASK_HEAD_STREAM)
        return cls(*init_affine(rng, latent_d, hidden_h), *init_affine(rng, hidden_h, 1))

    def named(self):
        return {f'{self.prefix}.{name}': getattr(self, name)
                for name in ('w1', 'b1', 'w2', 'b2')}

    def __call__(self, x):
        return affine(tanh(affine(x, self.w1, self.b1)), self.w2, self.b2)


Forward = collections.namedtuple('Forward', 'bundles fusion recon_self recon_cross pred')


class Model:
    """Every parameterized part of one configuration, wired together

    The ``concat`` fusion has no disentanglement at all, ``mlp`` replaces
    the attention by a dense layer, ``iaf`` is the full model.
    """

    def __init__(self, config, input_widths, target_stats=(0.0, 1.0)):
        self.config = config.validate()
        self.input_widths = {m: int(input_widths[m]) for m in MODALITIES}
        self.target_stats = tuple(float(v) for v in target_stats)
        self.log = pydisent_logger

        d, h, seed = config.latent_d, config.hidden_width, config.seed
        d_v, d_a = self.input_widths['v'], self.input_widths['a']
        self.drd = self.contri_head = self.untask_head = None
        if config.fusion == 'concat':
            self.fusion = MlpFusion.init(d_v + d_a, d, seed=seed, source='raw')
        else:
            self.drd = DrdParams.init(d_v, d_a, d, hidden_h=h, seed=seed)
            self.contri_head = ContributionHead.init(d, seed=seed)
            self.untask_head = UntaskHead.init(d, seed=seed)
            if config.fusion == 'iaf':
                self.fusion = IafParams.init(d, seed=seed)
            else:
                self.fusion = MlpFusion.init(4 * d, d, seed=seed)
        self.task_head = TaskHead.init(d, h, seed=seed)

    def __getstate__(self):
        state = dict(self.__dict__)
        state['log'] = None
        return state

    def __setstate__(self, d):
        self.__dict__.update(d)
        self.log = pydisent_logger

    @property
    def has_drd(self):
        return self.drd is not None

    def named(self):
        named = {}
        parts = (self.drd, self.fusion, self.contri_head, self.untask_head, self.task_head)
        for part in parts:
            if part is not None:
                named.update(part.named())
        return named

    def state(self):
        return {name: p.data.copy() for name, p in self.named().items()}

    def assign(self, values):
        """Overwrite the parameter values in place, tensors keep their identity"""
        named = self.named()
        if set(values) != set(named):
            raise InvalidArgumentError(
                f'Parameter names differ: {sorted(set(values) ^ set(named))}')
        for name, tensor in named.items():
            value = np.array(values[name], dtype=np.float64)
            if value.shape != tensor.data.shape:
                raise InvalidArgumentError(
                    f'{name} is {tensor.data.shape}, assigned {value.shape}')
            tensor.data = value

    def check_widths(self, widths):
        if {m: widths[m] for m in MODALITIES} != self.input_widths:
            raise InvalidArgumentError(
                f'Data widths {dict(widths)} do not match the model {self.input_widths}')

    def standardize(self, y_reg):
        mean, std = self.target_stats
        return (np.asarray(y_reg, dtype=np.float64) - mean) / std

    def forward(self, batches, reconstruct=False):
        if self.drd is None:
            fusion = self.fusion([batches[m] for m in MODALITIES])
            return Forward(None, fusion, None, None, self.task_head(fusion.F_S))

        bundles = {m: encode(batches[m], self.drd) for m in MODALITIES}
        recon_self = recon_cross = None
        if reconstruct:
            recon_self = {m: decode_self(bundles[m], self.drd, m) for m in MODALITIES}
            recon_cross = {
                'v': decode_cross(bundles['v'], bundles['a'].F_c, self.drd, 'v'),
                'a': decode_cross(bundles['a'], bundles['v'].F_c, self.drd, 'a'),
            }
        if self.config.fusion == 'iaf':
            fusion = fuse(bundles, self.fusion)
        else:
            fusion = self.fusion(bundles)
        return Forward(bundles, fusion, recon_self, recon_cross, self.task_head(fusion.F_S))

    def losses(self, batches, labels):
        """LossBreakdown of 1x1 Tensor2, disabled terms are constant zeros"""
        return self.losses_and_bundles(batches, labels)[0]

    def losses_and_bundles(self, batches, labels):
        """(LossBreakdown, per modality DisentangledBundle or None for concat)"""
        cfg = self.config
        terms = dict.fromkeys(LOSS_NAMES, Tensor2.zeros(1, 1))
        y_aux = labels.y_aux
        fwd = self.forward(batches, reconstruct=cfg.enabled('recon'))

        if cfg.task == 'regression':
            terms['task'] = task_loss(fwd.pred, self.standardize(labels.y_reg))
        else:
            terms['task'] = bce(sigmoid(fwd.pred), y_aux)

        if fwd.bundles is not None:
            bundles = fwd.bundles
            if cfg.enabled('untask'):
                terms['untask'] = untask_loss(self.untask_head.score(bundles), y_aux)
            if cfg.enabled('orth'):
                terms['orth'] = orthogonality_loss(bundles['v'], bundles['a'])
            if cfg.enabled('cmd'):
                terms['cmd'] = cmd_loss(bundles['v'].F_c, bundles['a'].F_c, cfg.cmd_config)
            if cfg.enabled('recon'):
                terms['recon'] = reconstruction_loss(batches, fwd.recon_self, fwd.recon_cross)

            w_attn = fwd.fusion.W_attn
            use_align = cfg.enabled('align') and w_attn is not None
            if cfg.enabled('contri') or use_align:
                contri, per_feature = contribution_loss(
                    self.contri_head.score(bundles), y_aux)
                if cfg.enabled('contri'):
                    terms['contri'] = contri
                if use_align:
                    terms['align'] = alignment_loss(
                        w_attn, [loss.item() for loss in per_feature], cfg.epsilon_margin)

        return total_loss(terms, cfg.alpha, cfg.beta), fwd.bundles

    def untask_fit(self, bundles, y_aux):
        """BCE of the untask head against the true y_aux on detached features

        The head is trained on this, the encoders only see the reversed label
        term through it.
        """
        detached = {m: DisentangledBundle(*(t.detach() for t in bundles[m]))
                    for m in MODALITIES}
        return bce(self.untask_head.score(detached), check_binary(y_aux, 'y_aux'))

    def predict(self, batches):
        """Scores in label units, or probabilities in classification mode"""
        pred = self.forward(batches).pred.data.reshape(-1)
        if self.config.task == 'classification':
            return 0.5 * (1.0 + np.tanh(0.5 * pred))
        mean, std = self.target_stats
        return pred * std + mean

    @classmethod
    def from_checkpoint(cls, checkpoint):
        model = cls(checkpoint.config, checkpoint.input_widths, checkpoint.target_stats)
        model.assign(checkpoint.params)
        return model


def target_stats(labels):
    y = labels.y_reg
    std = float(np.std(y))
    return float(np.mean(y)), (std if std > 0 else 1.0)


def _array_to_text(value):
    value = np.asarray(value, dtype=np.float64)
    return dict(shape=list(value.shape), data=[float(v).hex() for v in value.reshape(-1)])


def _array_from_text(data):
    return np.array([float.fromhex(v) for v in data['data']],
                    dtype=np.float64).reshape(tuple(data['shape']))


def _hex_or_none(value):
    return None if value is None else float(value).hex()


def _from_hex_or_none(value):
    return None if value is None else float.fromhex(value)


class Checkpoint(collections.namedtuple('Checkpoint', (
        'config', 'input_widths', 'params', 'moments', 'epoch', 'best_val',
        'bad_epochs', 'target_stats', 'data_digest'))):
    """Everything needed to evaluate a model or to continue training it"""

    save_file_extensions = ('pkl', 'pickle', 'yml', 'yaml', 'json')

    @classmethod
    def _filename_has_extension(cls, filename):
        return next((extension for extension in cls.save_file_extensions
                     if filename.endswith('.' + extension)), None)

    def hash_matches(self, dirname):
        return self.data_digest == dir_data_digest(dirname)

    def _to_text_dict(self):
        config = self.config._asdict()
        config['loss_toggles'] = self.config.toggles or None
        return dict(
            config=config,
            input_widths={m: int(w) for m, w in self.input_widths.items()},
            params={name: _array_to_text(v) for name, v in self.params.items()},
            moments=dict(
                t=int(self.moments.t),
                m={name: _array_to_text(v) for name, v in self.moments.m.items()},
                v={name: _array_to_text(v) for name, v in self.moments.v.items()},
            ),
            epoch=int(self.epoch),
            best_val=_hex_or_none(self.best_val),
            bad_epochs=int(self.bad_epochs),
            target_stats=[float(v).hex() for v in self.target_stats],
            data_digest=self.data_digest,
        )

    @classmethod
    def _from_text_dict(cls, data):
        config = dict(data['config'])
        if config.get('loss_toggles') is not None:
            config['loss_toggles'] = dict(config['loss_toggles'])
        moments = data['moments']
        return cls(
            config=TrainConfig(**config).validate(),
            input_widths=dict(data['input_widths']),
            params={name: _array_from_text(v) for name, v in data['params'].items()},
            moments=AdamMoments(
                {name: _array_from_text(v) for name, v in moments['m'].items()},
                {name: _array_from_text(v) for name, v in moments['v'].items()},
                int(moments['t'])),
            epoch=int(data['epoch']),
            best_val=_from_hex_or_none(data['best_val']),
            bad_epochs=int(data['bad_epochs']),
            target_stats=tuple(float.fromhex(v) for v in data['target_stats']),
            data_digest=data['data_digest'],
        )

    def to_file(self, filename):
        """ Save the checkpoint, the extension picks the format

        :param filename: path ending in one of pkl, pickle, yml, yaml, json

        The text formats store every float as ``float.hex()`` so that a
        reloaded checkpoint continues training bit for bit.
        """
        extension = self._filename_has_extension(filename)
        if extension is None:
            raise InvalidArgumentError(
                f"Unknown checkpoint file type: '{filename}', "
                f"expected one of {self.save_file_extensions}")

        dirname = os.path.dirname(filename)
        if dirname:
            os.makedirs(dirname, exist_ok=True)

        if extension[0] == 'p':
            with open(filename, 'wb') as f:
                pickle.dump(self, f)
        elif extension == 'json':
            with open(filename, 'w') as f:
                json.dump(self._to_text_dict(), f, indent=1)
        else:
            with open(filename, 'w') as f:
                ymlo = YAML()
                ymlo.width = 120
                ymlo.dump(self._to_text_dict(), f)
        pydisent_logger.info(f'checkpoint for epoch {self.epoch} written to {filename}')

    @classmethod
    def from_file(cls, filename):
        extension = cls._filename_has_extension(filename)
        if extension is None:
            raise InvalidArgumentError(f"Unrecognized checkpoint file type: '{filename}'")

        if extension[0] == 'p':
            with open(filename, 'rb') as f:
                return pickle.load(f)
        with open(filename, 'r') as f:
            data = json.load(f) if extension == 'json' else YAML(typ='safe').load(f)
        return cls._from_text_dict(data)


EpochRecord = collections.namedtuple('EpochRecord', 'epoch train val val_mae')


class TrainingLog:
    """Per epoch loss breakdowns of a training run"""

    def __init__(self, records=()):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def __eq__(self, other):
        return isinstance(other, TrainingLog) and self.records == other.records

    def append(self, record):
        self.records.append(record)

    @property
    def header(self):
        return (('epoch', ) + tuple(f'train_{n}' for n in LossBreakdown._fields) +
                tuple(f'val_{n}' for n in LossBreakdown._fields) + ('val_mae', ))

    def rows(self):
        return [(r.epoch, *r.train, *r.val, r.val_mae) for r in self.records]

    def to_csv(self, filename):
        write_table(filename, self.header, self.rows())


def _mean_breakdown(parts):
    return LossBreakdown(*(float(v) for v in np.mean(np.array(parts), axis=0)))


class Trainer:
    """Mini batch Adam over the total objective with early stopping

    The epoch shuffle is drawn from (seed, epoch), so a trainer restored from
    a checkpoint continues exactly as the original would have.
    """

    def __init__(self, model, train_set, val_set, data_digest=None):
        self.model = model
        self.config = model.config
        self.train_set = train_set
        self.val_set = val_set
        self.data_digest = data_digest
        self.log = pydisent_logger

        if train_set.size < self.config.batch_size:
            raise InvalidArgumentError(
                f'{train_set.size} training samples do not fill a batch of '
                f'{self.config.batch_size}')
        if val_set.size < 2:
            raise InvalidArgumentError(
                f'Validation needs at least 2 samples, got {val_set.size}')
        model.check_widths(train_set.widths)
        model.check_widths(val_set.widths)

        self.moments = AdamMoments.zeros(model.state())
        self.epoch = 0
        self.best_val = None
        self.bad_epochs = 0
        self.best_checkpoint = None
        self.history = TrainingLog()

    @classmethod
    def from_checkpoint(cls, checkpoint, train_set, val_set, data_digest=None):
        trainer = cls(Model.from_checkpoint(checkpoint), train_set, val_set,
                      data_digest=data_digest or checkpoint.data_digest)
        trainer.moments = checkpoint.moments.copy()
        trainer.epoch = checkpoint.epoch
        trainer.best_val = checkpoint.best_val
        trainer.bad_epochs = checkpoint.bad_epochs
        if checkpoint.best_val is not None:
            trainer.best_checkpoint = checkpoint
        return trainer

    def checkpoint(self):
        return Checkpoint(
            config=self.config,
            input_widths=dict(self.model.input_widths),
            params=self.model.state(),
            moments=self.moments.copy(),
            epoch=self.epoch,
            best_val=self.best_val,
            bad_epochs=self.bad_epochs,
            target_stats=self.model.target_stats,
            data_digest=self.data_digest,
        )

    def step(self, indices):
        """One Adam update on the training samples at `indices`"""
        named = self.model.named()
        for tensor in named.values():
            tensor.grad = None

        labels = self.train_set.labels.subset(indices)
        with GradTape() as tape:
            parts, bundles = self.model.losses_and_bundles(
                self.train_set.batches(indices), labels)
        total = parts.total.item()
        if not np.isfinite(total):
            raise EvaluationError(f'epoch {self.epoch}: total loss evaluated to {total}')
        tape.backward(parts.total)
        self.log.debug(f'step: tape of {len(tape)} nodes, total {total:.6g}')

        grads = {name: tape.gradient(tensor) for name, tensor in named.items()}
        grads.update(self.untask_head_gradients(bundles, labels.y_aux))
        values = {name: tensor.data for name, tensor in named.items()}
        new_values, self.moments = adam_step(
            values, grads, self.moments, self.config.learning_rate)
        self.model.assign(new_values)
        return breakdown_to_floats(parts)

    def untask_head_gradients(self, bundles, y_aux):
        """Gradients which replace those of the untask head in a step"""
        if bundles is None or not self.config.enabled('untask'):
            return {}
        head = self.model.untask_head.named()
        with GradTape() as tape:
            fit = self.model.untask_fit(bundles, y_aux)
        tape.backward(fit)
        return {name: tape.gradient(tensor) for name, tensor in head.items()}

    def run_epoch(self):
        """Train on one seeded shuffle of the training set, mean breakdown"""
        self.epoch += 1
        n = self.train_set.size
        order = seeded_rng(self.config.seed, EPOCH_STREAM, self.epoch).permutation(n)
        n_batches = max(1, n // self.config.batch_size)
        parts = [self.step(np.sort(chunk)) for chunk in np.array_split(order, n_batches)]
        return _mean_breakdown(parts)

    def validate(self):
        """(LossBreakdown of floats, MetricsReport) on the validation set"""
        batches = self.val_set.batches()
        parts = breakdown_to_floats(self.model.losses(batches, self.val_set.labels))
        return parts, _report(self.model, self.val_set, batches)

    def _improved(self, val_total):
        if self.best_val is None or val_total < self.best_val:
            self.best_val = val_total
            self.bad_epochs = 0
            self.best_checkpoint = self.checkpoint()
            return True
        self.bad_epochs += 1
        return False

    def fit(self):
        """Train until max_epochs or patience runs out

        :return: (best validation Checkpoint, TrainingLog)
        """
        cfg = self.config
        if self.best_checkpoint is None:
            val_parts, report = self.validate()
            self._improved(val_parts.total)
            self.log.info(f'initial model: val total {val_parts.total:.6g}, '
                          f'val mae {report.mae:.6g}')

        while self.epoch < cfg.max_epochs and self.bad_epochs < cfg.patience:
            train_parts = self.run_epoch()
            val_parts, report = self.validate()
            self.history.append(EpochRecord(self.epoch, train_parts, val_parts, report.mae))
            improved = self._improved(val_parts.total)
            self.log.info(
                f'epoch {self.epoch}: train total {train_parts.total:.6g}, '
                f'val total {val_parts.total:.6g}, val mae {report.mae:.6g}'
                f'{" *" if improved else ""}')
            self.log.debug(f'epoch {self.epoch}: train {train_parts}')

        if self.bad_epochs >= cfg.patience:
            self.log.info(f'early stop at epoch {self.epoch}, best val total '
                          f'{self.best_val:.6g} at epoch {self.best_checkpoint.epoch}')
        return self.best_checkpoint, self.history


def _report(model, dataset, batches=None):
    if dataset.size == 0:
        raise InvalidArgumentError('Cannot evaluate an empty dataset')
    predictions = model.predict(batches or dataset.batches())
    if model.config.task == 'classification':
        return classification_report(dataset.labels.y_aux, predictions)
    return regression_report(dataset.labels.y_reg, predictions)


def train(dataset, config, val_set=None, data_digest=None):
    """Train one model

    :param dataset: training data, split 80/20 by seeded shuffle when no
        `val_set` is given
    :param config: TrainConfig
    :param data_digest: md5 of the data files, recorded in the checkpoint
    :return: (best validation Checkpoint, TrainingLog)
    """
    config = config.validate()
    if val_set is None:
        if dataset.size < 2:
            raise InvalidArgumentError(f'Cannot split a dataset of {dataset.size} samples')
        dataset, val_set = dataset.split(config.val_fraction, config.seed)
    if dataset.size < config.batch_size:
        raise InvalidArgumentError(
            f'{dataset.size} training samples do not fill a batch of {config.batch_size}')

    model = Model(config, dataset.widths, target_stats(dataset.labels))
    pydisent_logger.info(
        f'training {len(model.named())} parameter tensors on {dataset.size} samples, '
        f'validating on {val_set.size}, disabled terms: {config.disabled or "none"}')
    return Trainer(model, dataset, val_set, data_digest=data_digest).fit()


def evaluate(checkpoint, dataset, data_digest=None):
    """MetricsReport of the checkpoint's model on `dataset`"""
    if dataset.size == 0:
        raise InvalidArgumentError('Cannot evaluate an empty dataset')
    if data_digest is not None and checkpoint.data_digest is not None and \
            data_digest != checkpoint.data_digest:
        pydisent_logger.warning(
            'evaluating on data which differs from the data the checkpoint was trained on')
    model = Model.from_checkpoint(checkpoint)
    model.check_widths(dataset.widths)
    return _report(model, dataset)


AblationRow = collections.namedtuple('AblationRow', 'name disabled fusion report best_val')

ABLATION_HEADER = ('name', 'disabled', 'fusion', 'mae', 'rmse', 'accuracy', 'macro_f1',
                   'val_total')


def default_toggle_sets():
    """Full objective, then each toggleable term removed on its own"""
    return [()] + [(term, ) for term in TOGGLEABLE_TERMS]


def ablate(dataset, base_config, toggle_sets=None, mode='losses', val_set=None):
    """Train one model per variant under the same seed and split

    :param mode: ``losses`` trains one model per toggle set (terms switched
        off), ``components`` one per fusion variant: concat, mlp, iaf
    :return: list of AblationRow
    """
    base_config = base_config.validate()
    if val_set is None:
        dataset, val_set = dataset.split(base_config.val_fraction, base_config.seed)

    if mode == 'losses':
        toggle_sets = default_toggle_sets() if toggle_sets is None else toggle_sets
        variants = []
        for terms in toggle_sets:
            terms = tuple(terms)
            name = 'full' if not terms else 'w/o ' + '+'.join(terms)
            variants.append((name, base_config.with_disabled(terms)))
    elif mode == 'components':
        variants = [(fusion, base_config._replace(fusion=fusion))
                    for fusion in ('concat', 'mlp', 'iaf')]
    else:
        raise InvalidArgumentError(f"ablate mode must be 'losses' or 'components': {mode}")

    rows = []
    for name, config in variants:
        pydisent_logger.info(f'ablation: {name}')
        checkpoint, _ = train(dataset, config, val_set=val_set)
        rows.append(AblationRow(name, config.disabled, config.fusion,
                                evaluate(checkpoint, val_set), checkpoint.best_val))
    return rows


def ablation_table(rows):
    return ABLATION_HEADER, [
        (row.name, ' '.join(row.disabled), row.fusion, row.report.mae, row.report.rmse,
         row.report.accuracy, row.report.macro_f1, row.best_val)
        for row in rows]


def probe_accuracy(features, labels, seed=0, epochs=300, learning_rate=0.05,
                   test_fraction=0.2):
    """Held out accuracy of a logistic regression classifier

    Trained full batch with Adam on standardized features over a seeded
    split, it measures how much label information `features` carry.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = check_binary(labels)
    n = len(y)
    if x.shape[0] != n:
        raise InvalidArgumentError(f'{x.shape[0]} feature rows for {n} labels')
    n_test = int(round(n * test_fraction))
    if not 0 < n_test < n:
        raise InvalidArgumentError(f'Cannot hold out {test_fraction} of {n} samples')

    order = seeded_rng(seed, PROBE_STREAM).permutation(n)
    test, fit = order[:n_test], order[n_test:]
    mean, std = x[fit].mean(axis=0), x[fit].std(axis=0)
    std[std == 0] = 1.0
    x_fit, x_test = Tensor2((x[fit] - mean) / std), Tensor2((x[test] - mean) / std)

    w = Tensor2.zeros(x.shape[1], 1, requires_grad=True)
    b = Tensor2.zeros(1, 1, requires_grad=True)
    moments = AdamMoments.zeros({'w': w.data, 'b': b.data})
    for _ in range(int(epochs)):
        with GradTape() as tape:
            loss = bce(sigmoid(affine(x_fit, w, b)), y[fit])
        tape.backward(loss)
        values, moments = adam_step(
            {'w': w.data, 'b': b.data}, {'w': w.grad, 'b': b.grad}, moments, learning_rate)
        w.data, b.data = values['w'], values['b']

    probs = sigmoid(affine(x_test, w, b)).data
    return accuracy(y[test], threshold(probs))


EMBEDDING_NAMES = ('F_c_v', 'F_c_a', 'F_s_v', 'F_s_a', 'N_c_v', 'N_c_a', 'N_s_v', 'N_s_a',
                   'F_S')


def embeddings(checkpoint, dataset):
    """Per sample disentangled and fused features, name -> N x d array"""
    model = Model.from_checkpoint(checkpoint)
    model.check_widths(dataset.widths)
    if not model.has_drd:
        raise InvalidArgumentError("The 'concat' variant has no disentangled features")
    fwd = model.forward(dataset.batches())
    bundles = fwd.bundles
    tensors = (bundles['v'].F_c, bundles['a'].F_c, bundles['v'].F_s, bundles['a'].F_s,
               *stack_unrelated(bundles), fwd.fusion.F_S)
    return {name: t.numpy() for name, t in zip(EMBEDDING_NAMES, tensors)}


def attention_weights(checkpoint, dataset):
    """N x 4 attention weights over STACK_ORDER"""
    model = Model.from_checkpoint(checkpoint)
    model.check_widths(dataset.widths)
    if model.config.fusion != 'iaf':
        raise InvalidArgumentError(
            f"The '{model.config.fusion}' variant has no attention weights")
    return model.forward(dataset.batches()).fusion.W_attn.numpy()


def attention_table(checkpoint, dataset):
    weights = attention_weights(checkpoint, dataset)
    header = ('sample_id', ) + tuple(f'w_{name}' for name in STACK_ORDER)
    return header, [(sid, *row) for sid, row in zip(dataset.sample_ids, weights)]


def embedding_table(checkpoint, dataset):
    features = embeddings(checkpoint, dataset)
    header = ['sample_id']
    for name, values in features.items():
        header.extend(f'{name}_{i}' for i in range(values.shape[1]))
    blocks = np.hstack(list(features.values()))
    return tuple(header), [(sid, *row) for sid, row in zip(dataset.sample_ids, blocks)]


def report_table(report):
    row = report.as_row()
    return tuple(row), [tuple(row.values())]

