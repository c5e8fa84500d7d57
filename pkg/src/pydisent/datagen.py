# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Two modality datasets: planted factor synthesis, feature file I/O and the
segment level mutual information diagnostic.

Feature file, one per modality::

    MMFEAT v1 modality=<v|a> samples=<N> segments=<L> dim=<d>
    <d reals>            N * L lines, sample major then segment major

Labels file::

    MMLAB v1 samples=<N>
    <sample_id> <y_reg> <y_aux>
"""
import collections
import logging
import os
import re

import numpy as np

from pydisent.diffutil import (
    check_binary,
    ConfigError,
    FeatureParseError,
    file_md5_digest,
    format_key_values,
    InvalidArgumentError,
    MODALITIES,
    read_key_values,
    seeded_rng,
)
from pydisent.drd import FeatureBatch

AUX_THRESHOLD = 14.0
SCORE_RANGE = (0.0, 63.0)

MIX_STREAM = 0
SAMPLE_STREAM = 1
LABEL_STREAM = 2
SPLIT_STREAM = 3

FEATURE_FILES = {'v': 'features_v.txt', 'a': 'features_a.txt'}
LABELS_FILE = 'labels.txt'

FEATURE_HEADER_RE = re.compile(
    r'^MMFEAT v1 modality=(?P<modality>\S+) samples=(?P<samples>\d+) '
    r'segments=(?P<segments>\d+) dim=(?P<dim>\d+)$')
LABELS_HEADER_RE = re.compile(r'^MMLAB v1 samples=(?P<samples>\d+)$')

pydisent_logger = logging.getLogger('pydisent')


class SyntheticSpec(collections.namedtuple('SyntheticSpec', (
        'n_samples', 'd_common', 'd_specific', 'd_nuisance', 'd_v', 'd_a', 'L',
        'noise_std', 'seed', 'label_weights', 'label_offset', 'label_scale',
        'segment_jitter', 'independent_modalities'),
        defaults=(2000, 4, 2, 4, 32, 32, 8, 0.1, 0, None, AUX_THRESHOLD, 6.0, 0.1, False))):
    """Planted latent factors and how they are mixed into two modalities

    ``label_weights`` runs over [z_c; z_s^v; z_s^a]; None draws a seeded
    unit norm vector.  Nuisance latents never enter the score.
    """

    @property
    def n_label_latents(self):
        return self.d_common + 2 * self.d_specific

    @property
    def widths(self):
        return dict(v=self.d_v, a=self.d_a)

    def validate(self):
        counts = dict(n_samples=self.n_samples, L=self.L, d_common=self.d_common)
        for name, value in counts.items():
            if int(value) < 1:
                raise InvalidArgumentError(f'SyntheticSpec.{name} must be >= 1, got {value}')
        if min(self.d_specific, self.d_nuisance) < 0:
            raise InvalidArgumentError('SyntheticSpec latent widths must be >= 0')
        latent = self.d_common + self.d_specific + self.d_nuisance
        for modality, width in self.widths.items():
            if width < latent:
                raise InvalidArgumentError(
                    f'd_{modality}={width} is narrower than the {latent} latents it mixes')
        if self.noise_std < 0 or self.segment_jitter < 0:
            raise InvalidArgumentError('noise_std and segment_jitter must be >= 0')
        if self.label_weights is not None and \
                len(self.label_weights) != self.n_label_latents:
            raise InvalidArgumentError(
                f'label_weights needs {self.n_label_latents} entries, '
                f'got {len(self.label_weights)}')
        return self

    def to_text(self):
        return format_key_values(self)

    @classmethod
    def from_file(cls, filename):
        values = read_key_values(filename, cls._fields)
        try:
            return cls(**values).validate()
        except InvalidArgumentError as exc:
            raise ConfigError(f'{filename}: {exc}')


class SampleLabels(collections.namedtuple('SampleLabels', 'y_reg y_aux')):
    """Per sample scores and binary auxiliary labels, as arrays"""

    def __new__(cls, y_reg, y_aux):
        y_reg = np.asarray(y_reg, dtype=np.float64).reshape(-1)
        y_aux = check_binary(y_aux, 'y_aux')
        if len(y_reg) != len(y_aux):
            raise InvalidArgumentError(f'{len(y_reg)} scores for {len(y_aux)} labels')
        if not np.all(np.isfinite(y_reg)):
            raise InvalidArgumentError('y_reg must be finite')
        return super().__new__(cls, y_reg, y_aux)

    @classmethod
    def from_scores(cls, y_reg):
        y_reg = np.asarray(y_reg, dtype=np.float64).reshape(-1)
        return cls(y_reg, [derive_aux_label(y) for y in y_reg])

    @property
    def size(self):
        return len(self.y_reg)

    def subset(self, indices):
        return SampleLabels(self.y_reg[indices], self.y_aux[indices])


def derive_aux_label(y_reg):
    """1 for scores at or above the mild threshold of 14, else 0"""
    if not np.isfinite(y_reg):
        raise InvalidArgumentError(f'y_reg must be finite, got {y_reg}')
    return 1 if y_reg >= AUX_THRESHOLD else 0


class Dataset(collections.namedtuple(
        'Dataset', 'segments labels sample_ids latents', defaults=(None, ))):
    """Per modality [N x L x d_m] segment features with their labels

    ``latents`` holds the planted factors of generated data, None otherwise.
    """

    def __new__(cls, segments, labels, sample_ids=None, latents=None):
        segments = {m: np.asarray(segments[m], dtype=np.float64) for m in MODALITIES}
        shapes = {m: s.shape for m, s in segments.items()}
        if any(len(shape) != 3 for shape in shapes.values()):
            raise InvalidArgumentError(f'Segments must be N x L x d: {shapes}')
        n, L = shapes['v'][:2]
        if shapes['a'][:2] != (n, L):
            raise InvalidArgumentError(f'Modalities disagree on N x L: {shapes}')
        if labels.size != n:
            raise InvalidArgumentError(f'{labels.size} labels for {n} samples')
        if sample_ids is None:
            sample_ids = tuple(f's{i:05d}' for i in range(n))
        sample_ids = tuple(str(s) for s in sample_ids)
        if len(sample_ids) != n:
            raise InvalidArgumentError(f'{len(sample_ids)} sample ids for {n} samples')
        return super().__new__(cls, segments, labels, sample_ids, latents)

    @property
    def size(self):
        return len(self.sample_ids)

    @property
    def n_segments(self):
        return self.segments['v'].shape[1]

    @property
    def widths(self):
        return {m: s.shape[2] for m, s in self.segments.items()}

    def pooled(self, modality):
        """Mean over the segments, N x d_m"""
        return self.segments[modality].mean(axis=1)

    def batch(self, modality, indices=None):
        features = self.pooled(modality)
        if indices is not None:
            features = features[indices]
        return FeatureBatch(modality, features, self.n_segments)

    def batches(self, indices=None):
        return {m: self.batch(m, indices) for m in MODALITIES}

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        latents = (None if self.latents is None else
                   {k: v[indices] for k, v in self.latents.items()})
        return Dataset(
            {m: s[indices] for m, s in self.segments.items()},
            self.labels.subset(indices),
            tuple(self.sample_ids[i] for i in indices),
            latents)

    def split(self, fraction=0.2, seed=0):
        """Seeded shuffle into (train, held out) with `fraction` held out"""
        if not 0 < fraction < 1:
            raise InvalidArgumentError(f'Split fraction must be in (0, 1), got {fraction}')
        n = self.size
        n_held = int(round(n * fraction))
        if not 0 < n_held < n:
            raise InvalidArgumentError(f'Cannot hold out {fraction} of {n} samples')
        order = seeded_rng(seed, SPLIT_STREAM).permutation(n)
        return self.subset(np.sort(order[n_held:])), self.subset(np.sort(order[:n_held]))


def _orthonormal_mixing(rng, width, n_latent):
    """width x n_latent with orthonormal columns, full column rank"""
    if n_latent == 0:
        return np.zeros((width, 0))
    q, r = np.linalg.qr(rng.standard_normal((width, n_latent)))
    return q * np.sign(np.diag(r))


def default_label_weights(spec):
    w = seeded_rng(spec.seed, LABEL_STREAM).standard_normal(spec.n_label_latents)
    return w / np.linalg.norm(w)


def generate(spec):
    """Draw a dataset from the planted factor model of `spec`

    Every sample uses its own generator derived from (seed, index), so the
    result does not depend on how samples are scheduled.
    """
    spec = spec.validate()
    d_c, d_s, d_n, L = spec.d_common, spec.d_specific, spec.d_nuisance, spec.L
    n_latent = d_c + d_s + d_n

    mix_rng = seeded_rng(spec.seed, MIX_STREAM)
    mixing = {m: _orthonormal_mixing(mix_rng, spec.widths[m], n_latent) for m in MODALITIES}

    weights = (default_label_weights(spec) if spec.label_weights is None
               else np.asarray(spec.label_weights, dtype=np.float64))

    segments = {m: np.empty((spec.n_samples, L, spec.widths[m])) for m in MODALITIES}
    latent_names = ('z_c', 'z_s_v', 'z_s_a', 'z_n_v', 'z_n_a')
    latent_widths = (d_c, d_s, d_s, d_n, d_n)
    latents = {name: np.empty((spec.n_samples, w))
               for name, w in zip(latent_names, latent_widths)}
    y_reg = np.empty(spec.n_samples)

    for i in range(spec.n_samples):
        rng = seeded_rng(spec.seed, SAMPLE_STREAM, i)
        z = {name: rng.standard_normal(w) for name, w in zip(latent_names, latent_widths)}
        z_c_other = rng.standard_normal(d_c) if spec.independent_modalities else z['z_c']
        common_jitter = rng.standard_normal((L, d_c))
        for name in latent_names:
            latents[name][i] = z[name]

        for m in MODALITIES:
            z_c = z['z_c'] if m == 'v' else z_c_other
            if spec.independent_modalities and m == 'a':
                c_jitter = rng.standard_normal((L, d_c))
            else:
                c_jitter = common_jitter
            per_segment = np.hstack((
                z_c + spec.segment_jitter * c_jitter,
                z[f'z_s_{m}'] + spec.segment_jitter * rng.standard_normal((L, d_s)),
                z[f'z_n_{m}'] + spec.segment_jitter * rng.standard_normal((L, d_n)),
            ))
            noise = rng.standard_normal((L, spec.widths[m]))
            segments[m][i] = per_segment @ mixing[m].T + spec.noise_std * noise

        related = np.concatenate((z['z_c'], z['z_s_v'], z['z_s_a']))
        y_reg[i] = np.clip(spec.label_offset + spec.label_scale * (weights @ related),
                           *SCORE_RANGE)

    pydisent_logger.info(
        f'generated {spec.n_samples} samples, L={L}, d_v={spec.d_v}, d_a={spec.d_a}')
    return Dataset(segments, SampleLabels.from_scores(y_reg), latents=latents)


def entropy_nats(counts):
    """Plug-in entropy of a histogram"""
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def _first_principal_coordinate(x):
    """Projection of the rows of x onto their first principal axis, None if constant"""
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        return None
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[0]


def _as_segment_series(f, name):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        f = f.reshape(-1, 1, 1)
    elif f.ndim == 2:
        f = f[:, np.newaxis, :]
    elif f.ndim != 3:
        raise InvalidArgumentError(f'{name} must be N x L x d, got shape {f.shape}')
    return f


def segment_mi(f_v, f_a, bins=8):
    """Histogram estimate, in nats, of the video/audio MI of every segment

    :param f_v: [N x L x d_v] features (N x d_v or N for a single segment)
    :param f_a: [N x L x d_a] features
    :param bins: equal width cells per axis, >= 2
    :return: array of L scores, each >= 0
    """
    f_v = _as_segment_series(f_v, 'f_v')
    f_a = _as_segment_series(f_a, 'f_a')
    if f_v.shape[:2] != f_a.shape[:2]:
        raise InvalidArgumentError(
            f'Segment series disagree on N x L: {f_v.shape[:2]} vs {f_a.shape[:2]}')
    if int(bins) < 2:
        raise InvalidArgumentError(f'bins must be >= 2, got {bins}')

    scores = np.zeros(f_v.shape[1])
    for segment in range(f_v.shape[1]):
        x = _first_principal_coordinate(f_v[:, segment])
        y = _first_principal_coordinate(f_a[:, segment])
        if x is None or y is None:
            pydisent_logger.warning(f'segment_mi: constant series at segment {segment}')
            continue
        joint = np.histogram2d(x, y, bins=int(bins))[0]
        mi = (entropy_nats(joint.sum(axis=1)) + entropy_nats(joint.sum(axis=0)) -
              entropy_nats(joint))
        scores[segment] = max(0.0, mi)
    return scores


def _format_rows(rows):
    return ''.join(' '.join(repr(float(v)) for v in row) + '\n' for row in rows)


def save_features(dataset, dirname):
    """Write the MMFEAT and MMLAB files of `dataset` into `dirname`"""
    os.makedirs(dirname, exist_ok=True)
    n, L = dataset.size, dataset.n_segments
    for m in MODALITIES:
        d = dataset.widths[m]
        with open(os.path.join(dirname, FEATURE_FILES[m]), 'w') as f:
            f.write(f'MMFEAT v1 modality={m} samples={n} segments={L} dim={d}\n')
            f.write(_format_rows(dataset.segments[m].reshape(n * L, d)))

    with open(os.path.join(dirname, LABELS_FILE), 'w') as f:
        f.write(f'MMLAB v1 samples={n}\n')
        for sample_id, y_reg, y_aux in zip(
                dataset.sample_ids, dataset.labels.y_reg, dataset.labels.y_aux):
            f.write(f'{sample_id} {float(y_reg)!r} {int(y_aux)}\n')
    pydisent_logger.info(f'wrote {n} samples to {dirname}')


def _read_header(f, filename, pattern, kind):
    header = f.readline()
    if not header.strip():
        raise FeatureParseError('missing header', filename, 1)
    match = pattern.match(header.strip())
    if match is None:
        raise FeatureParseError(f'malformed {kind} header: {header.strip()!r}', filename, 1)
    return match.groupdict()


def _parse_reals(line, width, filename, lineno):
    try:
        values = [float(v) for v in line.split()]
    except ValueError as exc:
        raise FeatureParseError(str(exc), filename, lineno)
    if len(values) != width:
        raise FeatureParseError(f'expected {width} values, found {len(values)}',
                                filename, lineno)
    if not all(np.isfinite(values)):
        raise FeatureParseError('non finite value', filename, lineno)
    return values


def load_features(filename, expect=None):
    """Read one MMFEAT file

    :param filename: path of the feature file
    :param expect: optional dict of header values (modality, samples,
        segments, dim) the file must match
    :return: (modality, [N x L x d] array)
    """
    with open(filename, 'r') as f:
        header = _read_header(f, filename, FEATURE_HEADER_RE, 'MMFEAT')
        modality = header['modality']
        n, L, d = (int(header[k]) for k in ('samples', 'segments', 'dim'))
        if modality not in MODALITIES:
            raise FeatureParseError(f'unknown modality {modality!r}', filename, 1)
        if min(n, L, d) < 1:
            raise FeatureParseError('samples, segments and dim must be >= 1', filename, 1)
        for key, value in (expect or {}).items():
            if str(header[key]) != str(value):
                raise FeatureParseError(
                    f'header {key}={header[key]}, expected {value}', filename, 1)

        rows = []
        lineno = 1
        for lineno, line in enumerate(f, 2):
            if not line.strip():
                continue
            if len(rows) == n * L:
                raise FeatureParseError(f'more than {n * L} data lines', filename, lineno)
            rows.append(_parse_reals(line, d, filename, lineno))
    if len(rows) != n * L:
        raise FeatureParseError(
            f'expected {n * L} data lines, found {len(rows)}', filename, lineno)
    return modality, np.array(rows, dtype=np.float64).reshape(n, L, d)


def load_labels(filename):
    """Read an MMLAB file into (sample_ids, SampleLabels)"""
    sample_ids, y_reg, y_aux = [], [], []
    with open(filename, 'r') as f:
        n = int(_read_header(f, filename, LABELS_HEADER_RE, 'MMLAB')['samples'])
        lineno = 1
        for lineno, line in enumerate(f, 2):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 3:
                raise FeatureParseError(
                    f'expected "<sample_id> <y_reg> <y_aux>", found {len(fields)} fields',
                    filename, lineno)
            score, = _parse_reals(fields[1], 1, filename, lineno)
            if fields[2] not in ('0', '1'):
                raise FeatureParseError(f'y_aux must be 0 or 1, got {fields[2]!r}',
                                        filename, lineno)
            sample_ids.append(fields[0])
            y_reg.append(score)
            y_aux.append(int(fields[2]))
    if len(sample_ids) != n:
        raise FeatureParseError(f'expected {n} labels, found {len(sample_ids)}',
                                filename, lineno)
    return tuple(sample_ids), SampleLabels(y_reg, y_aux)


def dataset_files(dirname):
    return tuple(os.path.join(dirname, name)
                 for name in (FEATURE_FILES['v'], FEATURE_FILES['a'], LABELS_FILE))


def load_dataset(dirname, task='regression'):
    """Read features_v.txt, features_a.txt and labels.txt from `dirname`

    For regression data every y_aux must follow from its score, classification
    data may carry labels of its own.
    """
    v_file, a_file, labels_file = dataset_files(dirname)
    sample_ids, labels = load_labels(labels_file)
    if task == 'regression':
        derived = (labels.y_reg >= AUX_THRESHOLD).astype(np.float64)
        bad = [sample_ids[i] for i in np.flatnonzero(derived != labels.y_aux)]
        if bad:
            raise FeatureParseError(
                f'y_aux of {bad[:5]} disagrees with y_reg >= {AUX_THRESHOLD}', labels_file)
    segments = {}
    for m, filename in (('v', v_file), ('a', a_file)):
        modality, segments[m] = load_features(
            filename, expect=dict(modality=m, samples=labels.size))
    if segments['v'].shape[1] != segments['a'].shape[1]:
        raise FeatureParseError(
            f'segment counts differ: v={segments["v"].shape[1]} a={segments["a"].shape[1]}',
            a_file, 1)
    return Dataset(segments, labels, sample_ids)


def data_digest(dirname):
    return file_md5_digest(*dataset_files(dirname))
