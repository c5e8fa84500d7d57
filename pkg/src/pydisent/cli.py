# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Command line interface, ``pydisent <subcommand>`` or ``python -m pydisent``
"""
import argparse
import logging
import sys

from pydisent.datagen import (
    data_digest,
    generate,
    load_dataset,
    save_features,
    segment_mi,
    SyntheticSpec,
)
from pydisent.diffutil import PyDisentException
from pydisent.engine import (
    ablate,
    ablation_table,
    attention_table,
    Checkpoint,
    embedding_table,
    evaluate,
    report_table,
    train,
    TrainConfig,
)
from pydisent.gradsuite import GRAD_CHECKS, run_suite
from pydisent.reports import write_table

pydisent_logger = logging.getLogger('pydisent')


def pydisent_logging_to_console(enable=True, level='INFO'):
    if enable:
        logger = logging.getLogger('pydisent')
        logger.setLevel(level)

        console = logging.StreamHandler(sys.stdout)
        console.setLevel(level)
        logger.addHandler(console)
        return console


def _train_config(filename):
    return TrainConfig().validate() if filename is None else TrainConfig.from_file(filename)


def cmd_gen(args):
    spec = SyntheticSpec().validate() if args.spec is None else SyntheticSpec.from_file(args.spec)
    dataset = generate(spec)
    save_features(dataset, args.out)
    pydisent_logger.info(f'generated {dataset.size} samples into {args.out}')
    return 0


def cmd_train(args):
    config = _train_config(args.config)
    dataset = load_dataset(args.data, task=config.task)
    checkpoint, history = train(dataset, config, data_digest=data_digest(args.data))
    checkpoint.to_file(args.out)
    if args.log:
        history.to_csv(args.log)
    return 0


def cmd_eval(args):
    checkpoint = Checkpoint.from_file(args.ckpt)
    dataset = load_dataset(args.data, task=checkpoint.config.task)
    report = evaluate(checkpoint, dataset, data_digest(args.data))
    pydisent_logger.info(f'{report.as_row()}')
    write_table(args.report, *report_table(report))
    return 0


def cmd_ablate(args):
    config = _train_config(args.config)
    rows = ablate(load_dataset(args.data, task=config.task), config, mode=args.mode)
    write_table(args.out, *ablation_table(rows))
    return 0


def cmd_gradcheck(args):
    seeds = range(args.seed, args.seed + args.seeds)
    results = run_suite(seeds=seeds, names=args.check or None)
    failed = [r for r in results if not r.passed]
    for name in dict.fromkeys(r.name for r in results):
        worst = max(r.error for r in results if r.name == name)
        pydisent_logger.info(f'{name:>8}: worst relative error {worst:.3g}')
    if failed:
        pydisent_logger.error(
            f'{len(failed)} of {len(results)} gradient checks failed: '
            f'{sorted({r.name for r in failed})}')
        return 1
    pydisent_logger.info(f'all {len(results)} gradient checks passed')
    return 0


def cmd_dump_attn(args):
    checkpoint = Checkpoint.from_file(args.ckpt)
    write_table(args.out, *attention_table(
        checkpoint, load_dataset(args.data, task=checkpoint.config.task)))
    return 0


def cmd_dump_embed(args):
    checkpoint = Checkpoint.from_file(args.ckpt)
    write_table(args.out, *embedding_table(
        checkpoint, load_dataset(args.data, task=checkpoint.config.task)))
    return 0


def cmd_analyze_mi(args):
    dataset = load_dataset(args.data)
    scores = segment_mi(dataset.segments['v'], dataset.segments['a'], bins=args.bins)
    write_table(args.out, ('segment', 'mi_nats'), enumerate(scores))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog='pydisent',
        description='Disentangled multimodal representation learning on feature files')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen', help='write a synthetic dataset')
    p.add_argument('--spec', help='key=value SyntheticSpec file, defaults if omitted')
    p.add_argument('--out', required=True, help='output directory')
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser('train', help='train one model')
    p.add_argument('--data', required=True)
    p.add_argument('--config', help='key=value TrainConfig file, defaults if omitted')
    p.add_argument('--out', required=True, help='checkpoint: .pkl, .yml, .yaml or .json')
    p.add_argument('--log', help='per epoch loss table, .csv or .xlsx')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='score a checkpoint')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--report', required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('ablate', help='train one model per ablated variant')
    p.add_argument('--data', required=True)
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.add_argument('--mode', choices=('losses', 'components'), default='losses')
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser('gradcheck', help='compare gradients with finite differences')
    p.add_argument('--seed', type=int, default=0, help='first seed')
    p.add_argument('--seeds', type=int, default=10, help='number of seeds')
    p.add_argument('--check', action='append', choices=tuple(GRAD_CHECKS),
                   help='restrict to this check, may be repeated')
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser('dump-attn', help='per sample attention weights')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_dump_attn)

    p = sub.add_parser('dump-embed', help='per sample disentangled features')
    p.add_argument('--ckpt', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_dump_embed)

    p = sub.add_parser('analyze-mi', help='video/audio mutual information per segment')
    p.add_argument('--data', required=True)
    p.add_argument('--bins', type=int, default=8)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_analyze_mi)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    console = pydisent_logging_to_console(level='DEBUG' if args.verbose else 'INFO')
    try:
        return args.func(args)
    except (OSError, PyDisentException) as exc:
        pydisent_logger.error(f'{args.command}: {exc}')
        return 1
    finally:
        pydisent_logger.removeHandler(console)
