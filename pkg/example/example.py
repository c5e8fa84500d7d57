# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Simple example file: generate a synthetic dataset, train a small model and
look at what the attention learned
"""
import os

from pydisent import evaluate, generate, SyntheticSpec, train, TrainConfig
from pydisent.cli import pydisent_logging_to_console
from pydisent.datagen import segment_mi
from pydisent.engine import attention_weights
from pydisent.reports import write_table


if __name__ == '__main__':
    pydisent_logging_to_console()

    path = os.path.dirname(os.path.abspath(__file__))
    spec = SyntheticSpec(n_samples=300, d_v=16, d_a=16, L=4, seed=1)

    print(f"Generating {spec.n_samples} samples...")
    dataset = generate(spec)
    train_set, test_set = dataset.split(0.2, seed=1)

    print(f"Video/audio MI per segment: {segment_mi(*dataset.segments.values())}")

    config = TrainConfig(learning_rate=3e-3, max_epochs=30, patience=5, seed=1)
    checkpoint, history = train(train_set, config)
    print(f"Best validation total {checkpoint.best_val:.4g} at epoch {checkpoint.epoch}")

    report = evaluate(checkpoint, test_set)
    print(f"Held out MAE {report.mae:.3f}, RMSE {report.rmse:.3f}")

    weights = attention_weights(checkpoint, test_set)
    print(f"Mean attention over (Fc_v, Fc_a, Fs_v, Fs_a): {weights.mean(axis=0)}")

    history.to_csv(os.path.join(path, "history.csv"))
    checkpoint.to_file(os.path.join(path, "model.yml"))
    write_table(os.path.join(path, "attention.xlsx"), ('Fc_v', 'Fc_a', 'Fs_v', 'Fs_a'),
                weights)
