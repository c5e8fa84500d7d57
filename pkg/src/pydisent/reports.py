# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Tabular output: CSV, or an openpyxl workbook for ``.xlsx`` paths
"""
import csv
import logging
import os

import numpy as np
from openpyxl import load_workbook, Workbook

from pydisent.diffutil import InvalidArgumentError

pydisent_logger = logging.getLogger('pydisent')

XLSX_EXTENSIONS = ('.xlsx', '.xlsm')


def _cell(value):
    if value is None:
        return None
    if isinstance(value, (np.integer, )):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _csv_cell(value):
    value = _cell(value)
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return value


def is_workbook(filename):
    return os.path.splitext(filename)[1].lower() in XLSX_EXTENSIONS


def write_table(filename, header, rows, sheet_name='pydisent'):
    """Write header plus rows, the format follows the file extension"""
    header = tuple(header)
    rows = [tuple(row) for row in rows]
    bad = [i for i, row in enumerate(rows) if len(row) != len(header)]
    if bad:
        raise InvalidArgumentError(
            f'Rows {bad} do not match the {len(header)} columns of the header')

    dirname = os.path.dirname(filename)
    if dirname:
        os.makedirs(dirname, exist_ok=True)

    if is_workbook(filename):
        workbook = Workbook()
        worksheet = workbook.active
        worksheet.title = sheet_name
        worksheet.append(header)
        for row in rows:
            worksheet.append([_cell(v) for v in row])
        workbook.save(filename)
    else:
        with open(filename, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows([_csv_cell(v) for v in row] for row in rows)
    pydisent_logger.info(f'wrote {len(rows)} rows to {filename}')


def read_table(filename):
    """(header, rows) of a table written by write_table, CSV cells as str"""
    if is_workbook(filename):
        worksheet = load_workbook(filename, read_only=True).active
        values = [tuple(row) for row in worksheet.iter_rows(values_only=True)]
    else:
        with open(filename, 'r', newline='') as f:
            values = [tuple(row) for row in csv.reader(f)]
    if not values:
        return (), []
    return values[0], values[1:]
