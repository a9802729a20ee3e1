import csv
import os

import numpy as np


def fmt(value):
    """CSV 数值格式：浮点 .12g，整数原样，布尔 0/1"""
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return value


def ensure_csv_writer(csv_path, fieldnames, append=True):
    is_new = not append or not os.path.exists(csv_path)
    os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
    f = open(csv_path, mode="a" if append else "w", newline="")
    writer = csv.DictWriter(f, fieldnames=fieldnames)
    if is_new:
        writer.writeheader()
    return f, writer


def write_rows(csv_path, fieldnames, rows, append=False):
    f, writer = ensure_csv_writer(csv_path, fieldnames, append=append)
    with f:
        for row in rows:
            writer.writerow({k: fmt(row[k]) for k in fieldnames})
