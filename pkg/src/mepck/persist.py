"""Model files, chain/report CSVs and atomic writes.

Model files are versioned JSON holding the partition, each cell's trend
(multi-indices plus coefficients), kernel hyperparameters, nugget and a full
copy of the standardized design; the correlation factorization is rebuilt on
load, so a round-tripped model reproduces its predictions to double
precision. Floats are serialized with shortest-round-trip repr.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .design_space import Cell, Domain, Partition
from .kriging import PckModel, assemble_pck
from .multielement import MultielementPck

MODEL_FORMAT_VERSION = 1


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell_to_dict(cell: Cell) -> dict:
    return {
        "lower": cell.lower.tolist(),
        "upper": cell.upper.tolist(),
        "upper_closed": cell.upper_closed.tolist(),
    }


def _local_to_dict(local: PckModel) -> dict:
    return {
        "trend_indices": local.trend.indices.tolist(),
        "trend_coeffs": local.trend.coeffs.tolist(),
        "theta": local.hyper.theta.tolist(),
        "sigma2": local.hyper.sigma2,
        "nugget": local.nugget,
        "design_inputs_std": local.design_u.tolist(),
        "design_outputs": local.design_y.tolist(),
    }


def model_to_dict(model: MultielementPck, metadata: dict | None = None) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "domain": {
            "lower": model.partition.parent.lower.tolist(),
            "upper": model.partition.parent.upper.tolist(),
        },
        "cells": [_cell_to_dict(c) for c in model.partition.cells],
        "locals": [_local_to_dict(m) for m in model.locals],
        "metadata": metadata or {},
    }


def save_model(path, model: MultielementPck, metadata: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model, metadata), indent=1, sort_keys=True))


def load_model(path) -> MultielementPck:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {version!r}")
    domain = Domain(data["domain"]["lower"], data["domain"]["upper"])
    cells = [
        Cell(c["lower"], c["upper"], c["upper_closed"]) for c in data["cells"]
    ]
    partition = Partition(domain, cells)
    locals_ = []
    for cell, ld in zip(cells, data["locals"]):
        # rebuild the factorization from the stored design and kernel; the
        # trend coefficients are restored, not refit
        rebuilt = assemble_pck(
            cell,
            np.asarray(ld["trend_indices"], dtype=int),
            np.asarray(ld["design_inputs_std"], dtype=float),
            np.asarray(ld["design_outputs"], dtype=float),
            np.asarray(ld["theta"], dtype=float),
            nugget=float(ld["nugget"]),
        )
        locals_.append(rebuilt)
    return MultielementPck(partition, tuple(locals_))


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (int, float, np.floating)) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_chain_csv(path, chain) -> None:
    """Header: iter,theta_1..theta_d,log_post,stage."""
    d = chain.ndim
    header = ["iter"] + [f"theta_{j + 1}" for j in range(d)] + ["log_post", "stage"]
    lines = [",".join(header)]
    for i in range(chain.states.shape[0]):
        vals = [str(i)] + [_fmt(v) for v in chain.states[i]]
        vals += [_fmt(chain.log_posts[i]), str(int(chain.stages[i]))]
        lines.append(",".join(vals))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_hdr_csv(path, hdr_table: dict) -> None:
    """Rows: level,parameter,interval_index,lower,upper."""
    header = ["level", "parameter", "interval_index", "lower", "upper"]
    rows = []
    for (level, name), intervals in hdr_table.items():
        for k, (lo, hi) in enumerate(intervals):
            rows.append([level, name, k, lo, hi])
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join([_fmt(row[0]), str(row[1]), str(row[2]), _fmt(row[3]), _fmt(row[4])])
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_flux_csv(path, curve) -> None:
    write_csv(path, ["T_bar", "J_bar"], zip(curve.T_bar, curve.J_bar))


def read_flux_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_validation_csv(path, rows: list[dict]) -> None:
    """One row per model, in the shape of the paper-style accuracy tables."""
    header = ["model", "NAAE", "NMAE", "NRMSE", "R2", "t_c", "t_e", "t_e_VS"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(
                [str(row["model"])]
                + [
                    _fmt(row[k]) if row.get(k) is not None else ""
                    for k in header[1:]
                ]
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_gnuplot_script(path, data_csv, title, xlabel, ylabel, columns=(1, 2)) -> None:
    text = (
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        f"set xlabel '{xlabel}'\n"
        f"set ylabel '{ylabel}'\n"
        "set key off\n"
        f"plot '{os.path.basename(data_csv)}' using "
        f"{columns[0]}:{columns[1]} skip 1 with lines\n"
    )
    atomic_write_text(path, text)
