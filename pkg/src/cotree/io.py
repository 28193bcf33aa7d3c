"""Readers and writers for data matrices, label files, distance matrices,
trees and iteration histories.

Readers reject malformed input with the offending coordinates rather than
repairing it. Writers are deterministic: reals are printed with 17
significant digits, which round-trips every binary64 value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ShapeError
from .tree import WeightedBinaryTree, from_newick, to_newick

__all__ = [
    "Dataset",
    "read_dense",
    "read_sparse",
    "read_labels",
    "read_distance_matrix",
    "read_tree",
    "read_history",
    "write_dense",
    "write_sparse",
    "write_labels",
    "write_distance_matrix",
    "write_tree",
    "write_history",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """A nonnegative data matrix with optional row/column names and row classes."""

    matrix: np.ndarray
    row_names: tuple | None = None
    col_names: tuple | None = None
    row_classes: tuple | None = None

    def __post_init__(self):
        n, m = np.shape(self.matrix)
        for attr, size in (("row_names", n), ("col_names", m), ("row_classes", n)):
            val = getattr(self, attr)
            if val is not None and len(val) != size:
                raise ShapeError(f"{attr} has {len(val)} entries, expected {size}")

    @property
    def shape(self):
        return self.matrix.shape


def _fmt(x) -> str:
    return "%.17g" % x


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return lines


def _delimiter(line):
    return "\t" if "\t" in line else ","


def _parse_cell(text, row, col):
    try:
        val = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text.strip()!r} at row {row}, column {col}", row=row, column=col) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite cell {text.strip()!r} at row {row}, column {col}", row=row, column=col)
    return val


def read_dense(path, has_header: bool = False, has_row_names: bool = False) -> Dataset:
    """Read a comma- or tab-separated matrix.

    The delimiter is a tab if the first line contains one, a comma otherwise.
    Row and column coordinates in error messages are 1-based positions in the
    file (header and name column included).

    Parameters
    ----------
    path : path-like
    has_header : bool
        The first line holds column names.
    has_row_names : bool
        The first field of each body line is a row name.

    Raises
    ------
    ParseError
        On an empty body, ragged rows, non-numeric or non-finite cells, or
        negative values.
    """
    lines = _lines(path)
    if not lines:
        raise ParseError(f"{path}: file is empty")
    sep = _delimiter(lines[0])
    skip = 1 if has_row_names else 0
    col_names = None
    start = 0
    if has_header:
        header = lines[0].split(sep)
        col_names = tuple(h.strip() for h in header[skip:])
        start = 1
    body = lines[start:]
    if not body:
        raise ParseError(f"{path}: no data rows")
    width = None
    rows, names = [], []
    for offset, line in enumerate(body):
        lineno = start + offset + 1
        fields = line.split(sep)
        if has_row_names:
            names.append(fields[0].strip())
            fields = fields[1:]
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise ParseError(
                f"{path}: row {lineno} has {len(fields)} values, expected {width}", row=lineno
            )
        vals = []
        for c, cell in enumerate(fields):
            col = c + 1 + skip
            v = _parse_cell(cell, lineno, col)
            if v < 0:
                raise ParseError(f"{path}: negative value {v!r} at row {lineno}, column {col}", row=lineno, column=col)
            vals.append(v)
        rows.append(vals)
    if col_names is not None and len(col_names) != width:
        raise ParseError(f"{path}: header has {len(col_names)} names but rows have {width} values", row=1)
    return Dataset(
        matrix=np.asarray(rows, dtype=np.float64),
        row_names=tuple(names) if has_row_names else None,
        col_names=col_names,
    )


def read_sparse(path) -> Dataset:
    """Read a MatrixMarket ``coordinate real general`` file into a dense matrix.

    Indices are 1-based; duplicate coordinates are summed. Lines starting
    with ``%`` after the banner are comments.
    """
    lines = _lines(path)
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise ParseError(f"{path}: missing %%MatrixMarket banner", row=1)
    banner = lines[0].split()
    if [b.lower() for b in banner[1:]] != ["matrix", "coordinate", "real", "general"]:
        raise ParseError(f"{path}: only 'matrix coordinate real general' is supported", row=1)
    idx = 1
    while idx < len(lines) and (lines[idx].startswith("%") or not lines[idx].strip()):
        idx += 1
    if idx == len(lines):
        raise ParseError(f"{path}: missing size line")
    size = lines[idx].split()
    try:
        n, m, nnz = (int(s) for s in size)
    except ValueError:
        raise ParseError(f"{path}: bad size line {lines[idx]!r}", row=idx + 1) from None
    if n < 1 or m < 1 or nnz < 0:
        raise ParseError(f"{path}: bad dimensions {n}x{m} with {nnz} entries", row=idx + 1)
    out = np.zeros((n, m))
    count = 0
    for k in range(idx + 1, len(lines)):
        line = lines[k]
        if not line.strip() or line.startswith("%"):
            continue
        parts = line.split()
        lineno = k + 1
        if len(parts) != 3:
            raise ParseError(f"{path}: line {lineno} must hold 'row col value'", row=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{path}: bad index on line {lineno}", row=lineno) from None
        if not (1 <= i <= n and 1 <= j <= m):
            raise ParseError(f"{path}: index ({i}, {j}) on line {lineno} outside {n}x{m}", row=i, column=j)
        v = _parse_cell(parts[2], i, j)
        if v < 0:
            raise ParseError(f"{path}: negative value {v!r} at ({i}, {j}) on line {lineno}", row=i, column=j)
        out[i - 1, j - 1] += v
        count += 1
    if count != nnz:
        raise ParseError(f"{path}: size line announces {nnz} entries, found {count}")
    return Dataset(matrix=out)


def read_labels(path) -> np.ndarray:
    """One label per line, returned as a string array."""
    return np.asarray([ln.strip() for ln in _lines(path)], dtype=str)


def read_distance_matrix(path) -> np.ndarray:
    """Read a square, symmetric, zero-diagonal, nonnegative CSV matrix."""
    lines = _lines(path)
    if not lines:
        raise ParseError(f"{path}: file is empty")
    sep = _delimiter(lines[0])
    rows = []
    for r, line in enumerate(lines, start=1):
        rows.append([_parse_cell(cell, r, c) for c, cell in enumerate(line.split(sep), start=1)])
    n = len(rows)
    for r, vals in enumerate(rows, start=1):
        if len(vals) != n:
            raise ParseError(f"{path}: row {r} has {len(vals)} values; a {n}x{n} matrix is required", row=r)
    d = np.asarray(rows, dtype=np.float64)
    bad = np.argwhere(d < 0)
    if bad.size:
        i, j = bad[0] + 1
        raise ParseError(f"{path}: negative distance at row {i}, column {j}", row=int(i), column=int(j))
    bad = np.argwhere(d != d.T)
    if bad.size:
        i, j = bad[0] + 1
        raise ParseError(f"{path}: matrix is not symmetric at row {i}, column {j}", row=int(i), column=int(j))
    bad = np.flatnonzero(np.diag(d) != 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise ParseError(f"{path}: nonzero diagonal at row {i}", row=i, column=i)
    return d


def read_tree(path, names=None) -> WeightedBinaryTree:
    with open(path, encoding="utf-8") as fh:
        return from_newick(fh.read(), names=names)


def read_history(path) -> list[dict]:
    """Records of a history log, one dict per line (``null`` changes become NaN)."""
    out = []
    for line in _lines(path):
        rec = json.loads(line)
        for key in ("change_r", "change_c"):
            if rec.get(key) is None:
                rec[key] = float("nan")
        out.append(rec)
    return out


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")


def write_dense(matrix, path, row_names=None, col_names=None) -> None:
    """Comma-separated matrix with 17-significant-digit values and a trailing newline."""
    x = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    lines = []
    if col_names is not None:
        head = [""] if row_names is not None else []
        lines.append(",".join(head + [str(c) for c in col_names]))
    for i, row in enumerate(x):
        cells = [_fmt(v) for v in row]
        if row_names is not None:
            cells.insert(0, str(row_names[i]))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def write_sparse(matrix, path) -> None:
    """MatrixMarket coordinate file holding the nonzero entries in row-major order."""
    x = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = np.nonzero(x)
    lines = ["%%MatrixMarket matrix coordinate real general", f"{x.shape[0]} {x.shape[1]} {rows.size}"]
    lines += [f"{i + 1} {j + 1} {_fmt(x[i, j])}" for i, j in zip(rows, cols)]
    _write_text(path, "\n".join(lines) + "\n")


def write_labels(labels, path) -> None:
    _write_text(path, "".join(f"{lab}\n" for lab in labels))


def write_distance_matrix(matrix, path) -> None:
    """Dense CSV, one row per line, no trailing newline (a zero 2x2 matrix is ``0,0\\n0,0``)."""
    d = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    _write_text(path, "\n".join(",".join(_fmt(v) for v in row) for row in d))


def write_tree(tree: WeightedBinaryTree, path, names=None) -> None:
    _write_text(path, to_newick(tree, names=names) + "\n")


def _json_float(x):
    x = float(x)
    return None if math.isnan(x) else x


def write_history(history, path, config: dict | None = None, timing: bool = False) -> None:
    """Line-delimited JSON log with one record per iteration.

    The first record also carries ``config`` (the fully resolved run
    configuration) when given. Wall times are included only with
    ``timing=True`` so that the default log is reproducible byte for byte.
    """
    lines = []
    for k, rec in enumerate(history):
        row = {
            "iteration": int(rec.iteration),
            "change_r": _json_float(rec.change_r),
            "change_c": _json_float(rec.change_c),
            "l1_r": _json_float(rec.l1_r),
            "l1_c": _json_float(rec.l1_c),
        }
        if timing:
            row["wall_ms"] = _json_float(rec.wall_ms)
        if k == 0 and config is not None:
            row["config"] = config
        lines.append(json.dumps(row, sort_keys=True, allow_nan=False))
    _write_text(path, "".join(line + "\n" for line in lines))
