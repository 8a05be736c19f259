"""Dataset loaders, CSV/JSON writers and the model bundle.

All writes go through a temporary file in the target directory followed by
``os.replace`` so readers never observe a partial file.

Formats
-------
dense CSV
    Numeric rows, comma separated. An optional first line with a non-numeric
    cell is a header. Lines starting with ``#`` are comments.
multilabel, sparse
    One example per line: feature tokens ``i:v`` (0-based column, value) and
    label tokens ``y<j>:1`` or a leading comma list ``j1,j2,...``. A comment
    line ``# n_features=<d> n_labels=<L>`` fixes the dimensions.
multilabel, dense
    Dense CSV with a header; label columns are those named ``y...`` or
    ``label...``. Without a header pass ``n_labels`` (the last columns).
USPS halves
    Dense CSV with 256 pixel columns per 16x16 image, row-major, optionally
    preceded by a digit column (257 columns). Rows 0-7 of the image are the
    input half, rows 8-15 the output half.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# --------------------------------------------------------------------------
# Writing
# --------------------------------------------------------------------------

def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str):
    return atomic_write_bytes(path, text.encode("utf-8"))


def format_cell(v) -> str:
    """Deterministic text for one CSV cell; floats use the shortest round-trip repr."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for r in rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    return atomic_write_text(path, csv_text(header, rows))


def write_matrix_csv(path, A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return write_csv(path, header, A.tolist())


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_jsonl(path, records):
    lines = [json.dumps(r, sort_keys=True) for r in records]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


# --------------------------------------------------------------------------
# Reading
# --------------------------------------------------------------------------

def _read_lines(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_dense_csv(path):
    """``(header or None, matrix)`` from a dense CSV file."""
    lines = _read_lines(path)
    header, rows, width = None, [], None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = next(csv.reader([line]))
        cells = [c.strip() for c in cells]
        if header is None and not rows and not all(_is_number(c) for c in cells):
            header = cells
            width = len(cells)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    A = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(A)):
        bad = int(np.argwhere(~np.isfinite(A))[0, 0])
        raise DataError(f"{path}: non-finite value in data row {bad + 1}")
    return header, A


def load_dense_csv(path) -> np.ndarray:
    return read_dense_csv(path)[1]


@dataclass
class MultilabelDataset:
    X: np.ndarray
    Y: np.ndarray
    label_names: list

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError(f"{self.X.shape[0]} inputs for {self.Y.shape[0]} label rows")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            raise DataError("labels must be 0/1")
        if len(self.label_names) != self.Y.shape[1]:
            raise DataError("label_names length differs from the label count")

    @property
    def n(self):
        return self.X.shape[0]

    def mean_labels(self) -> float:
        return float(self.Y.sum(axis=1).mean())


_DIMS = re.compile(r"n_features\s*=\s*(\d+).*?n_labels\s*=\s*(\d+)")


def _load_sparse_multilabel(path, lines):
    d = L = None
    feats, labs = [], []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            m = _DIMS.search(s)
            if m:
                d, L = int(m.group(1)), int(m.group(2))
            continue
        toks = s.split()
        f, lab = {}, set()
        if toks and ":" not in toks[0]:
            try:
                lab.update(int(t) for t in toks[0].split(",") if t)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad label list {toks[0]!r}") from None
            toks = toks[1:]
        for t in toks:
            key, sep, val = t.partition(":")
            if not sep:
                raise DataError(f"{path}:{lineno}: token {t!r} is not key:value")
            try:
                if key[:1] in ("y", "L"):
                    if float(val) != 1.0:
                        raise DataError(f"{path}:{lineno}: label value must be 1, got {val}")
                    lab.add(int(key[1:]))
                else:
                    f[int(key)] = float(val)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed token {t!r}") from None
        if any(j < 0 for j in lab) or any(i < 0 for i in f):
            raise DataError(f"{path}:{lineno}: negative index")
        feats.append(f)
        labs.append(lab)
    if not feats:
        raise DataError(f"{path}: no examples")
    if d is None:
        d = 1 + max((max(f) for f in feats if f), default=-1)
        L = 1 + max((max(l) for l in labs if l), default=-1)
    X = np.zeros((len(feats), d))
    Y = np.zeros((len(feats), L))
    for i, (f, lab) in enumerate(zip(feats, labs)):
        for j, v in f.items():
            if j >= d:
                raise DataError(f"{path}: example {i + 1} has feature {j} >= n_features={d}")
            X[i, j] = v
        for j in lab:
            if j >= L:
                raise DataError(f"{path}: example {i + 1} has label {j} >= n_labels={L}")
            Y[i, j] = 1.0
    return MultilabelDataset(X, Y, [f"y{j}" for j in range(L)])


def load_multilabel(path, n_labels: Optional[int] = None) -> MultilabelDataset:
    """Sparse ``key:value`` or dense 0/1 CSV multilabel file (see module docstring)."""
    lines = _read_lines(path)
    body = [l for l in lines if l.strip() and not l.lstrip().startswith("#")]
    if not body:
        raise DataError(f"{path}: no examples")
    if ":" in body[0]:
        return _load_sparse_multilabel(path, lines)
    header, A = read_dense_csv(path)
    if header is not None and n_labels is None:
        is_lab = [h.lower().startswith(("y", "label")) for h in header]
        if not any(is_lab):
            raise DataError(f"{path}: header names no label columns (y... or label...)")
        lab_idx = [i for i, b in enumerate(is_lab) if b]
        x_idx = [i for i, b in enumerate(is_lab) if not b]
        names = [header[i] for i in lab_idx]
    else:
        if n_labels is None or not 0 < n_labels <= A.shape[1]:
            raise DataError(f"{path}: need n_labels for a headerless dense file")
        x_idx = list(range(A.shape[1] - n_labels))
        lab_idx = list(range(A.shape[1] - n_labels, A.shape[1]))
        names = [header[i] for i in lab_idx] if header else [f"y{j}" for j in range(n_labels)]
    Y = A[:, lab_idx]
    bad = np.argwhere((Y != 0) & (Y != 1))
    if bad.size:
        raise DataError(f"{path}: non-binary label in data row {int(bad[0, 0]) + 1}")
    return MultilabelDataset(A[:, x_idx], Y, names)


def load_usps_halves(path):
    """``(top half, bottom half)`` of 16x16 digit images, each n x 128."""
    A = load_dense_csv(path)
    if A.shape[1] == 257:
        A = A[:, 1:]
    if A.shape[1] != 256:
        raise DataError(f"{path}: expected 256 pixel columns (or 257 with a digit), got {A.shape[1]}")
    return A[:, :128].copy(), A[:, 128:].copy()


# --------------------------------------------------------------------------
# Model bundle
# --------------------------------------------------------------------------

def save_bundle(path, arrays: dict, meta: dict):
    """``.npz`` with the arrays plus a JSON ``meta`` entry; written atomically."""
    buf = _io.BytesIO()
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(buf, **payload)
    return atomic_write_bytes(path, buf.getvalue())


def load_bundle(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such bundle")
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
            meta = json.loads(bytes(z["__meta__"]).decode())
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: unreadable bundle ({exc})") from exc
    return arrays, meta
