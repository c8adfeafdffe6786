"""Reference datasets: the CSV container plus the shared scoring metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KIND_NUMERIC = "numeric"
KIND_LABEL = "label"
KIND_IDENTIFIER = "identifier"
_KINDS = (KIND_NUMERIC, KIND_LABEL, KIND_IDENTIFIER)

FORMAT_VERSION = "igss-csv v1"


class DataError(Exception):
    """Malformed dataset file or mismatched inputs."""


@dataclass
class ReferenceDataset:
    """A rectangular numeric table with named, kind-tagged columns."""

    columns: list[str]
    kinds: list[str]
    data: np.ndarray
    provenance: str = "external"
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.columns) != len(set(self.columns)):
            dupes = sorted({c for c in self.columns if self.columns.count(c) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        if len(self.kinds) != len(self.columns):
            raise DataError("kinds and columns differ in length")
        for kind in self.kinds:
            if kind not in _KINDS:
                raise DataError(f"unknown column kind {kind!r}")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise DataError("data shape does not match the column list")
        self._index = {name: i for i, name in enumerate(self.columns)}
        for name, kind in zip(self.columns, self.kinds):
            if kind == KIND_LABEL:
                col = self.column(name)
                if not np.isin(col, (0.0, 1.0)).all():
                    raise DataError(f"label column {name!r} holds non-binary values")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self._index[name]]
        except KeyError:
            raise DataError(
                f"no column {name!r}; available: {', '.join(self.columns)}"
            ) from None

    def column_matrix(self) -> np.ndarray:
        """Column-major (n_columns x n_rows) contiguous view for batch eval."""
        return np.ascontiguousarray(self.data.T)


def _format_cell(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return f"{value:.9g}"


def save_csv(dataset: ReferenceDataset, path) -> None:
    """Write UTF-8, LF-terminated CSV with a kind/provenance comment line."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(f"# {FORMAT_VERSION}; kinds: {','.join(dataset.kinds)}; "
                 f"provenance: {dataset.provenance}\n")
        fh.write(",".join(dataset.columns) + "\n")
        for row in dataset.data:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")


def load_csv(path) -> ReferenceDataset:
    """Read a dataset written by :func:`save_csv` (or any plain numeric CSV)."""
    kinds = None
    provenance = "external"
    columns = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                if "kinds:" in line:
                    spec = line.split("kinds:", 1)[1].split(";", 1)[0]
                    kinds = [k.strip() for k in spec.split(",")]
                if "provenance:" in line:
                    provenance = line.split("provenance:", 1)[1].strip()
                continue
            cells = line.split(",")
            if columns is None:
                columns = [c.strip() for c in cells]
                continue
            if len(cells) != len(columns):
                raise DataError(
                    f"row {line_no}: expected {len(columns)} cells, "
                    f"got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(i for i, c in enumerate(cells)
                           if not _is_number(c))
                raise DataError(
                    f"row {line_no}, column {columns[bad]!r}: "
                    f"non-numeric cell {cells[bad]!r}") from None
    if columns is None:
        raise DataError("empty file: no header row")
    if kinds is None:
        kinds = [KIND_NUMERIC] * len(columns)
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return ReferenceDataset(columns, kinds, data, provenance)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def mse(a: Sequence[float], b: Sequence[float]) -> float:
    """Mean squared difference; 0 iff the vectors are equal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))


def balanced_accuracy(predictions: Sequence[float], labels: Sequence[float]) -> float:
    """Mean of true-positive and true-negative rates.

    On a single-class slice the undefined rate makes the score uninformative,
    so 0.5 is returned (this stops degenerate constant rules from scoring
    1.0 against an empty class).
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise DataError("predictions and labels differ in length")
    if predictions.size == 0:
        raise DataError("cannot score empty vectors")
    pos = labels != 0.0
    n_pos = int(np.count_nonzero(pos))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    pred_pos = predictions != 0.0
    tpr = float(np.count_nonzero(pred_pos & pos)) / n_pos
    tnr = float(np.count_nonzero(~pred_pos & ~pos)) / n_neg
    return (tpr + tnr) / 2.0


def gini(wealth: Sequence[float]) -> float:
    """Gini coefficient of a non-negative wealth vector."""
    w = np.sort(np.asarray(wealth, dtype=np.float64))
    if w.size == 0:
        raise DataError("empty wealth vector")
    if (w < 0).any():
        raise DataError("wealth entries must be non-negative")
    total = float(w.sum())
    if total == 0.0:
        raise DataError("all-zero wealth vector has no defined Gini")
    n = w.size
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(2.0 * np.dot(ranks, w) / (n * total) - (n + 1) / n)
