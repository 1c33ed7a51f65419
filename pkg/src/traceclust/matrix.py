"""Sparse user-by-domain matrices and their normalized joint-distribution form.

Both matrix kinds are stored as coordinate triples sorted by (row, col),
alongside ordered row/column id lists. The on-disk format is a triple file
(``row_id,col_id,value`` per line) plus a JSON sidecar header listing the
row/column orderings and the period label; values are written with Python
float repr so reloading is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .provenance import header_lines, load_json_artifact, read_artifact_lines, write_json_artifact


def _sorted_coo(rows: np.ndarray, cols: np.ndarray,
                vals: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.lexsort((cols, rows))
    return rows[order], cols[order], vals[order]


@dataclass
class ContingencyMatrix:
    """Per-period online time in minutes, keyed by user mac and domain name."""

    row_ids: list[str]
    col_ids: list[str]
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    period: str = ""

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=np.float64)
        if np.any(self.vals < 0):
            raise ValueError("negative cell value")
        if self.rows.size and (self.rows.max() >= len(self.row_ids)
                               or self.cols.max() >= len(self.col_ids)):
            raise ValueError("cell index out of range")

    @classmethod
    def from_cells(cls, cells: Mapping[tuple[str, str], float],
                   row_ids: list[str] | None = None,
                   col_ids: list[str] | None = None,
                   period: str = "") -> "ContingencyMatrix":
        """Build from a (user, domain) -> minutes mapping.

        Id orderings default to sorted ids found in the cells; explicit lists
        may include extra (inactive) ids, which simply carry no triples.
        """
        if row_ids is None:
            row_ids = sorted({u for u, _ in cells})
        if col_ids is None:
            col_ids = sorted({d for _, d in cells})
        rindex = {u: i for i, u in enumerate(row_ids)}
        cindex = {d: j for j, d in enumerate(col_ids)}
        triples = sorted((rindex[u], cindex[d], v) for (u, d), v in cells.items() if v > 0)
        rows = np.array([t[0] for t in triples], dtype=np.int64)
        cols = np.array([t[1] for t in triples], dtype=np.int64)
        vals = np.array([t[2] for t in triples], dtype=np.float64)
        return cls(row_ids, col_ids, rows, cols, vals, period)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_ids), len(self.col_ids)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def total(self) -> float:
        return float(self.vals.sum())

    def toarray(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.rows, self.cols] = self.vals
        return dense

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.vals, minlength=len(self.row_ids))

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.vals, minlength=len(self.col_ids))

    def pruned(self) -> tuple["ContingencyMatrix", int, int]:
        """Drop all-zero rows and columns; returns (matrix, dropped_rows, dropped_cols)."""
        keep_r = np.flatnonzero(self.row_sums() > 0)
        keep_c = np.flatnonzero(self.col_sums() > 0)
        if keep_r.size == len(self.row_ids) and keep_c.size == len(self.col_ids):
            return self, 0, 0
        rmap = -np.ones(len(self.row_ids), dtype=np.int64)
        cmap = -np.ones(len(self.col_ids), dtype=np.int64)
        rmap[keep_r] = np.arange(keep_r.size)
        cmap[keep_c] = np.arange(keep_c.size)
        out = ContingencyMatrix(
            [self.row_ids[i] for i in keep_r],
            [self.col_ids[j] for j in keep_c],
            rmap[self.rows], cmap[self.cols], self.vals.copy(), self.period)
        return out, len(self.row_ids) - keep_r.size, len(self.col_ids) - keep_c.size

    def restricted(self, row_ids: Iterable[str],
                   col_ids: Iterable[str]) -> tuple["ContingencyMatrix", float]:
        """Restrict to the given id lists (in their order); ids absent here are
        kept as all-zero rows/columns. Returns (matrix, dropped mass fraction)."""
        row_ids = list(row_ids)
        col_ids = list(col_ids)
        rindex = {u: i for i, u in enumerate(row_ids)}
        cindex = {d: j for j, d in enumerate(col_ids)}
        rmap = np.array([rindex.get(u, -1) for u in self.row_ids], dtype=np.int64)
        cmap = np.array([cindex.get(d, -1) for d in self.col_ids], dtype=np.int64)
        keep = (rmap[self.rows] >= 0) & (cmap[self.cols] >= 0)
        rows, cols, vals = _sorted_coo(rmap[self.rows[keep]], cmap[self.cols[keep]],
                                       self.vals[keep])
        total = self.total()
        dropped = 0.0 if total == 0 else 1.0 - float(vals.sum()) / total
        return ContingencyMatrix(row_ids, col_ids, rows, cols, vals, self.period), dropped


@dataclass
class JointDistribution:
    """A contingency table normalized into a joint probability p(x, y).

    Invariants enforced at construction: strictly positive stored values,
    total mass 1 within 1e-9, and strictly positive row/column marginals
    (so every listed id actually carries mass).
    """

    row_ids: list[str]
    col_ids: list[str]
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    period: str = ""
    px: np.ndarray = field(init=False, repr=False)
    py: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.vals = np.asarray(self.vals, dtype=np.float64)
        if self.vals.size == 0 or np.any(self.vals <= 0):
            raise ValueError("joint distribution requires strictly positive cells")
        total = float(self.vals.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"joint distribution mass {total} != 1")
        self.px = np.bincount(self.rows, weights=self.vals, minlength=len(self.row_ids))
        self.py = np.bincount(self.cols, weights=self.vals, minlength=len(self.col_ids))
        if np.any(self.px <= 0) or np.any(self.py <= 0):
            raise ValueError("zero row/column marginal: prune empty ids first")

    @classmethod
    def from_dense(cls, dense: np.ndarray, row_ids: list[str] | None = None,
                   col_ids: list[str] | None = None, period: str = "") -> "JointDistribution":
        dense = np.asarray(dense, dtype=np.float64)
        n, m = dense.shape
        if row_ids is None:
            row_ids = [f"u{i:04d}" for i in range(n)]
        if col_ids is None:
            col_ids = [f"d{j:03d}" for j in range(m)]
        rows, cols = np.nonzero(dense)
        return cls(row_ids, col_ids, rows.astype(np.int64), cols.astype(np.int64),
                   dense[rows, cols], period)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_ids), len(self.col_ids)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def toarray(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.rows, self.cols] = self.vals
        return dense


def scale_matrix(m: ContingencyMatrix) -> JointDistribution:
    """Scale online-time minutes into a joint distribution.

    Applies log(1 + minutes) per cell, normalizes each row to sum 1, then
    divides by the row count, so the table sums to 1 and row marginals are
    uniform. The matrix must already be pruned of all-zero rows/columns.
    """
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        raise ValueError("empty matrix")
    logged = np.log1p(m.vals)
    row_totals = np.bincount(m.rows, weights=logged, minlength=n_rows)
    if np.any(row_totals <= 0):
        raise ValueError("all-zero row encountered: pruning contract violated")
    if np.any(np.bincount(m.cols, minlength=n_cols) == 0):
        raise ValueError("all-zero column encountered: pruning contract violated")
    vals = logged / row_totals[m.rows] / n_rows
    return JointDistribution(list(m.row_ids), list(m.col_ids),
                             m.rows.copy(), m.cols.copy(), vals, m.period)


def _header_path(matrix_path: Path) -> Path:
    return matrix_path.with_suffix(".header.json")


def write_matrix(m: ContingencyMatrix | JointDistribution, path: str | Path,
                 config: dict[str, Any] | None = None,
                 inputs: list[str | Path] | None = None) -> Path:
    """Write triples to `path` and the ordering sidecar next to it."""
    path = Path(path)
    lines = header_lines(config, inputs)
    lines += [f"{m.row_ids[r]},{m.col_ids[c]},{float(v)!r}"
              for r, c, v in zip(m.rows, m.cols, m.vals)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_json_artifact(_header_path(path), {
        "period": m.period,
        "rows": list(m.row_ids),
        "cols": list(m.col_ids),
    }, config, inputs)
    return path


def load_matrix(path: str | Path) -> ContingencyMatrix:
    """Load a triple file written by write_matrix (sidecar found by convention)."""
    path = Path(path)
    header = load_json_artifact(_header_path(path))
    row_ids = list(header["rows"])
    col_ids = list(header["cols"])
    rindex = {u: i for i, u in enumerate(row_ids)}
    cindex = {d: j for j, d in enumerate(col_ids)}
    rows, cols, vals = [], [], []
    for line_no, line in enumerate(read_artifact_lines(path), 1):
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}:{line_no}: expected row_id,col_id,value")
        try:
            rows.append(rindex[parts[0]])
            cols.append(cindex[parts[1]])
        except KeyError as e:
            raise ValueError(f"{path}:{line_no}: id {e.args[0]!r} missing from header") from None
        value = float(parts[2])
        if not math.isfinite(value):
            raise ValueError(f"{path}:{line_no}: non-finite value")
        vals.append(value)
    r, c, v = _sorted_coo(np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                          np.array(vals, dtype=np.float64))
    return ContingencyMatrix(row_ids, col_ids, r, c, v, header.get("period", ""))


def load_joint(path: str | Path) -> JointDistribution:
    m = load_matrix(path)
    return JointDistribution(m.row_ids, m.col_ids, m.rows, m.cols, m.vals, m.period)
