"""Response-ranked datasets with integer-coded covariates.

Everything downstream (the Bayes-factor engine, permutation nulls,
selection) works on a :class:`SlicedDataset`: observations sorted by the
response, covariate and group labels mapped to dense 0-based codes, and
maximal runs of tied response values recorded as blocks.  Slice
boundaries are only ever placed between blocks, so the arbitrary order
of tied observations cannot affect any statistic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError, InputError

__all__ = [
    "SlicedDataset",
    "PrefixCountTable",
    "load_table",
    "load_columns",
    "read_delimited",
    "encode_super_variable",
    "prefix_counts",
]


@dataclass(frozen=True)
class SlicedDataset:
    """Observations sorted ascending by response value.

    Attributes:
        y: sorted response values, shape (n,).
        x: covariate codes in 0..n_x_levels-1, aligned to ``y``.
        z: group codes in 0..n_z_levels-1, aligned to ``y``.  A single
            all-zero group (n_z_levels == 1) encodes the unconditional
            test.
        n_x_levels, n_z_levels: number of covariate / group levels.
        block_bounds: cumulative sizes of tie blocks; ``block_bounds[-1] == n``.
            Block ``b`` covers sorted positions ``[block_bounds[b-1], block_bounds[b])``.
        x_labels, z_labels: original labels per code, when known.
        name: optional identifier (e.g. the source column).
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    n_x_levels: int
    n_z_levels: int
    block_bounds: np.ndarray
    x_labels: tuple[str, ...] | None = None
    z_labels: tuple[str, ...] | None = None
    name: str | None = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.block_bounds.shape[0]

    @property
    def tie_blocks(self) -> list[tuple[int, int]]:
        """Tie blocks as half-open [start, stop) positions into the ranked order."""
        starts = np.concatenate(([0], self.block_bounds[:-1]))
        return list(zip(starts.tolist(), self.block_bounds.tolist()))

    @classmethod
    def from_values(
        cls,
        y,
        x,
        z=None,
        n_x_levels: int | None = None,
        n_z_levels: int | None = None,
        x_labels: tuple[str, ...] | None = None,
        z_labels: tuple[str, ...] | None = None,
        name: str | None = None,
    ) -> "SlicedDataset":
        """Build a dataset from raw (unsorted) arrays.

        ``y`` must be finite; ``x`` (and ``z`` if given) must be
        nonnegative integer codes.  Sorting is stable, so tied responses
        keep their input order (immaterial: counts are block-aggregated).
        """
        y = np.asarray(y, dtype=np.float64)
        x = np.asarray(x, dtype=np.int64)
        if y.ndim != 1 or y.size == 0:
            raise InputError("response must be a nonempty 1-d array")
        if not np.all(np.isfinite(y)):
            raise InputError("response contains non-finite values")
        if x.shape != y.shape:
            raise InputError("covariate and response lengths differ")
        if z is None:
            z = np.zeros_like(x)
        else:
            z = np.asarray(z, dtype=np.int64)
            if z.shape != y.shape:
                raise InputError("group and response lengths differ")
        if x.size and x.min() < 0:
            raise InputError("covariate codes must be nonnegative")
        if z.size and z.min() < 0:
            raise InputError("group codes must be nonnegative")
        kx = int(x.max()) + 1 if n_x_levels is None else int(n_x_levels)
        kz = int(z.max()) + 1 if n_z_levels is None else int(n_z_levels)
        if x.max() >= kx:
            raise InputError("covariate code out of range")
        if z.max() >= kz:
            raise InputError("group code out of range")

        order = np.argsort(y, kind="stable")
        ys = y[order]
        # block ends = positions where the next sorted value differs
        change = np.nonzero(np.diff(ys))[0] + 1
        bounds = np.concatenate((change, [ys.size])).astype(np.int64)
        return cls(
            y=ys,
            x=x[order],
            z=z[order],
            n_x_levels=kx,
            n_z_levels=kz,
            block_bounds=bounds,
            x_labels=x_labels,
            z_labels=z_labels,
            name=name,
        )

    def with_groups(self, z, n_z_levels: int, z_labels=None) -> "SlicedDataset":
        """Same observations conditioned on a different grouping.

        ``z`` must be aligned to the sorted order (same convention as
        ``self.z``).
        """
        z = np.asarray(z, dtype=np.int64)
        if z.shape != self.y.shape:
            raise InputError("group vector length mismatch")
        if z.min() < 0 or z.max() >= n_z_levels:
            raise InputError("group code out of range")
        return replace(self, z=z, n_z_levels=int(n_z_levels), z_labels=z_labels)

    def with_x(self, x) -> "SlicedDataset":
        """Same observations with replaced covariate codes (sorted order)."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape != self.y.shape:
            raise InputError("covariate vector length mismatch")
        if x.min() < 0 or x.max() >= self.n_x_levels:
            raise InputError("covariate code out of range")
        return replace(self, x=x)


@dataclass(frozen=True)
class PrefixCountTable:
    """Cumulative counts ``cum[t, j, k]`` of observations with sorted
    position <= t, group j and covariate k, for t in 0..n.

    Segment counts over sorted positions s..t (1-based, inclusive) are
    prefix differences, so any contiguous slice is counted in O(|Z||X|).
    """

    cum: np.ndarray  # (n+1, n_z_levels, n_x_levels) int64

    @property
    def n(self) -> int:
        return self.cum.shape[0] - 1

    def segment(self, s: int, t: int) -> np.ndarray:
        """Counts for sorted positions s..t, 1-based and inclusive."""
        if not 1 <= s <= t <= self.n:
            raise InputError(f"segment [{s}, {t}] out of range 1..{self.n}")
        return self.cum[t] - self.cum[s - 1]


def prefix_counts(d: SlicedDataset) -> PrefixCountTable:
    """Cumulative (position, group, covariate) count table for ``d``."""
    n, kj, kk = d.n, d.n_z_levels, d.n_x_levels
    onehot = np.zeros((n, kj, kk), dtype=np.int64)
    onehot[np.arange(n), d.z, d.x] = 1
    cum = np.zeros((n + 1, kj, kk), dtype=np.int64)
    np.cumsum(onehot, axis=0, out=cum[1:])
    return PrefixCountTable(cum=cum)


def encode_super_variable(codes, sizes) -> tuple[np.ndarray, int]:
    """Mixed-radix encoding of several categorical codes into one.

    ``codes[i]`` takes values in 0..sizes[i]-1; the first variable is the
    least-significant digit: ``c0 + sizes0*c1 + sizes0*sizes1*c2 + ...``.
    For two binary variables this is ``c0 + 2*c1``.  The map is a
    bijection onto 0..prod(sizes)-1.

    Returns the combined code array and the combined level count.
    """
    if len(codes) == 0:
        raise InputError("need at least one code array")
    if len(codes) != len(sizes):
        raise InputError("codes and sizes length mismatch")
    arrays = [np.asarray(c, dtype=np.int64) for c in codes]
    length = arrays[0].shape[0]
    out = np.zeros(length, dtype=np.int64)
    radix = 1
    for arr, size in zip(arrays, sizes):
        if arr.shape[0] != length:
            raise InputError("code arrays have mismatched lengths")
        if arr.size and (arr.min() < 0 or arr.max() >= size):
            raise InputError("code value out of declared range")
        out += radix * arr
        radix *= int(size)
    return out, radix


def _encode_labels(values: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Dense 0-based codes in first-appearance order, plus the label list."""
    table: dict[str, int] = {}
    codes = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        codes[i] = table.setdefault(v, len(table))
    return codes, tuple(table)


def _parse_response(values: list[str], column: str) -> np.ndarray:
    out = np.empty(len(values), dtype=np.float64)
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            raise InputError(f"response column {column!r} has non-numeric value {v!r}") from None
        if not math.isfinite(out[i]):
            raise InputError(f"response column {column!r} has non-finite value {v!r}")
    return out


def _column(rows, name: str) -> list[str]:
    if rows and name not in rows[0]:
        raise InputError(f"column {name!r} not found")
    out = []
    for i, row in enumerate(rows):
        if name not in row or row[name] is None or row[name] == "":
            raise InputError(f"row {i}: missing value for column {name!r}")
        out.append(str(row[name]))
    return out


def load_table(rows, response_col: str, covariate_cols, group_cols=()) -> SlicedDataset:
    """Build one dataset from tabular records (e.g. ``csv.DictReader`` rows).

    Several covariate columns (or several group columns) are combined
    into a single super variable via :func:`encode_super_variable`.
    Categorical labels get dense codes in first-appearance order; the
    label dictionaries ride along on the result for reporting.
    """
    rows = list(rows)
    if not rows:
        raise InputError("no data rows")
    if isinstance(covariate_cols, str):
        covariate_cols = [covariate_cols]
    if isinstance(group_cols, str):
        group_cols = [group_cols]
    if not covariate_cols:
        raise InputError("need at least one covariate column")

    y = _parse_response(_column(rows, response_col), response_col)

    def combined(cols):
        per_col = [_encode_labels(_column(rows, c)) for c in cols]
        codes, total = encode_super_variable(
            [c for c, _ in per_col], [len(lab) for _, lab in per_col]
        )
        if len(cols) == 1:
            return codes, total, per_col[0][1]
        labels = [""] * total
        radix = [len(lab) for _, lab in per_col]
        for v in range(total):
            parts, rem = [], v
            for (_, lab), r in zip(per_col, radix):
                parts.append(lab[rem % r])
                rem //= r
            labels[v] = ",".join(parts)
        return codes, total, tuple(labels)

    x, kx, x_labels = combined(covariate_cols)
    if kx < 2:
        raise DegenerateDataError(
            f"covariate {'+'.join(covariate_cols)} has fewer than 2 observed levels"
        )
    if group_cols:
        z, kz, z_labels = combined(group_cols)
    else:
        z, kz, z_labels = np.zeros(len(rows), dtype=np.int64), 1, None
    return SlicedDataset.from_values(
        y, x, z,
        n_x_levels=kx, n_z_levels=kz,
        x_labels=x_labels, z_labels=z_labels,
        name="+".join(covariate_cols),
    )


def load_columns(rows, response_col: str, covariate_cols) -> list[SlicedDataset]:
    """One dataset per covariate column, all sharing the same response ranking."""
    rows = list(rows)
    return [load_table(rows, response_col, [c]) for c in covariate_cols]


def read_delimited(path, delimiter: str | None = None):
    """Read a CSV/TSV file with a header row; returns (fieldnames, rows).

    The delimiter is inferred from the extension (``.tsv`` -> tab,
    anything else -> comma) unless given explicitly.
    """
    if delimiter is None:
        delimiter = "\t" if str(path).lower().endswith(".tsv") else ","
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        if not reader.fieldnames:
            raise InputError(f"{path}: empty file or missing header")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return reader.fieldnames, rows
