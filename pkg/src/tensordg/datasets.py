"""CSV serialization for grouped regression data.

File layout (header row required): one column per group axis, then the
response, then the feature columns. Group levels may be integer codes or
strings; strings are mapped to 1-based codes in order of first
appearance and the mapping is returned alongside the dataset. Floats are
written with ``repr`` so a write/ingest roundtrip reproduces the exact
binary values.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .regression import GroupedDataset

__all__ = ["IngestResult", "write_csv", "ingest_csv"]


@dataclass(frozen=True)
class IngestResult:
    """Parsed grouped data plus the inferred group-space metadata."""

    dataset: GroupedDataset
    space: tuple
    mappings: tuple   # per group column: {original level: 1-based code}
    counts: dict      # group tuple -> sample count


def write_csv(path, ds, group_names=None, feature_names=None,
              response_name="y"):
    """Write a grouped dataset in the standard column layout."""
    groups = sorted(ds.groups)
    if not groups:
        raise DimensionError("empty dataset")
    q = len(groups[0])
    p = ds.p
    if group_names is None:
        group_names = [f"g{t}" for t in range(1, q + 1)]
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(1, p + 1)]
    if len(group_names) != q or len(feature_names) != p:
        raise DimensionError("column name lists do not match the data")
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(group_names) + [response_name]
                        + list(feature_names))
        for g in groups:
            X, y = ds.groups[g]
            for i in range(y.size):
                writer.writerow([str(int(level)) for level in g]
                                + [repr(float(y[i]))]
                                + [repr(float(v)) for v in X[i]])


def _code_columns(rows, col_idx):
    """Map one raw group column to 1-based codes.

    Integer-coded columns (all values parse as positive integers) keep
    their codes; anything else is treated as labels and coded by first
    appearance.
    """
    raw = [row[col_idx] for row in rows]
    try:
        codes = [int(v) for v in raw]
        if all(c >= 1 for c in codes):
            return codes, {str(c): c for c in sorted(set(codes))}
    except ValueError:
        pass
    mapping = {}
    codes = []
    for v in raw:
        if v not in mapping:
            mapping[v] = len(mapping) + 1
        codes.append(mapping[v])
    return codes, mapping


def ingest_csv(path, group_cols=None, response_col=None, feature_cols=None):
    """Parse a grouped-data CSV into a dataset plus group-space metadata.

    Column roles are given by header names; when omitted they default to
    the writer's layout (g1..gq, then the response, then the rest).
    Returns an IngestResult with the dataset, the inferred space (max
    code per group axis), the per-axis level mappings, and per-group
    sample counts.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        table = [row for row in reader if row]
    if not table:
        raise DimensionError(f"{path}: empty file")
    header, rows = table[0], table[1:]
    if not rows:
        raise DimensionError(f"{path}: no data rows")
    width = len(header)
    for i, row in enumerate(rows, start=2):
        if len(row) != width:
            raise DimensionError(
                f"{path}: row {i} has {len(row)} fields, expected {width}")

    if group_cols is None:
        group_cols = [name for name in header
                      if name.startswith("g") and name[1:].isdigit()]
        if not group_cols:
            raise DimensionError(f"{path}: no g1..gq group columns found")
    missing = [c for c in list(group_cols)
               + ([response_col] if response_col else [])
               + list(feature_cols or []) if c and c not in header]
    if missing:
        raise DimensionError(f"{path}: columns {missing} not in header")
    if response_col is None:
        after = [name for name in header if name not in group_cols]
        if not after:
            raise DimensionError(f"{path}: no response column")
        response_col = "y" if "y" in after else after[0]
    if feature_cols is None:
        feature_cols = [name for name in header
                        if name not in group_cols and name != response_col]
    if not feature_cols:
        raise DimensionError(f"{path}: no feature columns")

    col_of = {name: header.index(name) for name in header}
    codes_per_axis, mappings = [], []
    for name in group_cols:
        codes, mapping = _code_columns(rows, col_of[name])
        codes_per_axis.append(codes)
        mappings.append(mapping)
    space = tuple(max(codes) for codes in codes_per_axis)

    def parse(row, name, line):
        try:
            return float(row[col_of[name]])
        except ValueError:
            raise DimensionError(
                f"{path}: non-numeric value {row[col_of[name]]!r} in "
                f"column {name}, row {line}") from None

    bucket_x, bucket_y = {}, {}
    for i, row in enumerate(rows):
        g = tuple(codes[i] for codes in codes_per_axis)
        bucket_x.setdefault(g, []).append(
            [parse(row, name, i + 2) for name in feature_cols])
        bucket_y.setdefault(g, []).append(parse(row, response_col, i + 2))
    groups = {g: (np.array(bucket_x[g]), np.array(bucket_y[g]))
              for g in sorted(bucket_x)}
    ds = GroupedDataset(groups)
    counts = {g: y.size for g, (_, y) in ds.groups.items()}
    return IngestResult(ds, space, tuple(mappings), counts)
