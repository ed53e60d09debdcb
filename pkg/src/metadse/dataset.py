"""Labeled design-point datasets as canonical CSV files.

One file per workload: header `workload,<param names...>,ipc,power`, rows in
encoded-point lexicographic order, numeric cells at 17 significant digits
(exact float roundtrip), categorical cells as label text. Values must match
the declared space's candidates exactly; no snapping tolerance.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .design_space import (
    KIND_CATEGORICAL,
    DesignPoint,
    DesignSpace,
    encode_many,
    format_value,
)
from .errors import DuplicateError, ParseError, SchemaError, SourceExhausted
from .tasks import Sample


class DatasetSource:
    """Immutable WorkloadSource over a finite list of labeled samples."""

    def __init__(self, workload_id: str, space: DesignSpace, samples):
        self.workload_id = workload_id
        self.space = space
        self.samples = list(samples)
        pts = [s.point.indices for s in self.samples]
        if len(set(pts)) != len(pts):
            raise DuplicateError(f"{workload_id}: duplicate design points")

    def __len__(self) -> int:
        return len(self.samples)

    def draw(self, rng: np.random.Generator, n: int) -> list[Sample]:
        if n > len(self.samples):
            raise SourceExhausted(
                f"{self.workload_id}: task needs {n} distinct points, dataset has {len(self.samples)}")
        idx = rng.choice(len(self.samples), size=n, replace=False)
        return [self.samples[i] for i in idx]

    def probe_labels(self, points, seed: int) -> np.ndarray:
        # finite datasets cannot be probed at arbitrary points; use stored labels
        return np.asarray([s.ipc for s in self.samples])


def _candidate_lookup(space: DesignSpace):
    tables = []
    for spec in space.params:
        if spec.kind == KIND_CATEGORICAL:
            tables.append({label: i for i, label in enumerate(spec.labels)})
        else:
            tables.append({float(v): i for i, v in enumerate(spec.candidates)})
    return tables


def load(path, space: DesignSpace) -> DatasetSource:
    """Parse and validate a dataset file against the space; exact value matching."""
    tables = _candidate_lookup(space)
    expected_header = ["workload", *space.names, "ipc", "power"]
    samples = []
    seen: set[tuple[int, ...]] = set()
    workload_id = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header != expected_header:
            raise SchemaError(f"{path}: header {header!r} does not match the space "
                              f"(expected {expected_header!r})")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected_header):
                raise ParseError(f"{path}:{lineno}: expected {len(expected_header)} columns, "
                                 f"got {len(row)}")
            wid = row[0]
            if workload_id is None:
                workload_id = wid
            elif wid != workload_id:
                raise SchemaError(f"{path}:{lineno}: mixed workload ids "
                                  f"({workload_id!r} vs {wid!r})")
            indices = []
            for col, (cell, spec, table) in enumerate(zip(row[1:], space.params, tables), start=2):
                if spec.kind == KIND_CATEGORICAL:
                    key = cell
                else:
                    try:
                        key = float(cell)
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: column {spec.name!r}: "
                                         f"malformed number {cell!r}") from None
                if key not in table:
                    raise SchemaError(f"{path}:{lineno}: column {spec.name!r}: value {cell!r} "
                                      f"is not a candidate")
                indices.append(table[key])
            point = DesignPoint(tuple(indices))
            if point.indices in seen:
                raise DuplicateError(f"{path}:{lineno}: duplicate design point")
            seen.add(point.indices)
            try:
                ipc, power = float(row[-2]), float(row[-1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: malformed label") from None
            if not (np.isfinite(ipc) and ipc > 0 and np.isfinite(power) and power > 0):
                raise SchemaError(f"{path}:{lineno}: labels must be finite and positive")
            features = encode_many([point], space)[0]
            samples.append(Sample(point, features, ipc, power))
    if workload_id is None:
        # header-only file: the id can only come from the file name
        workload_id = Path(path).stem
    return DatasetSource(workload_id, space, samples)


def save(source: DatasetSource, path) -> None:
    """Canonical CSV: sorted rows, 17-significant-digit floats, LF newlines."""
    space = source.space
    rows = sorted(source.samples, key=lambda s: s.point.indices)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["workload", *space.names, "ipc", "power"])
    for s in rows:
        cells = [source.workload_id]
        cells += [spec.value_repr(i) for spec, i in zip(space.params, s.point.indices)]
        cells += [format_value(s.ipc), format_value(s.power)]
        writer.writerow(cells)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


def empty_source(workload_id: str, space: DesignSpace) -> DatasetSource:
    return DatasetSource(workload_id, space, [])


def source_from_samples(workload_id: str, space: DesignSpace, samples) -> DatasetSource:
    return DatasetSource(workload_id, space, samples)
