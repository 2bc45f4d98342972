"""CSV ingestion and JSON report serialization."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .data import StudyDataset
from .errors import EmptyAfterFiltering, SchemaViolation
from .estimators import ESTIMATORS, EstimateReport

MISSING_TOKENS = frozenset({"", "NA", "na", "NaN", "nan", "."})


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles in a composite CSV file.

    ``categorical_columns`` maps a column to its levels; the first level is
    the reference and each other level becomes an indicator column named
    ``"<column>_<level>"``.
    """

    s_column: str = "s"
    a_column: str = "a"
    y_column: str = "y"
    covariate_columns: tuple[str, ...] = ()
    categorical_columns: Mapping[str, Sequence[str]] = field(default_factory=dict)
    design_kind: str = "nested"
    treatment_labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        roles = (self.s_column, self.a_column, self.y_column)
        if len(set(roles)) != 3:
            raise SchemaViolation("s, a and y columns must be distinct")
        if set(roles) & set(self.covariate_columns):
            raise SchemaViolation("s, a and y columns cannot also be covariates")
        if len(set(self.covariate_columns)) != len(self.covariate_columns):
            raise SchemaViolation("duplicate covariate columns")
        for col, levels in self.categorical_columns.items():
            if col not in self.covariate_columns:
                raise SchemaViolation(f"categorical column {col!r} is not a covariate")
            if len(levels) < 2 or len(set(levels)) != len(levels):
                raise SchemaViolation(f"categorical column {col!r} needs at least two distinct levels")
        if self.design_kind not in ("nested", "non_nested"):
            raise SchemaViolation(f"unknown design kind {self.design_kind!r}")

    def expanded_names(self) -> tuple[str, ...]:
        names = []
        for col in self.covariate_columns:
            if col in self.categorical_columns:
                names += [f"{col}_{lev}" for lev in list(self.categorical_columns[col])[1:]]
            else:
                names.append(col)
        return tuple(names)


@dataclass
class IngestionLog:
    rows_read: int
    rows_retained: int
    rows_dropped: int
    dropped_by_column: dict = field(default_factory=dict)


def _missing(value: str | None) -> bool:
    return value is None or value.strip() in MISSING_TOKENS


def read_dataset(path, schema: DatasetSchema) -> tuple[StudyDataset, IngestionLog]:
    """Read and validate a CSV file, keeping complete cases only.

    Treatment and outcome must be blank exactly for non-participants; any
    other pattern is a ``SchemaViolation`` naming the line. Rows with a
    missing covariate are dropped and counted.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.s_column, schema.a_column, schema.y_column, *schema.covariate_columns]
        absent = [c for c in needed if c not in header]
        if absent:
            raise SchemaViolation(f"{path}: header lacks columns {absent}")
        s_list, a_list, y_list, x_rows, line_nos = [], [], [], [], []
        dropped: dict[str, int] = {}
        n_read = 0
        for row in reader:
            n_read += 1
            line = reader.line_num
            s_raw = (row[schema.s_column] or "").strip()
            if s_raw not in ("0", "1", "0.0", "1.0"):
                raise SchemaViolation(f"line {line}: participation must be 0 or 1, got {s_raw!r}")
            s = int(float(s_raw))
            a_raw, y_raw = row[schema.a_column], row[schema.y_column]
            if s == 0 and not (_missing(a_raw) and _missing(y_raw)):
                raise SchemaViolation(f"line {line}: non-participant carries treatment or outcome")
            if s == 1 and (_missing(a_raw) or _missing(y_raw)):
                raise SchemaViolation(f"line {line}: participant lacks treatment or outcome")
            y = math.nan
            if s == 1:
                try:
                    y = float(y_raw)
                except ValueError:
                    raise SchemaViolation(f"line {line}: outcome {y_raw!r} is not numeric") from None
            xs, missing_col = [], None
            for col in schema.covariate_columns:
                raw = row[col]
                if _missing(raw):
                    missing_col = missing_col or col
                    continue
                raw = raw.strip()
                if col in schema.categorical_columns:
                    levels = [str(v) for v in schema.categorical_columns[col]]
                    if raw not in levels:
                        raise SchemaViolation(f"line {line}: {col}={raw!r} is not a declared level")
                    xs += [1.0 if raw == lev else 0.0 for lev in levels[1:]]
                else:
                    try:
                        xs.append(float(raw))
                    except ValueError:
                        raise SchemaViolation(f"line {line}: {col}={raw!r} is not numeric") from None
            if missing_col is not None:
                dropped[missing_col] = dropped.get(missing_col, 0) + 1
                continue
            s_list.append(s)
            a_list.append(a_raw.strip() if s == 1 else None)
            y_list.append(y)
            x_rows.append(xs)
            line_nos.append(line)

    retained = len(s_list)
    if retained == 0:
        raise EmptyAfterFiltering(f"{path}: no complete rows")
    labels = schema.treatment_labels
    if labels is None:
        labels = tuple(sorted({a for a in a_list if a is not None}))
    names = schema.expanded_names()
    x = np.array(x_rows, dtype=float).reshape(retained, len(names))
    data = StudyDataset.from_arrays(s_list, a_list, y_list, x, names, labels, schema.design_kind)
    data = StudyDataset(data.s, data.a, data.y, data.x, data.covariate_names,
                        data.treatment_labels, data.design_kind, np.array(line_nos))
    log = IngestionLog(n_read, retained, n_read - retained, dropped)
    return data, log


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _interval(report: EstimateReport, name: str):
    lo, hi = report.intervals.get(name, (None, None))
    return [_num(lo), _num(hi)] if lo is not None else None


def diagnostics_to_dict(diag) -> Optional[dict]:
    if diag is None:
        return None
    return {
        "weight_mean_ratio": _num(diag.weight_mean_ratio),
        "positivity_threshold": diag.threshold,
        "positivity_flag_count": diag.positivity_flag_count,
        "p_hat_summary_by_s": diag.p_hat_summary_by_s,
        "weight_summary": diag.weight_summary,
        "balance": diag.balance,
    }


def report_to_dict(report: EstimateReport, config: Optional[dict] = None) -> dict:
    """Plain-data view of a report with a fixed field order."""
    estimates = {}
    for arm in report.arms:
        per = {}
        for est in report.estimators:
            name = f"mu[{arm}].{est}"
            per[est] = {"estimate": _num(report.estimates[(arm, est)]), "ci": _interval(report, name)}
        estimates[str(arm)] = per
    contrasts = {}
    for a, b in report.contrast_pairs:
        per = {}
        for est in report.estimators:
            c = report.contrasts[((a, b), est)]
            per[est] = {
                "difference": _num(c.difference),
                "difference_ci": _interval(report, f"diff[{a} vs {b}].{est}"),
                "ratio": _num(c.ratio),
                "ratio_ci": _interval(report, f"ratio[{a} vs {b}].{est}"),
            }
        contrasts[f"{a} vs {b}"] = per
    return {
        "tool": {"name": "trialtransport", "version": __version__},
        "estimators": list(report.estimators),
        "estimates": estimates,
        "contrasts": contrasts,
        "bootstrap": report.bootstrap,
        "truncation": {str(k): _num(v) for k, v in report.truncation.items()} or None,
        "diagnostics": diagnostics_to_dict(report.diagnostics),
        "warnings": list(report.warnings),
        "config": config if config is not None else report.config,
    }


def dumps_report(doc: dict) -> str:
    # float repr is the shortest round-tripping form: full precision, no rounding
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_report(report: EstimateReport | dict, path, config: Optional[dict] = None) -> None:
    doc = report if isinstance(report, dict) else report_to_dict(report, config)
    atomic_write(path, dumps_report(doc))


def read_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


__all__ = [
    "DatasetSchema", "IngestionLog", "read_dataset", "write_report", "read_report",
    "report_to_dict", "dumps_report", "atomic_write", "ESTIMATORS",
]
