"""Unit-level study data for a trial plus a sample of non-participants."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Literal, Sequence

import numpy as np

from .errors import DimensionMismatch, NoTargetUnits, OneClassOnly, SchemaViolation

DesignKind = Literal["nested", "non_nested"]


@dataclass(frozen=True, eq=False)
class StudyDataset:
    """Participation, treatment, outcome and covariates for every unit.

    ``a`` holds integer codes into ``treatment_labels`` and is ``-1`` for
    non-participants; ``y`` is NaN for non-participants. Rows follow the
    observed-data layout ``(X, S, S*A, S*Y)``.
    """

    s: np.ndarray
    a: np.ndarray
    y: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]
    treatment_labels: tuple[Hashable, ...]
    design_kind: DesignKind = "nested"
    row_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        s = np.asarray(self.s)
        n = s.shape[0]
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1)
        for name, arr in (("a", self.a), ("y", self.y)):
            if np.shape(arr) != (n,):
                raise DimensionMismatch(f"{name} has shape {np.shape(arr)}, expected ({n},)")
        if x.shape[0] != n or x.shape[1] != len(self.covariate_names):
            raise DimensionMismatch(
                f"x has shape {x.shape}, expected ({n}, {len(self.covariate_names)})"
            )
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise SchemaViolation("duplicate covariate names")
        if self.design_kind not in ("nested", "non_nested"):
            raise SchemaViolation(f"unknown design kind {self.design_kind!r}")
        if not np.all((s == 0) | (s == 1)):
            raise SchemaViolation("participation indicator must be 0/1")
        a = np.asarray(self.a, dtype=np.int64)
        y = np.asarray(self.y, dtype=float)
        trial = s == 1
        if np.any(a[~trial] != -1) or np.any(~np.isnan(y[~trial])):
            bad = np.flatnonzero(~trial & ((a != -1) | ~np.isnan(y)))[0]
            raise SchemaViolation(f"non-participant row {self._label(bad)} carries treatment or outcome")
        k = len(self.treatment_labels)
        bad_a = trial & ((a < 0) | (a >= k))
        bad_y = trial & ~np.isfinite(y)
        if bad_a.any() or bad_y.any():
            bad = np.flatnonzero(bad_a | bad_y)[0]
            raise SchemaViolation(f"trial row {self._label(bad)} lacks a valid treatment or outcome")
        object.__setattr__(self, "s", s.astype(np.int64))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "treatment_labels", tuple(self.treatment_labels))

    def _label(self, i: int):
        return self.row_ids[i] if self.row_ids is not None else i

    @classmethod
    def from_arrays(
        cls,
        s,
        a,
        y,
        x,
        covariate_names: Sequence[str] | None = None,
        treatment_labels: Sequence[Hashable] | None = None,
        design_kind: DesignKind = "nested",
    ) -> "StudyDataset":
        """Build a dataset from raw labels.

        ``a`` and ``y`` may hold anything for non-participants (None, NaN);
        those entries are discarded.
        """
        s = np.asarray(s).astype(np.int64)
        n = s.shape[0]
        x = np.asarray(x, dtype=float).reshape(n, -1)
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(x.shape[1])]
        raw_a = list(a)
        if treatment_labels is None:
            treatment_labels = sorted({raw_a[i] for i in range(n) if s[i] == 1})
        index = {lab: k for k, lab in enumerate(treatment_labels)}
        codes = np.full(n, -1, dtype=np.int64)
        yv = np.full(n, np.nan)
        y = list(y)
        for i in range(n):
            if s[i] == 1:
                if raw_a[i] not in index:
                    raise SchemaViolation(f"row {i}: unknown treatment {raw_a[i]!r}")
                codes[i] = index[raw_a[i]]
                yv[i] = float(y[i])
        return cls(s, codes, yv, x, tuple(covariate_names), tuple(treatment_labels), design_kind)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def trial(self) -> np.ndarray:
        return self.s == 1

    @property
    def target(self) -> np.ndarray:
        return self.s == 0

    def arm_code(self, arm: Hashable) -> int:
        try:
            return self.treatment_labels.index(arm)
        except ValueError:
            # labels from CSV are strings; configs may give numbers
            for k, lab in enumerate(self.treatment_labels):
                if str(lab) == str(arm):
                    return k
            raise OneClassOnly(f"unknown treatment arm {arm!r}") from None

    def in_arm(self, arm: Hashable) -> np.ndarray:
        """Boolean mask of trial participants assigned to ``arm``."""
        return self.a == self.arm_code(arm)

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.covariate_names.index(name)]

    def check_estimable(self, arms: Sequence[Hashable] | None = None) -> None:
        if not self.target.any():
            raise NoTargetUnits("dataset has no non-participant (s=0) units")
        if not self.trial.any():
            raise OneClassOnly("dataset has no trial participants (s=1)")
        for arm in arms if arms is not None else self.treatment_labels:
            if not self.in_arm(arm).any():
                raise OneClassOnly(f"treatment arm {arm!r} has no trial participants")

    def take(self, idx) -> "StudyDataset":
        """Rows ``idx`` (with repetition allowed) as a new dataset."""
        idx = np.asarray(idx)
        return StudyDataset(
            self.s[idx],
            self.a[idx],
            self.y[idx],
            self.x[idx],
            self.covariate_names,
            self.treatment_labels,
            self.design_kind,
            None if self.row_ids is None else self.row_ids[idx],
        )
