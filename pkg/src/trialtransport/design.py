"""Model specifications and their expansion into design matrices.

A specification is an ordered list of terms (main effects, pairwise
products, restricted cubic splines) plus an optional intercept. Spline knots
are placed at fixed quantiles of the covariate and are meant to be chosen
once on the full analysis data, then reused for resamples and predictions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .data import StudyDataset
from .errors import ConfigError, MissingValue, TooFewDistinctValues, UnknownColumn

# Harrell's default knot quantiles for restricted cubic splines.
KNOT_QUANTILES = {
    3: (0.10, 0.50, 0.90),
    4: (0.05, 0.35, 0.65, 0.95),
    5: (0.05, 0.275, 0.50, 0.725, 0.95),
    6: (0.05, 0.23, 0.41, 0.59, 0.77, 0.95),
    7: (0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975),
}


@dataclass(frozen=True)
class MainEffect:
    column: str

    @property
    def width(self) -> int:
        return 1

    def columns(self):
        return (self.column,)

    def __str__(self):
        return self.column


@dataclass(frozen=True)
class Interaction:
    left: str
    right: str

    @property
    def width(self) -> int:
        return 1

    def columns(self):
        return (self.left, self.right)

    def __str__(self):
        return f"{self.left}*{self.right}"


@dataclass(frozen=True)
class Spline:
    column: str
    n_knots: int = 5

    def __post_init__(self):
        if self.n_knots not in KNOT_QUANTILES:
            raise ConfigError(f"spline knots must be one of 3..7, got {self.n_knots}")

    @property
    def width(self) -> int:
        return self.n_knots - 1

    def columns(self):
        return (self.column,)

    def __str__(self):
        return f"{self.column}:rcs{self.n_knots}"


Term = Union[MainEffect, Interaction, Spline]


def parse_term(text: str) -> Term:
    """Parse ``"age"``, ``"age*angina"`` or ``"age:rcs5"``."""
    text = text.strip()
    if "*" in text:
        left, _, right = text.partition("*")
        if not left.strip() or not right.strip() or "*" in right:
            raise ConfigError(f"bad interaction term {text!r}")
        return Interaction(left.strip(), right.strip())
    if ":" in text:
        col, _, kind = text.partition(":")
        if not kind.startswith("rcs") or not kind[3:].isdigit():
            raise ConfigError(f"bad spline term {text!r}; expected e.g. 'age:rcs5'")
        return Spline(col.strip(), int(kind[3:]))
    if not text:
        raise ConfigError("empty model term")
    return MainEffect(text)


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[Term, ...] = ()
    intercept: bool = True

    @classmethod
    def parse(cls, terms: Iterable[str], intercept: bool = True) -> "ModelSpec":
        return cls(tuple(parse_term(t) for t in terms), intercept)

    @classmethod
    def main_effects(cls, columns: Iterable[str]) -> "ModelSpec":
        return cls(tuple(MainEffect(c) for c in columns))

    @property
    def width(self) -> int:
        return int(self.intercept) + sum(t.width for t in self.terms)

    def referenced_columns(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms:
            for c in t.columns():
                seen.setdefault(c, None)
        return tuple(seen)

    def validate(self, covariate_names: Sequence[str]) -> None:
        for c in self.referenced_columns():
            if c not in covariate_names:
                raise UnknownColumn(f"model term references unknown column {c!r}")

    def to_strings(self) -> list[str]:
        return [str(t) for t in self.terms]


@dataclass(frozen=True, eq=False)
class KnotSet:
    column: str
    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 3:
            raise ValueError("a knot set needs at least 3 knots")
        if not np.all(np.diff(k) > 0):
            raise ValueError(f"knots for {self.column!r} are not strictly increasing")
        object.__setattr__(self, "knots", k)


def choose_knots(x, k: int = 5, column: str = "x") -> KnotSet:
    """Knots at Harrell's default quantiles (R ``quantile`` type 7)."""
    if k not in KNOT_QUANTILES:
        raise ConfigError(f"unsupported number of knots {k}")
    x = np.asarray(x, dtype=float)
    if x.size < k or np.unique(x).size < k:
        raise TooFewDistinctValues(
            f"{column!r} has {np.unique(x).size} distinct values; {k} knots need at least {k}"
        )
    knots = np.quantile(x, KNOT_QUANTILES[k])
    if not np.all(np.diff(knots) > 0):
        raise TooFewDistinctValues(
            f"quantile knots for {column!r} are tied; too few distinct values for {k} knots"
        )
    return KnotSet(column, knots)


def rcs_basis(x, knots: KnotSet | np.ndarray) -> np.ndarray:
    """Restricted cubic spline basis in truncated-power form.

    Returns ``k - 1`` columns: ``x`` itself followed by ``k - 2`` cubic terms
    that are linear beyond the outer knots. The cubic terms are divided by
    ``(t_k - t_1)**2`` (Harrell's ``norm=2``) so they stay on the scale of x.
    """
    t = knots.knots if isinstance(knots, KnotSet) else np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    k = t.size
    out = np.empty((x.size, k - 1))
    out[:, 0] = x
    tk, tk1 = t[-1], t[-2]
    scale = (tk - t[0]) ** 2
    cube_k = np.maximum(x - tk, 0.0) ** 3
    cube_k1 = np.maximum(x - tk1, 0.0) ** 3
    for j in range(k - 2):
        tj = t[j]
        out[:, j + 1] = (
            np.maximum(x - tj, 0.0) ** 3
            - cube_k1 * (tk - tj) / (tk - tk1)
            + cube_k * (tk1 - tj) / (tk - tk1)
        ) / scale
    return out


KnotBank = Mapping[tuple[str, int], KnotSet]


def fit_knots(specs: Iterable[ModelSpec], data: StudyDataset) -> dict[tuple[str, int], KnotSet]:
    """Choose knots for every spline term in ``specs`` on all rows of ``data``."""
    bank: dict[tuple[str, int], KnotSet] = {}
    for spec in specs:
        for term in spec.terms:
            if isinstance(term, Spline) and (term.column, term.n_knots) not in bank:
                _require(data, term.column)
                bank[(term.column, term.n_knots)] = choose_knots(
                    data.column(term.column), term.n_knots, term.column
                )
    return bank


def _require(data: StudyDataset, column: str) -> np.ndarray:
    if column not in data.covariate_names:
        raise UnknownColumn(f"model term references unknown column {column!r}")
    values = data.column(column)
    if np.isnan(values).any():
        row = int(np.flatnonzero(np.isnan(values))[0])
        raise MissingValue(f"column {column!r} is missing in row {data._label(row)}")
    return values


def build_design(
    spec: ModelSpec,
    data: StudyDataset,
    knot_bank: KnotBank | Sequence[KnotSet] | None = None,
) -> np.ndarray:
    """Expand ``spec`` on every row of ``data``.

    Columns: intercept (if any), then each term in order. Spline terms take
    their knots from ``knot_bank`` when present there, else from ``data``.
    """
    if knot_bank is not None and not isinstance(knot_bank, Mapping):
        knot_bank = {(ks.column, ks.knots.size): ks for ks in knot_bank}
    blocks = []
    if spec.intercept:
        blocks.append(np.ones((data.n, 1)))
    for term in spec.terms:
        if isinstance(term, MainEffect):
            blocks.append(_require(data, term.column)[:, None])
        elif isinstance(term, Interaction):
            blocks.append((_require(data, term.left) * _require(data, term.right))[:, None])
        else:
            x = _require(data, term.column)
            ks = None if knot_bank is None else knot_bank.get((term.column, term.n_knots))
            if ks is None:
                ks = choose_knots(x, term.n_knots, term.column)
            blocks.append(rcs_basis(x, ks))
    if not blocks:
        raise ConfigError("model specification has no columns")
    return np.hstack(blocks)
