"""Nonparametric bootstrap percentile intervals.

Each replicate resamples units, refits every nuisance model with the spline
knots frozen from the full data, and reruns the estimators. Replicates that
fail numerically are counted and skipped; too many failures is an error.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ._pool import map_replicates, replicate_rng
from .data import StudyDataset
from .design import KnotBank, fit_knots
from .errors import ConfigError, TooManyFailures, TransportError
from .estimators import AnalysisConfig, EstimateReport, analyze

Scheme = Literal["resample_cohort", "resample_within_s"]


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    seed: int = 0
    scheme: Optional[Scheme] = None
    levels: tuple[float, float] = (0.025, 0.975)
    max_failure_fraction: float = 0.01

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("bootstrap needs at least one replicate")
        lo, hi = self.levels
        if not (0.0 < lo < hi < 1.0):
            raise ConfigError(f"percentile levels must satisfy 0 < lower < upper < 1, got {self.levels}")
        if self.scheme not in (None, "resample_cohort", "resample_within_s"):
            raise ConfigError(f"unknown resampling scheme {self.scheme!r}")
        if not 0.0 <= self.max_failure_fraction < 1.0:
            raise ConfigError("max_failure_fraction must be in [0, 1)")

    def resolved_scheme(self, data: StudyDataset) -> str:
        if self.scheme is not None:
            return self.scheme
        # sample sizes are fixed by design when the target sample is drawn separately
        return "resample_within_s" if data.design_kind == "non_nested" else "resample_cohort"


@dataclass
class BootstrapResult:
    intervals: dict
    failures: int
    replicates: int
    missing: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict, repr=False)
    scheme: str = "resample_cohort"
    seed: int = 0

    @property
    def successes(self) -> int:
        return self.replicates - self.failures


def resample_indices(data: StudyDataset, scheme: str, rng: np.random.Generator) -> np.ndarray:
    if scheme == "resample_cohort":
        return rng.integers(0, data.n, data.n)
    trial = np.flatnonzero(data.s == 1)
    target = np.flatnonzero(data.s == 0)
    return np.concatenate([
        trial[rng.integers(0, trial.size, trial.size)],
        target[rng.integers(0, target.size, target.size)],
    ])


def _one_replicate(r, data, config, knot_bank, seed, scheme):
    rng = replicate_rng(seed, r)
    sample = data.take(resample_indices(data, scheme, rng))
    try:
        rep = analyze(sample, config, knot_bank, with_diagnostics=False)
    except (TransportError, np.linalg.LinAlgError, FloatingPointError):
        return None
    return rep.quantities()


def bootstrap(
    data: StudyDataset,
    config: AnalysisConfig,
    boot: BootstrapConfig,
    knot_bank: KnotBank | None = None,
    workers: int | None = None,
) -> BootstrapResult:
    """Percentile confidence intervals for every estimate and contrast."""
    if knot_bank is None:
        knot_bank = fit_knots(config.specs(), data)
    scheme = boot.resolved_scheme(data)
    func = functools.partial(
        _one_replicate, data=data, config=config, knot_bank=knot_bank,
        seed=boot.seed, scheme=scheme,
    )
    results = map_replicates(func, boot.replicates, workers)
    failures = sum(r is None for r in results)
    if failures > boot.max_failure_fraction * boot.replicates:
        raise TooManyFailures(
            f"{failures} of {boot.replicates} bootstrap replicates failed "
            f"(limit {boot.max_failure_fraction:.1%})"
        )
    ok = [r for r in results if r is not None]
    names = list(ok[0]) if ok else []
    intervals, missing, values = {}, {}, {}
    lo, hi = boot.levels
    for name in names:
        vals = np.array([r[name] for r in ok if r.get(name) is not None], dtype=float)
        missing[name] = len(ok) - vals.size
        # sorted so aggregation does not depend on replicate order
        vals.sort()
        values[name] = vals
        if vals.size:
            ql, qh = np.quantile(vals, [lo, hi])
            intervals[name] = (float(ql), float(qh))
        else:
            intervals[name] = (None, None)
    return BootstrapResult(intervals, failures, boot.replicates, missing, values, scheme, boot.seed)


def attach_intervals(report: EstimateReport, result: BootstrapResult) -> EstimateReport:
    report.intervals = dict(result.intervals)
    report.bootstrap = {
        "replicates": result.replicates,
        "failures": result.failures,
        "scheme": result.scheme,
        "seed": result.seed,
    }
    return report
