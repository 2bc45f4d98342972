"""Positivity, weight and covariate-balance checks for the participation model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import StudyDataset
from .errors import NoTargetUnits, ZeroVariance

SUMMARY_LEVELS = (0.0, 0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99, 1.0)
SUMMARY_NAMES = ("min", "p01", "p05", "p25", "p50", "p75", "p95", "p99", "max")
HISTOGRAM_BINS = 50


def quantile_summary(values) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("cannot summarise an empty group")
    q = np.quantile(v, SUMMARY_LEVELS)
    return {name: float(x) for name, x in zip(SUMMARY_NAMES, q)}


@dataclass
class DiagnosticsReport:
    weight_mean_ratio: float
    p_hat_summary_by_s: dict
    positivity_flag_count: int
    weight_summary: dict = field(default_factory=dict)
    balance: dict = field(default_factory=dict)
    threshold: float = 1e-3


def weight_mean_ratio(data: StudyDataset, p_hat) -> float:
    """Sum of participants' inverse odds of participation over the number of non-participants.

    Close to one when the participation model is adequate, since
    E[S (1 - p(X)) / p(X)] = Pr[S = 0].
    """
    p_hat = np.asarray(p_hat, dtype=float)
    n0 = int(np.count_nonzero(data.s == 0))
    if n0 == 0:
        raise NoTargetUnits("no non-participant (s=0) units")
    p1 = p_hat[data.s == 1]
    return float(np.sum((1.0 - p1) / p1) / n0)


def overlap_summary(p_hat, s, threshold: float = 1e-3) -> dict:
    """Quantiles of ``p_hat`` within each participation group.

    ``flagged`` counts non-participants with ``p_hat < threshold``.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    s = np.asarray(s)
    out = {}
    for group in (1, 0):
        vals = p_hat[s == group]
        if vals.size:
            out[f"s={group}"] = quantile_summary(vals)
    out["flagged"] = int(np.count_nonzero(p_hat[s == 0] < threshold))
    return out


def smd(data: StudyDataset, covariate: str, weights=None) -> float:
    """Standardised mean difference of one covariate, participants vs non-participants.

    The participant mean is weighted by ``weights`` (zero outside the arm of
    interest); with ``weights=None`` it is the plain mean over all
    participants. The denominator is the SD of the covariate in the whole
    unweighted sample, so pre- and post-weighting values share a scale.
    """
    x = data.column(covariate)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if not sd > 0:
        raise ZeroVariance(f"covariate {covariate!r} is constant")
    target_mean = float(x[data.s == 0].mean())
    if weights is None:
        trial_mean = float(x[data.s == 1].mean())
    else:
        w = np.asarray(weights, dtype=float)
        trial_mean = float(np.dot(w, x) / w.sum())
    return (trial_mean - target_mean) / sd


def balance_table(
    data: StudyDataset,
    weights: Mapping,
    covariates: Sequence[str],
) -> dict:
    """Per covariate and arm: SMD before and after inverse-odds weighting."""
    table = {}
    for cov in covariates:
        row = {}
        for arm, ws in weights.items():
            w = ws.w if hasattr(ws, "w") else np.asarray(ws, dtype=float)
            in_arm = data.in_arm(arm).astype(float)
            row[str(arm)] = {"before": smd(data, cov, in_arm), "after": smd(data, cov, w)}
        table[cov] = row
    return table


def diagnose(
    data: StudyDataset,
    p_hat,
    weights: Mapping | None = None,
    covariates: Sequence[str] = (),
    threshold: float = 1e-3,
) -> DiagnosticsReport:
    overlap = overlap_summary(p_hat, data.s, threshold)
    flagged = overlap.pop("flagged")
    weights = weights or {}
    weight_summary = {}
    for arm, ws in weights.items():
        pos = ws.w[ws.w > 0]
        if pos.size:
            weight_summary[str(arm)] = quantile_summary(pos)
    balance = {}
    if weights:
        usable = [c for c in covariates if np.std(data.column(c)) > 0]
        balance = balance_table(data, weights, usable)
    return DiagnosticsReport(
        weight_mean_ratio=weight_mean_ratio(data, p_hat),
        p_hat_summary_by_s=overlap,
        positivity_flag_count=flagged,
        weight_summary=weight_summary,
        balance=balance,
        threshold=threshold,
    )


def histogram_rows(p_hat, s, bins: int = HISTOGRAM_BINS) -> list[dict]:
    """Counts of ``p_hat`` per participation group over equal-width bins on [0, 1]."""
    p_hat = np.asarray(p_hat, dtype=float)
    s = np.asarray(s)
    edges = np.linspace(0.0, 1.0, bins + 1)
    c1, _ = np.histogram(p_hat[s == 1], bins=edges)
    c0, _ = np.histogram(p_hat[s == 0], bins=edges)
    return [
        {"bin_lower": float(edges[i]), "bin_upper": float(edges[i + 1]),
         "count_s1": int(c1[i]), "count_s0": int(c0[i])}
        for i in range(bins)
    ]


def write_histogram_csv(p_hat, s, path) -> None:
    from .ingest import atomic_write

    rows = histogram_rows(p_hat, s)
    lines = ["bin_lower,bin_upper,count_s1,count_s0"]
    lines += [f"{r['bin_lower']!r},{r['bin_upper']!r},{r['count_s1']},{r['count_s0']}" for r in rows]
    atomic_write(path, "\n".join(lines) + "\n")
