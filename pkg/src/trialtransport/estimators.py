"""Estimators of potential-outcome means in the non-participant population.

Every estimator targets ``mu(a) = E[ E[Y | X, S=1, A=a] | S=0 ]``. They are
built from three nuisance pieces:

* ``p_hat``: fitted probability of trial participation, for every unit;
* ``e_hat``: probability of the assigned arm among participants (estimated
  or known by design);
* ``g_hat``: predictions from an outcome model fit in one arm of the trial.

Inverse-odds weights ``w = (1 - p) / (p * e)`` are nonzero only for trial
participants in the arm being estimated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Hashable, Literal, Mapping, Optional, Sequence

import numpy as np

from . import glm
from .data import StudyDataset
from .design import KnotBank, ModelSpec, build_design, fit_knots
from .errors import (
    ConfigError,
    NonpositiveProbability,
    NoTargetUnits,
    OneClassOnly,
    PositivityWarning,
    ZeroWeightSum,
)

ESTIMATORS = ("Trial", "OM", "IOW1", "IOW2", "DR1", "DR2", "DR3")

OutcomeKind = Literal["auto", "continuous", "binary"]


@dataclass(frozen=True, eq=False)
class WeightSet:
    arm: Hashable
    w: np.ndarray
    p_hat: np.ndarray
    e_hat: np.ndarray
    p_model: Optional[glm.FittedGlm] = None
    e_source: str = "estimated"
    e_model: Optional[glm.FittedGlm] = None
    truncated_at: Optional[float] = None

    @property
    def total(self) -> float:
        return float(self.w.sum())


@dataclass(frozen=True)
class Contrast:
    difference: float
    ratio: Optional[float]


def _weights(w) -> np.ndarray:
    return w.w if isinstance(w, WeightSet) else np.asarray(w, dtype=float)


def _n_target(data: StudyDataset) -> int:
    n0 = int(np.count_nonzero(data.s == 0))
    if n0 == 0:
        raise NoTargetUnits("no non-participant (s=0) units to average over")
    return n0


def _y_filled(data: StudyDataset) -> np.ndarray:
    # zero outcomes stand in for the missing ones; their weight is always zero
    return np.where(data.s == 1, data.y, 0.0)


def resolve_outcome_kind(data: StudyDataset, kind: OutcomeKind = "auto") -> str:
    if kind != "auto":
        if kind not in ("continuous", "binary"):
            raise ConfigError(f"unknown outcome kind {kind!r}")
        return kind
    y = data.y[data.trial]
    return "binary" if np.all((y == 0) | (y == 1)) else "continuous"


# -- nuisance models ---------------------------------------------------------


def estimate_participation(
    data: StudyDataset,
    spec: ModelSpec,
    knot_bank: KnotBank | None = None,
    *,
    design: np.ndarray | None = None,
    positivity_threshold: float = 1e-3,
) -> tuple[glm.FittedGlm, np.ndarray]:
    """Logistic regression of S on ``spec`` over all units."""
    X = build_design(spec, data, knot_bank) if design is None else design
    fit = glm.fit_logistic(X, data.s)
    p_hat = fit.predict(X)
    target = data.s == 0
    if target.any() and p_hat[target].min() < positivity_threshold:
        warnings.warn(
            f"{int(np.count_nonzero(p_hat[target] < positivity_threshold))} non-participants "
            f"have estimated participation probability below {positivity_threshold:g}",
            PositivityWarning,
            stacklevel=2,
        )
    return fit, p_hat


def fit_treatment_model(
    data: StudyDataset,
    arm: Hashable,
    spec: ModelSpec,
    knot_bank: KnotBank | None = None,
    *,
    design: np.ndarray | None = None,
) -> tuple[glm.FittedGlm, np.ndarray]:
    """Logistic regression of I(A = arm) among participants, predicted for all units."""
    X = build_design(spec, data, knot_bank) if design is None else design
    in_arm = data.in_arm(arm)
    trial = data.trial
    n_arm = int(np.count_nonzero(in_arm))
    if n_arm == 0 or n_arm == int(np.count_nonzero(trial)):
        raise OneClassOnly(f"arm {arm!r} is empty or contains every participant")
    fit = glm.fit_logistic(X[trial], in_arm[trial].astype(float))
    return fit, fit.predict(X)


def estimate_treatment_prob(
    data: StudyDataset,
    arm: Hashable,
    spec: ModelSpec | None = None,
    known: float | None = None,
    knot_bank: KnotBank | None = None,
) -> np.ndarray:
    """Probability of receiving ``arm`` among participants, for every unit."""
    if known is not None:
        if not 0.0 < known < 1.0:
            raise ConfigError(f"known treatment probability must be in (0, 1), got {known}")
        if not data.in_arm(arm).any():
            raise OneClassOnly(f"arm {arm!r} has no trial participants")
        return np.full(data.n, float(known))
    if spec is None:
        raise ConfigError("either a treatment model or a known probability is required")
    return fit_treatment_model(data, arm, spec, knot_bank)[1]


def compute_weights(
    data: StudyDataset,
    p_hat,
    e_hat,
    arm: Hashable,
    *,
    p_model: glm.FittedGlm | None = None,
    e_source: str = "estimated",
    e_model: glm.FittedGlm | None = None,
) -> WeightSet:
    """Inverse odds of participation times inverse probability of the arm."""
    p_hat = np.asarray(p_hat, dtype=float)
    e_hat = np.asarray(e_hat, dtype=float)
    sel = data.in_arm(arm)
    p_sel, e_sel = p_hat[sel], e_hat[sel]
    if np.any(~(p_sel > 0)) or np.any(p_sel > 1):
        raise NonpositiveProbability(f"participation probability outside (0, 1] in arm {arm!r}")
    if np.any(~(e_sel > 0)) or np.any(e_sel >= 1):
        raise NonpositiveProbability(f"treatment probability outside (0, 1) in arm {arm!r}")
    w = np.zeros(data.n)
    w[sel] = (1.0 - p_sel) / (p_sel * e_sel)
    return WeightSet(arm, w, p_hat, e_hat, p_model, e_source, e_model)


def truncate_weights(ws: WeightSet, quantile: float) -> WeightSet:
    """Cap the positive weights at their ``quantile``. Changes the estimand."""
    if not 0.0 < quantile < 1.0:
        raise ConfigError(f"truncation quantile must be in (0, 1), got {quantile}")
    pos = ws.w > 0
    if not pos.any():
        return ws
    cap = float(np.quantile(ws.w[pos], quantile))
    return WeightSet(
        ws.arm, np.minimum(ws.w, cap), ws.p_hat, ws.e_hat,
        ws.p_model, ws.e_source, ws.e_model, truncated_at=cap,
    )


# -- estimators ---------------------------------------------------------------


def mu_om(data: StudyDataset, g_hat) -> float:
    """Average of outcome-model predictions over non-participants."""
    n0 = _n_target(data)
    g = np.asarray(g_hat, dtype=float)
    return float(np.sum(g[data.s == 0]) / n0)


def mu_iow1(data: StudyDataset, w) -> float:
    """Inverse-odds weighted outcome total divided by the number of non-participants."""
    n0 = _n_target(data)
    return float(np.dot(_weights(w), _y_filled(data)) / n0)


def mu_iow2(data: StudyDataset, w) -> float:
    """Weighted mean of arm outcomes (weights normalised to sum to one)."""
    w = _weights(w)
    total = w.sum()
    if not total > 0:
        raise ZeroWeightSum("inverse-odds weights sum to zero")
    return float(np.dot(w, _y_filled(data)) / total)


def mu_dr1(data: StudyDataset, w, g_hat) -> float:
    n0 = _n_target(data)
    w = _weights(w)
    g = np.asarray(g_hat, dtype=float)
    resid = np.where(w > 0, _y_filled(data) - g, 0.0)
    return float((np.dot(w, resid) + np.sum(g[data.s == 0])) / n0)


def mu_dr2(data: StudyDataset, w, g_hat) -> float:
    n0 = _n_target(data)
    w = _weights(w)
    total = w.sum()
    if not total > 0:
        raise ZeroWeightSum("inverse-odds weights sum to zero")
    g = np.asarray(g_hat, dtype=float)
    resid = np.where(w > 0, _y_filled(data) - g, 0.0)
    return float(np.dot(w, resid) / total + np.sum(g[data.s == 0]) / n0)


def fit_outcome_model(
    data: StudyDataset,
    arm: Hashable,
    X: np.ndarray,
    kind: str,
    weights: np.ndarray | None = None,
) -> glm.FittedGlm:
    """Outcome regression in one arm of the trial, optionally weighted."""
    sel = data.in_arm(arm)
    if not sel.any():
        raise OneClassOnly(f"arm {arm!r} has no trial participants")
    y = data.y[sel]
    Xa = X[sel]
    wa = None if weights is None else np.asarray(weights, dtype=float)[sel]
    if kind == "binary":
        return glm.fit_logistic(Xa, y, wa)
    return glm.fit_linear(Xa, y, wa)


def mu_dr3(
    data: StudyDataset,
    w: WeightSet,
    spec: ModelSpec,
    outcome_kind: OutcomeKind = "auto",
    knot_bank: KnotBank | None = None,
    *,
    design: np.ndarray | None = None,
) -> float:
    """Weighted outcome regression in the arm, averaged over non-participants.

    Uses the canonical link: least squares for continuous outcomes,
    logistic quasi-likelihood for binary ones.
    """
    n0 = _n_target(data)
    X = build_design(spec, data, knot_bank) if design is None else design
    kind = resolve_outcome_kind(data, outcome_kind)
    fit = fit_outcome_model(data, w.arm, X, kind, weights=_weights(w))
    return float(np.sum(fit.predict(X[data.s == 0])) / n0)


def trial_only(data: StudyDataset, arm: Hashable) -> float:
    """Unweighted mean outcome among participants assigned to ``arm``."""
    sel = data.in_arm(arm)
    if not sel.any():
        raise OneClassOnly(f"arm {arm!r} has no trial participants")
    return float(data.y[sel].mean())


def contrast(mu_a: float, mu_a_prime: float) -> Contrast:
    ratio = mu_a / mu_a_prime if mu_a_prime != 0 else None
    return Contrast(mu_a - mu_a_prime, ratio)


# -- orchestration -------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisConfig:
    """What to fit and what to report.

    ``contrasts`` defaults to every arm against the first arm in ``arms``.
    ``known_treatment_probs`` maps arm labels to design probabilities; when
    given, the treatment model is not fit.
    """

    participation: ModelSpec
    outcome: ModelSpec
    treatment: Optional[ModelSpec] = None
    arms: Optional[tuple] = None
    contrasts: Optional[tuple] = None
    known_treatment_probs: Optional[Mapping] = None
    outcome_kind: OutcomeKind = "auto"
    estimators: tuple[str, ...] = ESTIMATORS
    truncate_quantile: Optional[float] = None
    positivity_threshold: float = 1e-3
    balance_covariates: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators: {sorted(unknown)}")

    def resolved_arms(self, data: StudyDataset) -> tuple:
        if self.arms is None:
            return tuple(data.treatment_labels)
        return tuple(data.treatment_labels[data.arm_code(a)] for a in self.arms)

    def resolved_contrasts(self, data: StudyDataset) -> tuple:
        arms = self.resolved_arms(data)
        if self.contrasts is None:
            return tuple((a, arms[0]) for a in arms[1:])
        out = []
        for a, b in self.contrasts:
            la = data.treatment_labels[data.arm_code(a)]
            lb = data.treatment_labels[data.arm_code(b)]
            if la not in arms or lb not in arms:
                raise ConfigError(f"contrast ({a!r}, {b!r}) uses an arm that is not analyzed")
            out.append((la, lb))
        return tuple(out)

    def specs(self) -> list[ModelSpec]:
        return [s for s in (self.participation, self.treatment_spec, self.outcome) if s is not None]

    @property
    def treatment_spec(self) -> ModelSpec:
        return self.treatment if self.treatment is not None else self.participation

    def known_prob(self, arm) -> Optional[float]:
        if not self.known_treatment_probs:
            return None
        for key, value in self.known_treatment_probs.items():
            if key == arm or str(key) == str(arm):
                return float(value)
        return None


@dataclass
class EstimateReport:
    arms: tuple
    contrast_pairs: tuple
    estimators: tuple[str, ...]
    estimates: dict = field(default_factory=dict)
    contrasts: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    bootstrap: Optional[dict] = None
    diagnostics: Optional[object] = None
    warnings: list = field(default_factory=list)
    truncation: dict = field(default_factory=dict)
    config: Optional[dict] = None

    def estimate(self, arm, estimator: str) -> float:
        return self.estimates[(arm, estimator)]

    def contrast(self, pair, estimator: str) -> Contrast:
        return self.contrasts[(tuple(pair), estimator)]

    def quantities(self) -> dict[str, float]:
        """Flat ``name -> value`` view used by the bootstrap."""
        out = {}
        for (arm, est), v in self.estimates.items():
            out[f"mu[{arm}].{est}"] = v
        for ((a, b), est), c in self.contrasts.items():
            out[f"diff[{a} vs {b}].{est}"] = c.difference
            out[f"ratio[{a} vs {b}].{est}"] = c.ratio
        return out


def analyze(
    data: StudyDataset,
    config: AnalysisConfig,
    knot_bank: KnotBank | None = None,
    *,
    with_diagnostics: bool = True,
) -> EstimateReport:
    """Run every requested estimator for every arm and contrast."""
    arms = config.resolved_arms(data)
    pairs = config.resolved_contrasts(data)
    data.check_estimable(arms)
    for spec in config.specs():
        spec.validate(data.covariate_names)
    if knot_bank is None:
        knot_bank = fit_knots(config.specs(), data)
    wanted = set(config.estimators)
    needs_weights = bool(wanted & {"IOW1", "IOW2", "DR1", "DR2", "DR3"})
    needs_g = bool(wanted & {"OM", "DR1", "DR2"})
    report = EstimateReport(arms, pairs, tuple(e for e in ESTIMATORS if e in wanted))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        X_out = build_design(config.outcome, data, knot_bank) if (needs_g or "DR3" in wanted) else None
        kind = resolve_outcome_kind(data, config.outcome_kind)
        p_fit = p_hat = None
        if needs_weights or with_diagnostics:
            p_fit, p_hat = estimate_participation(
                data, config.participation, knot_bank,
                positivity_threshold=config.positivity_threshold,
            )
        weight_sets = {}
        if needs_weights:
            X_trt = None
            complement = None
            for arm in arms:
                known = config.known_prob(arm)
                if known is not None:
                    e_hat = estimate_treatment_prob(data, arm, known=known)
                    e_model, source = None, "known"
                elif complement is not None and len(data.treatment_labels) == 2:
                    # logistic symmetry: the other arm's MLE is the complement
                    e_model, e_hat, source = complement[0], 1.0 - complement[1], "estimated"
                else:
                    if X_trt is None:
                        X_trt = build_design(config.treatment_spec, data, knot_bank)
                    e_model, e_hat = fit_treatment_model(data, arm, config.treatment_spec, design=X_trt)
                    complement, source = (e_model, e_hat), "estimated"
                ws = compute_weights(data, p_hat, e_hat, arm, p_model=p_fit, e_source=source, e_model=e_model)
                if config.truncate_quantile is not None:
                    ws = truncate_weights(ws, config.truncate_quantile)
                    report.truncation[arm] = ws.truncated_at
                weight_sets[arm] = ws

        for arm in arms:
            est = report.estimates
            if "Trial" in wanted:
                est[(arm, "Trial")] = trial_only(data, arm)
            g_hat = None
            if needs_g:
                g_hat = fit_outcome_model(data, arm, X_out, kind).predict(X_out)
            ws = weight_sets.get(arm)
            if "OM" in wanted:
                est[(arm, "OM")] = mu_om(data, g_hat)
            if "IOW1" in wanted:
                est[(arm, "IOW1")] = mu_iow1(data, ws)
            if "IOW2" in wanted:
                est[(arm, "IOW2")] = mu_iow2(data, ws)
            if "DR1" in wanted:
                est[(arm, "DR1")] = mu_dr1(data, ws, g_hat)
            if "DR2" in wanted:
                est[(arm, "DR2")] = mu_dr2(data, ws, g_hat)
            if "DR3" in wanted:
                est[(arm, "DR3")] = mu_dr3(data, ws, config.outcome, kind, design=X_out)

        for pair in pairs:
            for name in report.estimators:
                report.contrasts[(pair, name)] = contrast(
                    report.estimates[(pair[0], name)], report.estimates[(pair[1], name)]
                )

        if with_diagnostics:
            from .diagnostics import diagnose

            covs = config.balance_covariates or data.covariate_names
            report.diagnostics = diagnose(
                data, p_hat, weight_sets, covs, threshold=config.positivity_threshold
            )
    report.warnings = sorted({str(w.message) for w in caught})
    return report
