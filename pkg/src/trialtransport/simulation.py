"""Monte-Carlo study of the estimators in a nested trial design.

Cohorts have three independent standard-normal covariates. Participation
follows a logistic model whose intercept is solved numerically so that the
expected trial size hits a target; participants are randomised 1:1 and the
observed outcome is the potential outcome of the assigned arm.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
from scipy.special import expit

from ._pool import map_replicates, replicate_rng
from .data import StudyDataset
from .design import ModelSpec
from .errors import ConfigError, DegenerateCohort, TooManyFailures, TransportError
from .estimators import ESTIMATORS, AnalysisConfig, analyze

COVARIATES = ("x1", "x2", "x3")
HERMITE_NODES = 64
TRUTH_STREAM = 1
MAX_DEGENERATE_FRACTION = 0.001


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    target_n_rct: float
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0)
    theta0: tuple[float, float, float, float] = (0.0, 1.0, 1.0, 1.0)
    theta1: tuple[float, float, float, float] = (1.0, 2.0, 1.0, 1.0)
    outcome_kind: Literal["continuous", "binary"] = "continuous"
    replications: int = 2000
    seed: int = 1

    def __post_init__(self):
        if not 0 < self.target_n_rct < self.n:
            raise ConfigError(f"target trial size {self.target_n_rct} must lie in (0, {self.n})")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if len(self.beta) != 3 or len(self.theta0) != 4 or len(self.theta1) != 4:
            raise ConfigError("beta needs 3 slopes; theta0/theta1 need intercept + 3 slopes")
        if self.outcome_kind not in ("continuous", "binary"):
            raise ConfigError(f"unknown outcome kind {self.outcome_kind!r}")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "theta0", tuple(float(t) for t in self.theta0))
        object.__setattr__(self, "theta1", tuple(float(t) for t in self.theta1))

    @property
    def beta1(self) -> float:
        return self.beta[0]

    @property
    def theta_diff(self) -> float:
        return self.theta1[1] - self.theta0[1]

    @functools.cached_property
    def beta0(self) -> float:
        return solve_beta0(self.target_n_rct / self.n, self.beta)


def _mean_participation(beta0: float, sigma: float, nodes, weights) -> float:
    return float(np.dot(weights, expit(beta0 + math.sqrt(2.0) * sigma * nodes)) / math.sqrt(math.pi))


def solve_beta0(target_fraction: float, beta: Sequence[float], tol: float = 1e-10) -> float:
    """Intercept giving ``E[expit(b0 + beta'X)] = target_fraction`` for standard-normal X.

    ``beta'X`` is normal with variance ``|beta|^2``, so the expectation is a
    one-dimensional Gauss-Hermite integral; the root is bracketed in
    (-50, 50) and found by bisection.
    """
    if not 0.0 < target_fraction < 1.0:
        raise ConfigError(f"target fraction must be in (0, 1), got {target_fraction}")
    sigma = float(np.linalg.norm(beta))
    nodes, weights = np.polynomial.hermite.hermgauss(HERMITE_NODES)
    lo, hi = -50.0, 50.0
    mid = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = _mean_participation(mid, sigma, nodes, weights) - target_fraction
        if abs(f) < tol:
            break
        if f < 0:
            lo = mid
        else:
            hi = mid
    return mid


@dataclass(frozen=True, eq=False)
class Cohort:
    data: StudyDataset
    y0: np.ndarray
    y1: np.ndarray


def generate_cohort(scenario: ScenarioConfig, replicate: int, beta0: float | None = None) -> Cohort:
    """Draw one cohort. Raises ``DegenerateCohort`` if every unit has the same S."""
    b0 = scenario.beta0 if beta0 is None else beta0
    rng = replicate_rng(scenario.seed, replicate)
    n = scenario.n
    x = rng.standard_normal((n, 3))
    s = (rng.random(n) < expit(b0 + x @ np.asarray(scenario.beta))).astype(np.int64)
    a = (rng.random(n) < 0.5).astype(np.int64)
    design = np.column_stack([np.ones(n), x])
    mean0 = design @ np.asarray(scenario.theta0)
    mean1 = design @ np.asarray(scenario.theta1)
    if scenario.outcome_kind == "continuous":
        y0 = mean0 + rng.standard_normal(n)
        y1 = mean1 + rng.standard_normal(n)
    else:
        y0 = (rng.random(n) < expit(mean0)).astype(float)
        y1 = (rng.random(n) < expit(mean1)).astype(float)
    n_rct = int(s.sum())
    if n_rct == 0 or n_rct == n:
        raise DegenerateCohort(f"replicate {replicate}: all units have S={s[0]}")
    trial = s == 1
    y = np.where(trial, np.where(a == 1, y1, y0), np.nan)
    a_code = np.where(trial, a, -1)
    data = StudyDataset(s, a_code, y, x, COVARIATES, (0, 1), "nested")
    return Cohort(data, y0, y1)


def true_means(scenario: ScenarioConfig, draws: int = 1_000_000) -> dict[str, float]:
    """Potential-outcome means among non-participants from one large auxiliary draw.

    Non-participant averages are taken by weighting each draw with its
    probability of non-participation, 1 - p(X).
    """
    rng = replicate_rng(scenario.seed, 0, stream=TRUTH_STREAM)
    x = rng.standard_normal((draws, 3))
    q = 1.0 - expit(scenario.beta0 + x @ np.asarray(scenario.beta))
    design = np.column_stack([np.ones(draws), x])
    m0 = design @ np.asarray(scenario.theta0)
    m1 = design @ np.asarray(scenario.theta1)
    if scenario.outcome_kind == "binary":
        m0, m1 = expit(m0), expit(m1)
    mu0 = float(np.dot(q, m0) / q.sum())
    mu1 = float(np.dot(q, m1) / q.sum())
    return {"mu0": mu0, "mu1": mu1, "effect": mu1 - mu0}


def correct_config(
    estimators: Iterable[str] = ESTIMATORS,
    participation: Sequence[str] = COVARIATES,
    outcome: Sequence[str] = COVARIATES,
    treatment: Sequence[str] = COVARIATES,
    known_treatment_prob: float | None = None,
) -> AnalysisConfig:
    """Analysis config with main-effect models (correct for the generator by default)."""
    known = None if known_treatment_prob is None else {0: known_treatment_prob, 1: known_treatment_prob}
    return AnalysisConfig(
        participation=ModelSpec.main_effects(participation),
        outcome=ModelSpec.main_effects(outcome),
        treatment=ModelSpec.main_effects(treatment),
        arms=(0, 1),
        contrasts=((1, 0),),
        known_treatment_probs=known,
        estimators=tuple(e for e in ESTIMATORS if e in set(estimators)),
    )


@dataclass(frozen=True)
class EstimatorSummary:
    bias: float
    variance: float
    mc_se_bias: float


@dataclass
class SimulationSummary:
    scenario: ScenarioConfig
    truth: dict
    estimators: dict
    mean_n_rct: float
    replicates: int
    failed: int
    estimates: dict = field(default_factory=dict, repr=False)


def _simulate_one(r, scenario, config, beta0):
    try:
        cohort = generate_cohort(scenario, r, beta0)
        rep = analyze(cohort.data, config, with_diagnostics=False)
    except (TransportError, np.linalg.LinAlgError, FloatingPointError):
        return None
    effects = {name: rep.contrasts[((1, 0), name)].difference for name in rep.estimators}
    return int(cohort.data.s.sum()), effects


def run_scenario(
    scenario: ScenarioConfig,
    config: AnalysisConfig | None = None,
    truth: dict | None = None,
    workers: int | None = None,
    truth_draws: int = 1_000_000,
) -> SimulationSummary:
    """Bias and variance of each estimator of the non-participant treatment effect."""
    config = correct_config() if config is None else config
    truth = true_means(scenario, truth_draws) if truth is None else truth
    beta0 = scenario.beta0
    func = functools.partial(_simulate_one, scenario=scenario, config=config, beta0=beta0)
    results = map_replicates(func, scenario.replications, workers)
    ok = [r for r in results if r is not None]
    failed = len(results) - len(ok)
    if failed > MAX_DEGENERATE_FRACTION * scenario.replications:
        raise TooManyFailures(
            f"{failed} of {scenario.replications} replicates were degenerate or failed"
        )
    estimates = {
        name: np.array([r[1][name] for r in ok]) for name in config.estimators
    }
    summaries = {}
    for name, vals in estimates.items():
        var = float(np.var(vals, ddof=1)) if vals.size > 1 else 0.0
        summaries[name] = EstimatorSummary(
            bias=float(vals.mean() - truth["effect"]),
            variance=var,
            mc_se_bias=math.sqrt(var / vals.size),
        )
    return SimulationSummary(
        scenario=scenario,
        truth=truth,
        estimators=summaries,
        mean_n_rct=float(np.mean([r[0] for r in ok])),
        replicates=len(ok),
        failed=failed,
        estimates=estimates,
    )


def standard_grid(replications: int = 2000, seed: int = 1) -> list[ScenarioConfig]:
    """The 36-scenario factorial: trial size x cohort size x effect modification x selection."""
    grid = []
    for n_rct, n, theta11, beta1 in itertools.product(
        (200, 500, 1000), (2000, 5000, 10000), (2.0, 1.0), (1.0, 0.0)
    ):
        grid.append(ScenarioConfig(
            n=n, target_n_rct=n_rct, beta=(beta1, 1.0, 1.0),
            theta1=(1.0, theta11, 1.0, 1.0), replications=replications, seed=seed,
        ))
    return grid


def expand_grid(
    n: Iterable[int],
    n_rct: Iterable[float],
    beta1: Iterable[float] = (1.0,),
    theta1_1: Iterable[float] = (2.0,),
    **common,
) -> list[ScenarioConfig]:
    return [
        ScenarioConfig(n=int(nn), target_n_rct=float(k), beta=(float(b), 1.0, 1.0),
                       theta1=(1.0, float(t), 1.0, 1.0), **common)
        for k, nn, t, b in itertools.product(n_rct, n, theta1_1, beta1)
        if k < nn
    ]


def run_factorial(
    scenarios: Iterable[ScenarioConfig],
    config: AnalysisConfig | None = None,
    workers: int | None = None,
    truth_draws: int = 1_000_000,
) -> list[SimulationSummary]:
    return [run_scenario(sc, config, workers=workers, truth_draws=truth_draws) for sc in scenarios]


CSV_COLUMNS = ("n_rct_target", "n", "beta1", "theta_diff", "estimator", "bias", "variance", "mc_se_bias", "replicates")


def simulation_csv(summaries: Iterable[SimulationSummary]) -> str:
    """One row per (scenario, estimator); floats printed at full precision."""
    lines = [",".join(CSV_COLUMNS)]
    for summ in summaries:
        sc = summ.scenario
        for name in ESTIMATORS:
            if name not in summ.estimators:
                continue
            e = summ.estimators[name]
            lines.append(",".join([
                repr(float(sc.target_n_rct)), str(sc.n), repr(sc.beta1), repr(sc.theta_diff),
                name, repr(e.bias), repr(e.variance), repr(e.mc_se_bias), str(summ.replicates),
            ]))
    return "\n".join(lines) + "\n"


def with_replications(scenarios: Iterable[ScenarioConfig], replications: Optional[int] = None,
                      seed: Optional[int] = None) -> list[ScenarioConfig]:
    out = []
    for sc in scenarios:
        changes = {}
        if replications is not None:
            changes["replications"] = replications
        if seed is not None:
            changes["seed"] = seed
        out.append(replace(sc, **changes) if changes else sc)
    return out
