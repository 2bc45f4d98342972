"""Command-line entry point.

    trialtransport analyze  --config study.toml [--bootstrap B] [--seed S] [--out report.json]
    trialtransport diagnose --config study.toml [--out diagnostics.json]
    trialtransport simulate --config grid.toml  [--replicates R] [--seed S] [--out sim.csv]

Exit codes: 0 success, 2 configuration error, 3 data/schema error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .design import ModelSpec
from .errors import ConfigError, DataError, NumericalError
from .estimators import ESTIMATORS, AnalysisConfig, analyze
from .ingest import DatasetSchema, atomic_write, diagnostics_to_dict, read_dataset, report_to_dict, write_report

log = logging.getLogger("trialtransport")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_BOOTSTRAP = 1000


@dataclass
class RunConfig:
    subcommand: str
    raw: dict
    base_dir: Path
    seed: Optional[int] = None
    replicates: Optional[int] = None
    bootstrap: Optional[int] = None
    out: Optional[Path] = None
    threads: Optional[int] = None
    extras: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"[{name}] must be a table")
        return value

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] is missing required key {key!r}")
    return table[key]


def schema_from_config(run: RunConfig) -> tuple[Path, DatasetSchema]:
    data = run.section("data")
    path = run.path(_require(data, "path", "data"))
    labels = data.get("treatment_labels")
    try:
        schema = DatasetSchema(
            s_column=data.get("s_column", "s"),
            a_column=data.get("a_column", "a"),
            y_column=data.get("y_column", "y"),
            covariate_columns=tuple(_require(data, "covariates", "data")),
            categorical_columns={k: tuple(str(x) for x in v) for k, v in data.get("categorical", {}).items()},
            design_kind=data.get("design", "nested"),
            treatment_labels=None if labels is None else tuple(str(x) for x in labels),
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    return path, schema


def analysis_from_config(run: RunConfig) -> AnalysisConfig:
    models = run.section("models")
    analysis = run.section("analysis")
    treatment = models.get("treatment")
    contrasts = analysis.get("contrasts")
    known = analysis.get("known_treatment_probs")
    try:
        return AnalysisConfig(
            participation=ModelSpec.parse(_require(models, "participation", "models")),
            outcome=ModelSpec.parse(_require(models, "outcome", "models")),
            treatment=None if treatment is None else ModelSpec.parse(treatment),
            arms=None if analysis.get("arms") is None else tuple(str(a) for a in analysis["arms"]),
            contrasts=None if contrasts is None else tuple((str(a), str(b)) for a, b in contrasts),
            known_treatment_probs=None if known is None else {str(k): float(v) for k, v in known.items()},
            outcome_kind=models.get("outcome_kind", "auto"),
            estimators=tuple(analysis.get("estimators", ESTIMATORS)),
            truncate_quantile=analysis.get("truncate_quantile"),
            positivity_threshold=float(analysis.get("positivity_threshold", 1e-3)),
            balance_covariates=None if analysis.get("balance_covariates") is None
            else tuple(analysis["balance_covariates"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad analysis configuration: {exc}") from None


def _bootstrap_config(run: RunConfig):
    from .inference import BootstrapConfig

    boot = run.section("bootstrap")
    replicates = run.bootstrap if run.bootstrap is not None else boot.get("replicates", DEFAULT_BOOTSTRAP)
    if run.replicates is not None and run.bootstrap is None:
        replicates = run.replicates
    if int(replicates) == 0:
        return None
    seed = run.seed if run.seed is not None else boot.get("seed", 0)
    return BootstrapConfig(
        replicates=int(replicates),
        seed=int(seed),
        scheme=boot.get("scheme"),
        levels=tuple(boot.get("levels", (0.025, 0.975))),
        max_failure_fraction=float(boot.get("max_failure_fraction", 0.01)),
    )


def _output(run: RunConfig, key: str, default: Optional[str]) -> Optional[Path]:
    if run.out is not None:
        return run.out
    value = run.section("output").get(key, default)
    return None if value is None else run.path(value)


def cmd_analyze(run: RunConfig) -> int:
    from .design import fit_knots
    from .diagnostics import write_histogram_csv
    from .inference import attach_intervals, bootstrap

    path, schema = schema_from_config(run)
    config = analysis_from_config(run)
    boot = _bootstrap_config(run)
    data, ingest_log = read_dataset(path, schema)
    log.info("read %d rows, kept %d, dropped %d incomplete", ingest_log.rows_read,
             ingest_log.rows_retained, ingest_log.rows_dropped)
    knots = fit_knots(config.specs(), data)
    report = analyze(data, config, knots)
    if boot is not None:
        log.info("bootstrap: %d replicates, seed %d", boot.replicates, boot.seed)
        attach_intervals(report, bootstrap(data, config, boot, knots, workers=run.threads))
    echo = dict(run.raw)
    echo["effective"] = {
        "bootstrap_replicates": 0 if boot is None else boot.replicates,
        "bootstrap_seed": None if boot is None else boot.seed,
        "rows_read": ingest_log.rows_read,
        "rows_retained": ingest_log.rows_retained,
        "rows_dropped": ingest_log.rows_dropped,
    }
    out = _output(run, "report", "report.json")
    write_report(report, out, config=echo)
    hist = run.section("output").get("histogram")
    if hist and report.diagnostics is not None:
        from .estimators import estimate_participation

        _, p_hat = estimate_participation(data, config.participation, knots)
        write_histogram_csv(p_hat, data.s, run.path(hist))
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_diagnose(run: RunConfig) -> int:
    import warnings

    from .design import fit_knots
    from .diagnostics import diagnose, write_histogram_csv
    from .estimators import compute_weights, estimate_participation, estimate_treatment_prob

    path, schema = schema_from_config(run)
    config = analysis_from_config(run)
    data, _ = read_dataset(path, schema)
    data.check_estimable(config.resolved_arms(data))
    knots = fit_knots(config.specs(), data)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        p_fit, p_hat = estimate_participation(data, config.participation, knots,
                                              positivity_threshold=config.positivity_threshold)
        weights = {}
        for arm in config.resolved_arms(data):
            known = config.known_prob(arm)
            e_hat = estimate_treatment_prob(data, arm, config.treatment_spec, known, knots)
            weights[arm] = compute_weights(data, p_hat, e_hat, arm, p_model=p_fit)
        diag = diagnose(data, p_hat, weights, config.balance_covariates or data.covariate_names,
                        threshold=config.positivity_threshold)
    doc = {"diagnostics": diagnostics_to_dict(diag), "warnings": sorted({str(w.message) for w in caught})}
    text = json.dumps(doc, indent=2) + "\n"
    out = _output(run, "diagnostics", None)
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)
    hist = run.section("output").get("histogram")
    if hist:
        write_histogram_csv(p_hat, data.s, run.path(hist))
    if diag.positivity_flag_count:
        log.warning("%d non-participants have estimated participation probability below %g",
                    diag.positivity_flag_count, diag.threshold)
    return EXIT_OK


def scenarios_from_config(run: RunConfig):
    from .simulation import ScenarioConfig, expand_grid

    sim = run.section("simulate")
    replicates = run.replicates if run.replicates is not None else sim.get("replicates", 2000)
    seed = run.seed if run.seed is not None else sim.get("seed", 1)
    common = {"replications": int(replicates), "seed": int(seed),
              "outcome_kind": sim.get("outcome_kind", "continuous")}
    scenarios = []
    grid = sim.get("grid")
    if grid is not None:
        try:
            scenarios += expand_grid(
                n=grid["n"], n_rct=grid["n_rct"], beta1=grid.get("beta1", (1.0,)),
                theta1_1=grid.get("theta1_1", (2.0,)), **common,
            )
        except KeyError as exc:
            raise ConfigError(f"[simulate.grid] is missing {exc}") from None
    for item in sim.get("scenarios", []):
        kw = dict(common)
        kw["outcome_kind"] = item.get("outcome_kind", kw["outcome_kind"])
        for key in ("beta", "theta0", "theta1"):
            if key in item:
                kw[key] = tuple(item[key])
        try:
            scenarios.append(ScenarioConfig(n=int(item["n"]), target_n_rct=float(item["n_rct"]), **kw))
        except KeyError as exc:
            raise ConfigError(f"[[simulate.scenarios]] entry is missing {exc}") from None
    if not scenarios:
        raise ConfigError("simulate requires [simulate.grid] or [[simulate.scenarios]]")
    return scenarios


def cmd_simulate(run: RunConfig) -> int:
    from .simulation import COVARIATES, correct_config, run_factorial, simulation_csv

    scenarios = scenarios_from_config(run)
    sim = run.section("simulate")
    models = sim.get("models", {})
    config = correct_config(
        estimators=sim.get("estimators", ESTIMATORS),
        participation=models.get("participation", COVARIATES),
        outcome=models.get("outcome", COVARIATES),
        treatment=models.get("treatment", COVARIATES),
        known_treatment_prob=sim.get("known_treatment_prob"),
    )
    log.info("simulating %d scenarios", len(scenarios))
    summaries = run_factorial(scenarios, config, workers=run.threads,
                              truth_draws=int(sim.get("truth_draws", 1_000_000)))
    out = _output(run, "simulation", "simulation.csv")
    atomic_write(out, simulation_csv(summaries))
    log.info("wrote %s", out)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "diagnose": cmd_diagnose, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trialtransport", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("analyze", "estimates, bootstrap CIs and diagnostics for a dataset"),
        ("diagnose", "participation-model diagnostics only"),
        ("simulate", "Monte-Carlo bias/variance over a scenario grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int, help="simulation replicates (simulate)")
        p.add_argument("--bootstrap", type=int, help="bootstrap replicates; 0 disables (analyze)")
        p.add_argument("--out", type=Path, help="output path, overrides [output]")
        p.add_argument("--threads", type=int, help="worker processes (default: $TRANSPORT_THREADS or 1)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        raw = load_config(args.config)
        run = RunConfig(args.command, raw, Path(args.config).resolve().parent, args.seed,
                        args.replicates, args.bootstrap, args.out, args.threads)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
