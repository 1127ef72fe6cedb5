import argparse
import csv
import json
from collections.abc import Sequence
from datetime import UTC, datetime
from pathlib import Path

from dotenv.parser import parse_stream
from pydantic import ValidationError

from cv_erasure_code.cli.schemas import CSV_HEADER, SCENARIO_DESCRIPTIONS, RunConfig
from cv_erasure_code.core.config import Settings, get_settings
from cv_erasure_code.core.exceptions import ConfigurationError, OutputError
from cv_erasure_code.core.logging import get_logger
from cv_erasure_code.experiments.schemas import (
    Fig2adReport,
    Fig2eReport,
    Fig3Report,
    Fig4Report,
    ScenarioParams,
    ScenarioResult,
    SyndromeHistogram,
    TomographyReport,
)
from cv_erasure_code.fock.schemas import FockDensityMatrix, WignerGrid
from cv_erasure_code.tomography.schemas import QuadratureSamples
from cv_erasure_code.tomography.service import write_samples_csv

logger = get_logger(__name__)

RUN_KEYS = {"scenario", "seed", "format", "output_dir"}

# parameters that also have a dedicated flag
FLAG_PARAMS = (
    "pe_grid",
    "p_e",
    "threshold",
    "thresholds",
    "threshold_units",
    "gains",
    "ancilla",
    "model",
    "cutoff",
    "n_samples",
    "replicates",
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports problems as ConfigurationError instead of exiting."""

    def error(self, message: str):
        raise ConfigurationError(
            message=f"Invalid command line: {message}",
            details=[{"field": "argv", "message": message, "code": "bad_arguments"}],
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cv-erasure-code", description="CV erasure-code simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario and write result files")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int)
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--format", dest="output_format")
    run.add_argument("--config", type=Path, help="Flat key = value parameter file")
    run.add_argument(
        "--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE"
    )
    run.add_argument("--pe-grid")
    run.add_argument("--p-e")
    run.add_argument("--threshold")
    run.add_argument("--thresholds")
    run.add_argument("--threshold-units")
    run.add_argument("--gains")
    run.add_argument("--ancilla")
    run.add_argument("--model")
    run.add_argument("--cutoff")
    run.add_argument("--n-samples")
    run.add_argument("--replicates")
    run.add_argument("--wigner", action="store_true")

    sub.add_parser("list-scenarios", help="List scenario ids")

    validate = sub.add_parser("validate", help="Run the acceptance and property checks")
    validate.add_argument("--full", action="store_true", help="Include the long tomography run")
    return parser


def read_config_file(path: Path) -> dict[str, str]:
    """
    Parse a flat ``key = value`` file in dotenv syntax; ``#`` starts a comment.

    Unlike ``dotenv_values`` a line without a value is an error, not a skip,
    and ``${VAR}`` is not expanded.
    """
    try:
        with open(path) as fh:
            bindings = list(parse_stream(fh))
    except OSError as exc:
        raise ConfigurationError(
            message=f"Cannot read config file {path}",
            details=[{"field": "config", "message": str(exc), "code": "io_error"}],
        ) from exc
    values = {}
    for binding in bindings:
        if binding.error or (binding.key is not None and binding.value is None):
            raise ConfigurationError(
                message=f"Malformed line {binding.original.line} in {path}",
                details=[
                    {
                        "field": "config",
                        "message": binding.original.string.strip(),
                        "code": "malformed_line",
                    }
                ],
            )
        if binding.key is not None:
            values[binding.key] = binding.value
    return values


def _split_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(
            message=f"Expected KEY=VALUE, got '{text}'",
            details=[{"field": "set", "message": text, "code": "malformed_value"}],
        )
    return key.strip(), value.strip()


def _validation_error(exc: ValidationError) -> ConfigurationError:
    details = [
        {
            "field": ".".join(str(p) for p in err["loc"]),
            "message": err["msg"],
            "code": err["type"],
        }
        for err in exc.errors()
    ]
    return ConfigurationError(message="Invalid scenario parameters", details=details)


def parse_config(argv: Sequence[str] | None, settings: Settings | None = None) -> RunConfig:
    """
    Resolve a command line into a RunConfig.

    Precedence is command-line flags, then the ``--config`` file, then
    defaults. Unknown keys, malformed values and conflicting flags raise
    ConfigurationError.
    """
    settings = settings or get_settings()
    args = build_parser().parse_args(list(argv) if argv is not None else None)

    if args.command == "list-scenarios":
        return RunConfig(command="list-scenarios", seed=settings.default_seed)
    if args.command == "validate":
        return RunConfig(command="validate", seed=settings.default_seed, full=args.full)

    file_values = read_config_file(args.config) if args.config else {}
    cli_values: dict[str, str] = {}
    for text in args.assignments:
        key, value = _split_assignment(text)
        cli_values[key] = value
    for key in FLAG_PARAMS:
        flag_value = getattr(args, key)
        if flag_value is None:
            continue
        if key in cli_values and cli_values[key] != flag_value:
            raise ConfigurationError(
                message=f"Conflicting values for '{key}'",
                details=[
                    {
                        "field": key,
                        "message": f"--set gave {cli_values[key]}, flag gave {flag_value}",
                        "code": "conflicting_flags",
                    }
                ],
            )
        cli_values[key] = flag_value
    if args.wigner:
        cli_values["wigner"] = "true"

    merged = {**file_values, **cli_values}
    run_values = {k: merged.pop(k) for k in list(merged) if k in RUN_KEYS}

    scenario = args.scenario
    if scenario not in SCENARIO_DESCRIPTIONS:
        raise ConfigurationError(
            message=f"Unknown scenario '{scenario}'",
            details=[
                {
                    "field": "scenario",
                    "message": f"expected one of {sorted(SCENARIO_DESCRIPTIONS)}",
                    "code": "unknown_scenario",
                }
            ],
        )

    try:
        params = ScenarioParams(**merged)
        seed = args.seed
        if seed is None:
            seed = int(run_values.get("seed", settings.default_seed))
        output_dir = args.output_dir or Path(run_values.get("output_dir", settings.output_dir))
        output_format = args.output_format or run_values.get("format", "csv")
        config = RunConfig(
            command="run",
            scenario=scenario,
            params=params,
            overrides=merged,
            seed=seed,
            output_dir=output_dir,
            output_format=output_format,
        )
    except ValidationError as exc:
        raise _validation_error(exc) from exc
    except ValueError as exc:
        raise ConfigurationError(
            message="Malformed value",
            details=[{"field": "seed", "message": str(exc), "code": "malformed_value"}],
        ) from exc
    logger.debug("Run configuration resolved", scenario=scenario, seed=seed, overrides=merged)
    return config


# emission
def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _record(result: ScenarioResult) -> dict:
    # wall time is left out so repeated runs give identical files
    return result.model_dump(exclude={"wall_time"})


def density_matrix_document(rho: FockDensityMatrix) -> dict:
    """``dim`` plus row-major ``[re, im]`` pairs."""
    return {
        "dim": rho.dim,
        "trace_deficit": rho.trace_deficit,
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in rho.entries],
    }


def _report_extras(report) -> dict:
    if isinstance(report, Fig2adReport):
        return {
            "syndrome": {
                q: {
                    "sample_mean": h.sample_mean,
                    "sample_variance": h.sample_variance,
                    "analytic_mean": h.analytic_mean,
                    "analytic_variance": h.analytic_variance,
                }
                for q, h in report.histograms.items()
            }
        }
    if isinstance(report, Fig2eReport):
        return {"best_gain": report.best_gain, "best_fidelity": report.best_fidelity}
    if isinstance(report, Fig3Report):
        return {
            "fidelities": report.fidelities,
            "analytic_fidelities": report.analytic_fidelities,
            "validation_fidelities": report.validation_fidelities,
        }
    if isinstance(report, Fig4Report):
        return {"crossover_pe": report.crossover_pe}
    if isinstance(report, TomographyReport):
        return {
            "median_fidelity": report.median_fidelity,
            "spread": report.spread,
            "iterations": [r.iterations for r in report.reconstructions],
        }
    return {}


class ResultWriter:
    """Writes the files of one run under ``<scenario>_<timestamp>_<seed>``."""

    def __init__(self, config: RunConfig, timestamp: str | None = None):
        self.config = config
        stamp = timestamp or datetime.now(UTC).strftime("%Y%m%dT%H%M%SZ")
        self.stem = f"{config.scenario}_{stamp}_{config.seed}"
        self.paths: list[Path] = []
        try:
            config.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise self._error(config.output_dir, exc) from exc

    @staticmethod
    def _error(path: Path, exc: OSError) -> OutputError:
        return OutputError(
            message=f"Could not write {path}",
            details=[{"field": "path", "message": str(exc), "code": "io_error"}],
        )

    def _path(self, suffix: str, ext: str) -> Path:
        name = f"{self.stem}{suffix}.{ext}"
        return self.config.output_dir / name

    def _write(self, path: Path, write) -> Path:
        try:
            with open(path, "w", newline="") as fh:
                write(fh)
        except OSError as exc:
            raise self._error(path, exc) from exc
        self.paths.append(path)
        return path

    def summary_csv(self, results: Sequence[ScenarioResult]) -> Path:
        def write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for r in results:
                writer.writerow([_fmt(getattr(r, column)) for column in CSV_HEADER])

        return self._write(self._path("", "csv"), write)

    def summary_json(self, results: Sequence[ScenarioResult], extras: dict) -> Path:
        document = {
            "scenario": self.config.scenario,
            "seed": self.config.seed,
            "config": self.config.echo(),
            "records": [_record(r) for r in results],
            **extras,
        }
        return self._write(
            self._path("", "json"), lambda fh: json.dump(document, fh, indent=2)
        )

    def density_matrix(self, name: str, rho: FockDensityMatrix) -> Path:
        document = density_matrix_document(rho)
        return self._write(self._path(f"_rho_{name}", "json"), lambda fh: json.dump(document, fh))

    def wigner(self, name: str, grid: WignerGrid) -> Path:
        def write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("x", "p", "w"))
            for row in grid.rows():
                writer.writerow([repr(v) for v in row])

        return self._write(self._path(f"_wigner_{name}", "csv"), write)

    def trace(self, name: str, samples: QuadratureSamples) -> Path:
        """Phase-scan record in the format ``read_samples_csv`` loads back."""
        path = write_samples_csv(samples, self._path(f"_scan_{name}", "csv"))
        self.paths.append(path)
        return path

    def histogram(self, name: str, hist: SyndromeHistogram) -> Path:
        def write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("bin_center", "density", "analytic_density", "shot_noise_density"))
            for row in hist.rows():
                writer.writerow([repr(v) for v in row])

        return self._write(self._path(f"_syndrome_{name}", "csv"), write)


def emit_results(report, config: RunConfig, timestamp: str | None = None) -> list[Path]:
    """
    Write a scenario report to disk.

    The summary is CSV or JSON depending on ``config.output_format``; density
    matrices are always JSON and Wigner grids always CSV.
    """
    writer = ResultWriter(config, timestamp)
    if config.output_format == "json":
        writer.summary_json(report.results, _report_extras(report))
    else:
        writer.summary_csv(report.results)
    if isinstance(report, Fig3Report):
        for name, rho in report.snapshots.items():
            writer.density_matrix(name, rho)
        for name, grid in report.wigner.items():
            writer.wigner(name, grid)
    if isinstance(report, Fig2adReport):
        for name, samples in report.traces.items():
            writer.trace(name, samples)
        for name, hist in report.histograms.items():
            writer.histogram(name, hist)
    if isinstance(report, TomographyReport):
        for index, recon in enumerate(report.reconstructions):
            writer.density_matrix(f"reconstruction{index}", recon.rho)
    logger.info("Results written", scenario=config.scenario, files=[str(p) for p in writer.paths])
    return writer.paths


def has_degenerate_results(report) -> bool:
    return any(r.degenerate for r in report.results)
