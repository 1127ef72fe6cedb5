import json
import sys
from collections.abc import Sequence

from opentelemetry import trace
from opentelemetry.sdk.trace import TracerProvider

from cv_erasure_code.cli.schemas import SCENARIO_DESCRIPTIONS
from cv_erasure_code.cli.service import emit_results, has_degenerate_results, parse_config
from cv_erasure_code.core.config import get_settings
from cv_erasure_code.core.exceptions import SimulationException, error_document
from cv_erasure_code.core.logging import (
    bind_run_context,
    configure_logging,
    get_logger,
    get_tracer,
)
from cv_erasure_code.experiments.service import ScenarioService
from cv_erasure_code.experiments.validation import run_checks

# Configure logging before creating logger
configure_logging()
logger = get_logger(__name__)

# Minimal tracing setup for trace ids in logs (no exporters needed)
trace.set_tracer_provider(TracerProvider())

EXIT_OK = 0
EXIT_DEGENERATE = 1
EXIT_ERROR = 2


def list_scenarios() -> int:
    for name, description in SCENARIO_DESCRIPTIONS.items():
        print(f"{name}\t{description}")
    return EXIT_OK


def validate(full: bool) -> int:
    ok = True
    for result in run_checks(full=full):
        print(result.model_dump_json(), flush=True)
        ok = ok and result.passed
    return EXIT_OK if ok else EXIT_DEGENERATE


def run(argv: Sequence[str] | None) -> int:
    settings = get_settings()
    config = parse_config(argv, settings)
    if config.command == "list-scenarios":
        return list_scenarios()
    if config.command == "validate":
        return validate(config.full)

    with bind_run_context(scenario=config.scenario, seed=config.seed):
        logger.info("Starting scenario", app_name=settings.app_name, version=settings.app_version)
        service = ScenarioService(config.params, seed=config.seed, settings=settings)
        report = service.run(config.scenario)
        for path in emit_results(report, config):
            print(path)
        if has_degenerate_results(report):
            logger.warning("Scenario finished with degenerate results")
            return EXIT_DEGENERATE
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the process exit code."""
    with get_tracer().start_as_current_span("cli"):
        try:
            return run(argv)
        except SimulationException as exc:
            logger.error("Run failed", error=exc.code, message=exc.message)
            print(json.dumps(error_document(exc)), file=sys.stderr)
            return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
