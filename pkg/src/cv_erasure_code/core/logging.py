import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from typing import Any

import numpy as np
import structlog
from opentelemetry import trace

from cv_erasure_code.core.config import get_settings

TRACER_NAME = "cv_erasure_code"


def configure_logging() -> None:
    """
    Configure structlog for console or JSON output on stderr.

    Every event carries the bound run context (scenario, seed, sweep point),
    OpenTelemetry trace/span ids, and numpy values converted to plain Python
    so the JSON renderer can serialise them. stdout is left to command output.
    """
    settings = get_settings()
    use_json = settings.json_logs or settings.environment == "production"

    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        numpy_to_builtin,
        add_otel_trace_ids,
    ]
    if use_json:
        processors.append(structlog.processors.JSONRenderer(sort_keys=True))
    else:
        processors.append(structlog.dev.ConsoleRenderer())

    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, settings.log_level),
        force=True,
    )


def _builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, dict):
        return {k: _builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_builtin(v) for v in value]
    return value


def numpy_to_builtin(logger, method_name, event_dict):
    """Replace numpy scalars, arrays and complex amplitudes by JSON-friendly values."""
    return {key: _builtin(value) for key, value in event_dict.items()}


def add_otel_trace_ids(logger, method_name, event_dict):
    """
    Add OpenTelemetry trace_id and span_id to structlog event dict.
    If no active span, sets them to None.
    """
    ctx = trace.get_current_span().get_span_context()
    if ctx.is_valid:
        event_dict["trace_id"] = format(ctx.trace_id, "032x")
        event_dict["span_id"] = format(ctx.span_id, "016x")
    else:
        event_dict["trace_id"] = None
        event_dict["span_id"] = None
    return event_dict


@contextmanager
def bind_run_context(**context: Any) -> Iterator[None]:
    """
    Attach ``scenario``, ``seed`` and similar keys to every log line emitted
    inside the block, including lines from sweep workers started in it.
    """
    with structlog.contextvars.bound_contextvars(**_builtin(context)):
        yield


def get_logger(name: str) -> Any:
    """Get a structlog logger instance."""
    return structlog.get_logger(name)


def get_tracer() -> trace.Tracer:
    """Tracer used for scenario and sweep-point spans."""
    return trace.get_tracer(TRACER_NAME)
