from opentelemetry import trace


class SimulationException(Exception):
    """Base error for the simulator.

    Mirrors a business error: a human readable message plus a list of
    ``{"field", "message", "code"}`` details.
    """

    code = "simulation_error"

    def __init__(self, message: str, details: list | None = None):
        if details is None:
            details = []
        super().__init__(message)
        self.message = message
        self.details = details


class UnphysicalStateError(SimulationException):
    code = "unphysical_state"


class DimensionMismatchError(SimulationException):
    code = "dimension_mismatch"


class ProtocolError(SimulationException):
    code = "protocol_error"


class ConfigurationError(SimulationException):
    code = "configuration_error"


class OutputError(SimulationException):
    code = "output_error"


def current_trace_id() -> str | None:
    span = trace.get_current_span()
    ctx = span.get_span_context() if span else None
    return format(ctx.trace_id, "032x") if ctx and ctx.is_valid else None


def error_document(exc: SimulationException, trace_id: str | None = None) -> dict:
    """Consistent error payload printed by the CLI."""
    return {
        "error": exc.code,
        "message": exc.message,
        "details": exc.details,
        "trace_id": trace_id if trace_id is not None else current_trace_id(),
    }
