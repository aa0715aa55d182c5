"""Static analysis toolchain for microservice systems.

Parses each service's codebase into a language-agnostic tree, distills a
per-service component model, and interweaves the models across bounded
contexts: entity correspondence, predicted inter-service calls, event
wiring, declared topology, consistency findings, and coupling metrics.
"""

__version__ = "0.1.0"

from microweave.errors import (
    ConfigError,
    DuplicateServiceError,
    MalformedDocument,
    SchemaViolation,
    TermNotFound,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DuplicateServiceError",
    "MalformedDocument",
    "SchemaViolation",
    "TermNotFound",
]
