"""Requirements kept as tagged markdown elements inside a git repository."""

from treqs.model import (
    BUILTIN_KINDS,
    BUILTIN_LINK_TYPES,
    Finding,
    Model,
    RequirementElement,
    Severity,
    SourceSpan,
    TraceLink,
    build_model,
    find_duplicates,
)
from treqs.parser import (
    ParseResult,
    generate_id,
    normalize_body,
    parse_file,
    serialize_element,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_KINDS",
    "BUILTIN_LINK_TYPES",
    "Finding",
    "Model",
    "ParseResult",
    "RequirementElement",
    "Severity",
    "SourceSpan",
    "TraceLink",
    "build_model",
    "find_duplicates",
    "generate_id",
    "normalize_body",
    "parse_file",
    "serialize_element",
]
