"""Reference stdio JSONL adapter worker for the easel tool wire protocol."""

from .handlers import (
    ArgError,
    ToolResult,
    aesthetic_score,
    aesthetic_value,
    default_handlers,
    inpaint_mean_fill,
)
from .wire import (
    PROTOCOL_VERSION,
    Request,
    WireError,
    canonical_line,
    error_line,
    ok_line,
    parse_request,
)
from .worker import UNKNOWN_REQUEST_ID, AdapterWorker, main

__all__ = [
    "ArgError",
    "ToolResult",
    "aesthetic_score",
    "aesthetic_value",
    "default_handlers",
    "inpaint_mean_fill",
    "PROTOCOL_VERSION",
    "Request",
    "WireError",
    "canonical_line",
    "error_line",
    "ok_line",
    "parse_request",
    "UNKNOWN_REQUEST_ID",
    "AdapterWorker",
    "main",
]
