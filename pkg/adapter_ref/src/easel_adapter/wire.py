"""Wire protocol primitives: one canonical JSON object per line.

Requests and responses travel as single-line JSON with sorted keys,
compact separators, and non-ASCII kept verbatim, so any two correct
implementations produce the same bytes for the same message.  The
normative samples live in ``protocol/vectors/`` at the repository
root; this module is written against those bytes and nothing else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1

ERROR_BAD_ARGS = "bad_args"
ERROR_BAD_REQUEST = "bad_request"
ERROR_INTERNAL = "internal"
ERROR_UNKNOWN_TOOL = "unknown_tool"
ERROR_UNSUPPORTED_VERSION = "unsupported_version"

_REQUEST_FIELDS = {"protocol_version", "tool", "args", "input_paths", "request_id"}
_SCALAR_TYPES = (str, int, float, bool)


class WireError(ValueError):
    """A request line that violates the framing or field contract."""


def canonical_line(payload: dict) -> str:
    """Serialize one message in the canonical byte form, newline included."""
    return (
        json.dumps(
            payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
        )
        + "\n"
    )


@dataclass(frozen=True)
class Request:
    tool: str
    args: dict = field(default_factory=dict)
    input_paths: tuple[str, ...] = ()
    request_id: str = ""
    protocol_version: int = PROTOCOL_VERSION


def parse_request(line: str) -> Request:
    """Validate one request line; raises WireError on any violation.

    A version the worker does not speak is NOT a violation: the line
    still parses so the caller can answer with a proper error response
    carrying the request's id.
    """
    stripped = line.strip("\r\n")
    if "\n" in stripped or "\r" in stripped:
        raise WireError("request spans multiple lines")
    if not stripped.strip():
        raise WireError("empty request line")
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise WireError(f"request line is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise WireError("request line is not a JSON object")

    version = obj.get("protocol_version")
    if not isinstance(version, int) or isinstance(version, bool) or version < 1:
        raise WireError(f"bad protocol_version: {version!r}")
    tool = obj.get("tool")
    if not isinstance(tool, str) or not tool:
        raise WireError("request needs a non-empty string 'tool'")
    args = obj.get("args", {})
    if not isinstance(args, dict):
        raise WireError("'args' must be an object")
    for key, value in args.items():
        if not isinstance(key, str):
            raise WireError("argument names must be strings")
        if value is not None and not isinstance(value, _SCALAR_TYPES):
            raise WireError(f"argument {key!r} must be a scalar, got {type(value).__name__}")
    paths = obj.get("input_paths", [])
    if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
        raise WireError("'input_paths' must be a list of strings")
    request_id = obj.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise WireError("request needs a non-empty string 'request_id'")
    unknown = set(obj) - _REQUEST_FIELDS
    if unknown:
        raise WireError(f"unknown request field(s): {sorted(unknown)}")
    return Request(
        tool=tool,
        args=args,
        input_paths=tuple(paths),
        request_id=request_id,
        protocol_version=version,
    )


def ok_line(request_id: str, output_path: str, metrics: dict | None = None) -> str:
    payload: dict = {"request_id": request_id, "status": "ok", "output_path": output_path}
    if metrics:
        payload["metrics"] = dict(metrics)
    return canonical_line(payload)


def error_line(request_id: str, error_kind: str, message: str) -> str:
    return canonical_line(
        {
            "request_id": request_id,
            "status": "error",
            "error_kind": error_kind,
            "message": message,
        }
    )
