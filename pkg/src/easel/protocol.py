"""Adapter wire protocol: one JSON object per line, UTF-8, both ways.

A request line asks an adapter to run one tool; the adapter answers
with exactly one response line carrying the same request_id.  The
protocol is transport-agnostic: the same payloads travel over a child
process's stdin/stdout or over HTTP POST bodies.

Serialization is canonical so independent implementations produce the
same bytes for the same message: keys sorted, separators ``,`` and
``:`` with no spaces, non-ASCII kept verbatim (ensure_ascii off), one
trailing newline.  The normative vectors under protocol/vectors/ are
stored in exactly this form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ProtocolViolationError

PROTOCOL_VERSION = 1

# Suggested error_kind values.  Adapters may use others; these are the
# ones the engine itself emits and tests rely on.
ERROR_BAD_ARGS = "bad_args"
ERROR_UNKNOWN_TOOL = "unknown_tool"
ERROR_UNSUPPORTED_VERSION = "unsupported_version"
ERROR_INTERNAL = "internal"

_SCALAR_TYPES = (str, int, float, bool)


def canonical_json(payload: dict) -> str:
    """The one true serialization: sorted keys, compact, UTF-8 verbatim."""
    return json.dumps(
        payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


@dataclass(frozen=True)
class AdapterRequest:
    tool: str
    args: dict = field(default_factory=dict)
    input_paths: tuple[str, ...] = ()
    request_id: str = ""
    protocol_version: int = PROTOCOL_VERSION

    def to_payload(self) -> dict:
        return {
            "protocol_version": self.protocol_version,
            "tool": self.tool,
            "args": dict(self.args),
            "input_paths": list(self.input_paths),
            "request_id": self.request_id,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_payload()) + "\n"


@dataclass(frozen=True)
class AdapterResponse:
    request_id: str
    status: str  # ok | error
    output_path: str | None = None
    error_kind: str | None = None
    message: str | None = None
    metrics: dict = field(default_factory=dict)

    @classmethod
    def ok(cls, request_id: str, output_path: str, metrics: dict | None = None):
        return cls(request_id, "ok", output_path=output_path, metrics=metrics or {})

    @classmethod
    def error(cls, request_id: str, error_kind: str, message: str):
        return cls(request_id, "error", error_kind=error_kind, message=message)

    def to_payload(self) -> dict:
        payload: dict = {"request_id": self.request_id, "status": self.status}
        if self.status == "ok":
            payload["output_path"] = self.output_path
        else:
            payload["error_kind"] = self.error_kind
            payload["message"] = self.message
        if self.metrics:
            payload["metrics"] = dict(self.metrics)
        return payload

    def to_line(self) -> str:
        return canonical_json(self.to_payload()) + "\n"


def _decode_object(line: str | bytes, what: str) -> dict:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolViolationError(f"{what} line is not UTF-8: {exc}") from None
    stripped = line.strip("\r\n")
    if "\n" in stripped or "\r" in stripped:
        raise ProtocolViolationError(f"{what} spans multiple lines")
    if not stripped.strip():
        raise ProtocolViolationError(f"empty {what} line")
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ProtocolViolationError(f"{what} line is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolViolationError(f"{what} line is not a JSON object")
    return obj


def parse_request_line(line: str | bytes) -> AdapterRequest:
    obj = _decode_object(line, "request")
    version = obj.get("protocol_version")
    if not isinstance(version, int) or isinstance(version, bool) or version < 1:
        raise ProtocolViolationError(f"bad protocol_version: {version!r}")
    tool = obj.get("tool")
    if not isinstance(tool, str) or not tool:
        raise ProtocolViolationError("request needs a non-empty string 'tool'")
    args = obj.get("args", {})
    if not isinstance(args, dict):
        raise ProtocolViolationError("'args' must be an object")
    for key, value in args.items():
        if not isinstance(key, str):
            raise ProtocolViolationError("argument names must be strings")
        if value is not None and not isinstance(value, _SCALAR_TYPES):
            raise ProtocolViolationError(
                f"argument {key!r} must be a scalar, got {type(value).__name__}"
            )
    paths = obj.get("input_paths", [])
    if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
        raise ProtocolViolationError("'input_paths' must be a list of strings")
    request_id = obj.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise ProtocolViolationError("request needs a non-empty string 'request_id'")
    unknown = set(obj) - {"protocol_version", "tool", "args", "input_paths", "request_id"}
    if unknown:
        raise ProtocolViolationError(f"unknown request field(s): {sorted(unknown)}")
    return AdapterRequest(
        tool=tool,
        args=args,
        input_paths=tuple(paths),
        request_id=request_id,
        protocol_version=version,
    )


def parse_response_line(line: str | bytes) -> AdapterResponse:
    obj = _decode_object(line, "response")
    request_id = obj.get("request_id")
    if not isinstance(request_id, str) or not request_id:
        raise ProtocolViolationError("response needs a non-empty string 'request_id'")
    status = obj.get("status")
    if status not in ("ok", "error"):
        raise ProtocolViolationError(f"bad status: {status!r}")
    output_path = obj.get("output_path")
    error_kind = obj.get("error_kind")
    message = obj.get("message")
    if status == "ok":
        if not isinstance(output_path, str) or not output_path:
            raise ProtocolViolationError("ok response needs 'output_path'")
        if error_kind is not None or message is not None:
            raise ProtocolViolationError("ok response must not carry error fields")
    else:
        if output_path is not None:
            raise ProtocolViolationError("error response must not carry 'output_path'")
        if not isinstance(error_kind, str) or not error_kind:
            raise ProtocolViolationError("error response needs 'error_kind'")
        if not isinstance(message, str):
            raise ProtocolViolationError("error response needs 'message'")
    metrics = obj.get("metrics", {})
    if not isinstance(metrics, dict):
        raise ProtocolViolationError("'metrics' must be an object")
    for key, value in metrics.items():
        if not isinstance(key, str) or isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ProtocolViolationError("metrics must map strings to numbers")
    unknown = set(obj) - {
        "request_id", "status", "output_path", "error_kind", "message", "metrics",
    }
    if unknown:
        raise ProtocolViolationError(f"unknown response field(s): {sorted(unknown)}")
    return AdapterResponse(
        request_id=request_id,
        status=status,
        output_path=output_path,
        error_kind=error_kind,
        message=message,
        metrics=metrics,
    )
