"""The stdio worker: exactly one response line per request line.

stdout carries nothing but response lines; all logging goes to
stderr.  Any handler exception becomes a status=error response with
error_kind=internal, so the loop survives everything a request can
throw at it.  EOF on stdin ends the loop and the process exits 0.
"""

from __future__ import annotations

import json
import logging
import sys

from .handlers import ArgError, default_handlers
from .wire import (
    ERROR_BAD_ARGS,
    ERROR_BAD_REQUEST,
    ERROR_INTERNAL,
    ERROR_UNKNOWN_TOOL,
    ERROR_UNSUPPORTED_VERSION,
    PROTOCOL_VERSION,
    WireError,
    error_line,
    ok_line,
    parse_request,
)

log = logging.getLogger("easel_adapter")

# A response must carry an id even when the request line was too
# broken to have one; hosts treat this marker as "id unrecoverable".
UNKNOWN_REQUEST_ID = "unknown"


def _salvage_id(line: str) -> str:
    try:
        obj = json.loads(line)
    except ValueError:
        return UNKNOWN_REQUEST_ID
    if isinstance(obj, dict):
        request_id = obj.get("request_id")
        if isinstance(request_id, str) and request_id:
            return request_id
    return UNKNOWN_REQUEST_ID


class AdapterWorker:
    """Dispatch loop over a map of tool name to handler function."""

    def __init__(self, handlers: dict | None = None):
        self.handlers = dict(handlers) if handlers is not None else default_handlers()

    def respond(self, line: str) -> str:
        """One response line for one request line; never raises."""
        try:
            request = parse_request(line)
        except WireError as exc:
            log.warning("rejected request line: %s", exc)
            return error_line(_salvage_id(line), ERROR_BAD_REQUEST, str(exc))
        if request.protocol_version != PROTOCOL_VERSION:
            return error_line(
                request.request_id,
                ERROR_UNSUPPORTED_VERSION,
                f"this worker speaks protocol_version {PROTOCOL_VERSION}",
            )
        handler = self.handlers.get(request.tool)
        if handler is None:
            return error_line(
                request.request_id,
                ERROR_UNKNOWN_TOOL,
                f"no adapter for tool {request.tool!r}",
            )
        try:
            result = handler(request)
        except ArgError as exc:
            log.warning("%s %s: %s", request.tool, request.request_id, exc)
            return error_line(request.request_id, ERROR_BAD_ARGS, str(exc))
        except Exception as exc:
            log.exception("%s %s crashed", request.tool, request.request_id)
            return error_line(
                request.request_id, ERROR_INTERNAL, f"{type(exc).__name__}: {exc}"
            )
        return ok_line(request.request_id, result.output_path, result.metrics)

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        for line in stdin:
            if not line.strip():
                continue
            stdout.write(self.respond(line))
            stdout.flush()


def main() -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="easel-adapter %(levelname)s: %(message)s"
    )
    # The wire is UTF-8 regardless of locale.
    sys.stdin.reconfigure(encoding="utf-8")
    sys.stdout.reconfigure(encoding="utf-8")
    log.info("serving %s on stdio", ", ".join(sorted(default_handlers())))
    AdapterWorker().serve()
    return 0
