"""Adapter transports: stdio child processes and HTTP endpoints.

The stdio transport is strictly sequential: one request in flight, the
next line on stdout must be its response.  The HTTP transport has no
ordering constraint; each POST carries one request payload and the body
of the reply is one response object.

Adapter stderr is passed through to our stderr untouched: workers log
there, and the response stream must stay pure JSONL.
"""

from __future__ import annotations

import queue
import subprocess
import sys
import threading
import uuid
from dataclasses import dataclass, field

import requests

from .errors import (
    AdapterRemoteError,
    AdapterTimeoutError,
    ProtocolViolationError,
)
from .protocol import AdapterRequest, AdapterResponse, parse_response_line

DEFAULT_TIMEOUT_S = 30.0


class AdapterClient:
    """Interface both transports implement."""

    def call(self, request: AdapterRequest, timeout: float = DEFAULT_TIMEOUT_S) -> AdapterResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


class StdioAdapterClient(AdapterClient):
    """Talks to a worker subprocess over stdin/stdout JSONL."""

    def __init__(self, command: list[str], cwd: str | None = None):
        self.command = list(command)
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=sys.stderr.fileno() if hasattr(sys.stderr, "fileno") else None,
            cwd=cwd,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._lock = threading.Lock()

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def call(self, request: AdapterRequest, timeout: float = DEFAULT_TIMEOUT_S) -> AdapterResponse:
        with self._lock:
            if self._proc.poll() is not None:
                raise ProtocolViolationError(
                    f"adapter process exited with code {self._proc.returncode}"
                )
            assert self._proc.stdin is not None
            try:
                self._proc.stdin.write(request.to_line())
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                raise ProtocolViolationError(f"adapter stdin closed: {exc}") from None
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise AdapterTimeoutError(
                    f"adapter gave no response within {timeout}s for {request.request_id}"
                ) from None
            if line is None:
                raise ProtocolViolationError("adapter closed its response stream")
            response = parse_response_line(line)
            if response.request_id != request.request_id:
                raise ProtocolViolationError(
                    f"response id {response.request_id!r} does not match "
                    f"request id {request.request_id!r}"
                )
            return response

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()


class HttpAdapterClient(AdapterClient):
    """POSTs one request payload per call to a fixed URL."""

    def __init__(self, url: str, session: requests.Session | None = None):
        self.url = url
        self._session = session or requests.Session()

    def call(self, request: AdapterRequest, timeout: float = DEFAULT_TIMEOUT_S) -> AdapterResponse:
        try:
            http_resp = self._session.post(
                self.url,
                data=request.to_line().encode("utf-8"),
                headers={"Content-Type": "application/json"},
                timeout=timeout,
            )
        except requests.Timeout:
            raise AdapterTimeoutError(
                f"adapter at {self.url} timed out after {timeout}s"
            ) from None
        except requests.RequestException as exc:
            raise ProtocolViolationError(f"adapter HTTP transport failed: {exc}") from None
        if http_resp.status_code != 200:
            raise ProtocolViolationError(
                f"adapter returned HTTP {http_resp.status_code}"
            )
        response = parse_response_line(http_resp.text.strip("\n"))
        if response.request_id != request.request_id:
            raise ProtocolViolationError(
                f"response id {response.request_id!r} does not match "
                f"request id {request.request_id!r}"
            )
        return response

    def close(self) -> None:
        self._session.close()


def invoke_external(
    client: AdapterClient,
    tool: str,
    args: dict,
    input_paths: list[str] | tuple[str, ...] = (),
    request_id: str | None = None,
    timeout: float = DEFAULT_TIMEOUT_S,
) -> AdapterResponse:
    """Send one tool request; return the ok response.

    An error-status response is raised as AdapterRemoteError with the
    structured response attached, so callers can report error_kind.
    """
    request = AdapterRequest(
        tool=tool,
        args=args,
        input_paths=tuple(input_paths),
        request_id=request_id or uuid.uuid4().hex,
    )
    response = client.call(request, timeout=timeout)
    if response.status == "error":
        raise AdapterRemoteError(
            f"{tool}: {response.error_kind}: {response.message}", response=response
        )
    return response


# --- conformance ------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    status: str  # pass | fail | warn
    detail: str = ""


@dataclass
class ConformanceReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def summary(self) -> str:
        return "\n".join(f"[{c.status:4}] {c.name}: {c.detail}" for c in self.checks)


def conformance_check(
    client: AdapterClient,
    probe_tool: str,
    probe_args: dict,
    probe_inputs: list[str],
    deterministic: bool = True,
    timeout: float = DEFAULT_TIMEOUT_S,
) -> ConformanceReport:
    """Black-box checks any conforming adapter must pass.

    `probe_tool`/`probe_args`/`probe_inputs` describe one valid call the
    adapter is expected to answer with status ok.
    """
    report = ConformanceReport()

    def check(name):
        def wrap(fn):
            try:
                status, detail = fn()
            except Exception as exc:
                status, detail = "fail", f"{type(exc).__name__}: {exc}"
            report.checks.append(CheckResult(name, status, detail))

        return wrap

    @check("request id echo")
    def _():
        rid = f"conf-{uuid.uuid4().hex[:8]}"
        resp = client.call(
            AdapterRequest(probe_tool, probe_args, tuple(probe_inputs), rid),
            timeout=timeout,
        )
        if resp.request_id != rid:
            return "fail", f"echoed {resp.request_id!r}"
        return "pass", "response carries the request's id"

    @check("ok response shape")
    def _():
        resp = client.call(
            AdapterRequest(probe_tool, probe_args, tuple(probe_inputs), "conf-shape"),
            timeout=timeout,
        )
        if resp.status != "ok":
            return "fail", f"expected ok, got {resp.status}: {resp.message}"
        if not resp.output_path:
            return "fail", "ok response without output_path"
        return "pass", f"output_path={resp.output_path}"

    @check("error shape on bad args")
    def _():
        bad = dict(probe_args)
        bad["__definitely_missing_file__"] = "/nonexistent/nope.png"
        # Remove a required arg as well, to provoke a validation error.
        if probe_args:
            bad.pop(next(iter(probe_args)), None)
        try:
            resp = client.call(
                AdapterRequest(probe_tool, bad, (), "conf-bad-args"), timeout=timeout
            )
        except ProtocolViolationError as exc:
            return "fail", f"transport violation instead of error response: {exc}"
        if resp.status != "error":
            return "fail", "adapter accepted clearly invalid arguments"
        if not resp.error_kind or resp.message is None:
            return "fail", "error response missing error_kind/message"
        return "pass", f"error_kind={resp.error_kind}"

    @check("unknown tool reported as error")
    def _():
        resp = client.call(
            AdapterRequest("NoSuchToolXyz", {}, (), "conf-unknown"), timeout=timeout
        )
        if resp.status != "error":
            return "fail", "adapter claimed success for an unknown tool"
        return "pass", f"error_kind={resp.error_kind}"

    @check("unknown args tolerated")
    def _():
        extra = dict(probe_args)
        extra["x_conformance_unknown_arg"] = "ignore-me"
        resp = client.call(
            AdapterRequest(probe_tool, extra, tuple(probe_inputs), "conf-extra"),
            timeout=timeout,
        )
        if resp.status == "ok":
            return "warn", "adapter ignored an unknown argument (allowed)"
        return "pass", "adapter rejected the unknown argument"

    if deterministic:

        @check("idempotent re-invocation")
        def _():
            first = client.call(
                AdapterRequest(probe_tool, probe_args, tuple(probe_inputs), "conf-idem-1"),
                timeout=timeout,
            )
            second = client.call(
                AdapterRequest(probe_tool, probe_args, tuple(probe_inputs), "conf-idem-2"),
                timeout=timeout,
            )
            if first.status != "ok" or second.status != "ok":
                return "fail", "probe call stopped succeeding"
            if first.metrics != second.metrics:
                return "fail", f"metrics changed: {first.metrics} vs {second.metrics}"
            from pathlib import Path

            a, b = Path(first.output_path), Path(second.output_path)
            if a.exists() and b.exists() and a.read_bytes() != b.read_bytes():
                return "fail", "same request produced different output bytes"
            return "pass", "repeat call matches"

    return report
