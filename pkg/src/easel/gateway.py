"""One gate for every model completion the engine makes.

All agent reasoning flows through `Gateway.complete` as a ChatExchange,
which gives three guarantees in one place:

* every exchange is keyed by a content hash (template id + rendered
  prompt + params), so a recorded session can be replayed without any
  network access, and a replay miss is an error rather than a silent
  live call;
* transient network failures are retried with capped exponential
  backoff, at most three attempts;
* a session-level completion budget is enforced.

Backends are swappable: a live HTTP endpoint, a FIFO queue of canned
responses, a pattern table, or an arbitrary deterministic callable
(the benchmark's rule-based planner is exactly that).
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import requests

from .errors import (
    BackendUnavailableError,
    NetworkError,
    ReplayMissError,
    TokenBudgetExceededError,
)

MODE_LIVE = "live"
MODE_RECORD = "record"
MODE_REPLAY = "replay"


@dataclass(frozen=True)
class CompletionParams:
    model_id: str = "strong"
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int | None = None

    def to_payload(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
        }


@dataclass
class ChatExchange:
    """One prompt/response pair, as recorded in transcripts."""

    template_id: str
    prompt: str
    params: CompletionParams
    response: str = ""
    key: str = ""

    def to_payload(self) -> dict:
        return {
            "template_id": self.template_id,
            "prompt": self.prompt,
            "params": self.params.to_payload(),
            "response": self.response,
            "key": self.key,
        }


def prompt_key(template_id: str, prompt: str, params: CompletionParams) -> str:
    """SHA-256 over a canonical encoding of (template id, prompt, params)."""
    material = json.dumps(
        {"template_id": template_id, "prompt": prompt, "params": params.to_payload()},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


# --- backends ---------------------------------------------------------------


class Backend:
    """A completion source: returns the raw response text for an exchange."""

    def complete(self, exchange: ChatExchange) -> str:
        raise NotImplementedError


class QueueBackend(Backend):
    """Serves canned responses in FIFO order.  For single-threaded tests."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.consumed = 0

    def push(self, *responses: str) -> None:
        with self._lock:
            self._responses.extend(responses)

    def complete(self, exchange: ChatExchange) -> str:
        with self._lock:
            if not self._responses:
                raise BackendUnavailableError(
                    f"queue backend exhausted at {exchange.template_id}"
                )
            self.consumed += 1
            return self._responses.pop(0)


@dataclass(frozen=True)
class PatternRule:
    response: str
    template_id: str | None = None
    contains: str | None = None

    def matches(self, exchange: ChatExchange) -> bool:
        if self.template_id is not None and exchange.template_id != self.template_id:
            return False
        if self.contains is not None and self.contains not in exchange.prompt:
            return False
        return True


class PatternBackend(Backend):
    """Stateless scripted backend: first matching rule wins.

    Safe under concurrency, which makes it the right scripted backend
    for multi-agent sessions.
    """

    def __init__(self, rules: list[PatternRule]):
        self.rules = list(rules)

    @classmethod
    def from_jsonl(cls, path: Path) -> "PatternBackend":
        rules = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            rules.append(
                PatternRule(
                    response=obj["response"],
                    template_id=obj.get("template"),
                    contains=obj.get("contains"),
                )
            )
        return cls(rules)

    def complete(self, exchange: ChatExchange) -> str:
        for rule in self.rules:
            if rule.matches(exchange):
                return rule.response
        raise BackendUnavailableError(
            f"no scripted rule matches template {exchange.template_id!r}"
        )


class CallableBackend(Backend):
    """Wraps a deterministic function of the exchange."""

    def __init__(self, fn):
        self._fn = fn

    def complete(self, exchange: ChatExchange) -> str:
        return self._fn(exchange)


class RemoteBackend(Backend):
    """OpenAI-style chat completions over HTTP."""

    def __init__(self, base_url: str, api_key: str = "", session=None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, exchange: ChatExchange) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": exchange.params.model_id,
            "messages": [{"role": "user", "content": exchange.prompt}],
            "temperature": exchange.params.temperature,
            "max_tokens": exchange.params.max_tokens,
        }
        if exchange.params.seed is not None:
            body["seed"] = exchange.params.seed
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=body,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise NetworkError(f"completion call failed: {exc}") from None
        if resp.status_code >= 500:
            raise NetworkError(f"completion endpoint returned {resp.status_code}")
        if resp.status_code != 200:
            raise BackendUnavailableError(
                f"completion endpoint rejected the request: {resp.status_code} {resp.text[:200]}"
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise NetworkError(f"malformed completion response: {exc}") from None


# --- replay store --------------------------------------------------------------


class ReplayStore:
    """Keyed prompt/response records, persisted as JSONL.

    The first response recorded for a key wins; replay always returns
    it.  With deterministic backends a key never maps to two distinct
    responses, so this is exact.  A live backend at temperature > 0 can
    produce different responses for a repeated identical prompt, and
    replay will flatten those onto the first; such sessions fail the
    replay hash check rather than silently diverging.
    """

    def __init__(self):
        self._records: dict[str, str] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def record(self, key: str, response: str) -> None:
        with self._lock:
            self._records.setdefault(key, response)

    def lookup(self, key: str) -> str:
        try:
            return self._records[key]
        except KeyError:
            raise ReplayMissError(f"no recorded response for key {key[:16]}…") from None

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for key in sorted(self._records):
                fh.write(
                    json.dumps(
                        {"key": key, "response": self._records[key]},
                        sort_keys=True,
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        tmp.replace(path)

    @classmethod
    def load(cls, path: Path) -> "ReplayStore":
        store = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                obj = json.loads(line)
                store.record(obj["key"], obj["response"])
        return store


# --- budget ----------------------------------------------------------------------


class CompletionBudget:
    """Rough token accounting: one token per four prompt/response chars."""

    def __init__(self, max_tokens: int | None):
        self.max_tokens = max_tokens
        self.used = 0
        self._lock = threading.Lock()

    def charge(self, prompt: str, response: str) -> None:
        if self.max_tokens is None:
            return
        with self._lock:
            self.used += (len(prompt) + len(response)) // 4
            if self.used > self.max_tokens:
                raise TokenBudgetExceededError(
                    f"completion budget exhausted: {self.used} > {self.max_tokens} tokens"
                )


# --- the gateway -------------------------------------------------------------------


MAX_ATTEMPTS = 3
BACKOFF_BASE_S = 0.5
BACKOFF_CAP_S = 2.0


class Gateway:
    """Routes completions through one backend with one policy."""

    def __init__(
        self,
        backend: Backend | None = None,
        store: ReplayStore | None = None,
        mode: str = MODE_LIVE,
        budget: CompletionBudget | None = None,
        sleeper=time.sleep,
    ):
        if mode not in (MODE_LIVE, MODE_RECORD, MODE_REPLAY):
            raise ValueError(f"unknown gateway mode: {mode}")
        if mode == MODE_REPLAY:
            if store is None:
                raise BackendUnavailableError("replay mode needs a replay store")
            backend = None  # replay never touches a live backend
        elif backend is None:
            raise BackendUnavailableError(f"{mode} mode needs a backend")
        if mode == MODE_RECORD and store is None:
            store = ReplayStore()
        self.backend = backend
        self.store = store
        self.mode = mode
        self.budget = budget or CompletionBudget(None)
        self._sleeper = sleeper

    def complete(self, template_id: str, prompt: str, params: CompletionParams) -> ChatExchange:
        key = prompt_key(template_id, prompt, params)
        exchange = ChatExchange(template_id, prompt, params, key=key)
        if self.mode == MODE_REPLAY:
            exchange.response = self.store.lookup(key)
        else:
            exchange.response = self._complete_live(exchange)
            if self.mode == MODE_RECORD:
                self.store.record(key, exchange.response)
        self.budget.charge(prompt, exchange.response)
        return exchange

    def _complete_live(self, exchange: ChatExchange) -> str:
        delay = BACKOFF_BASE_S
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                return self.backend.complete(exchange)
            except NetworkError:
                if attempt == MAX_ATTEMPTS:
                    raise
                self._sleeper(min(delay, BACKOFF_CAP_S))
                delay *= 2
        raise AssertionError("unreachable")

    def with_params(self, params: CompletionParams, **overrides) -> CompletionParams:
        return replace(params, **overrides)
