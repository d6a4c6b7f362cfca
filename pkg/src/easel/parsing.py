"""Parsers for model output: plans, tool calls, verdicts, questions.

Model text is untrusted.  Every parser here either returns a fully
validated structure or raises a FormatError subclass; callers get one
re-prompt and then fail hard, so the parsers never guess silently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import (
    FormatError,
    NoQuestionsFoundError,
    NoSubtasksFoundError,
    UnknownToolNameError,
)

# Tool call grammar: "ToolName @@ arg1 <-> arg2 <-> arg3".
# Both the ASCII "<->" and the arrow "↔" separate arguments on input;
# rendering always emits the ASCII form.
CALL_MARKER = "@@"
ARG_SEPARATOR = "<->"
ARG_SEPARATOR_ALT = "↔"

_SEPARATOR_RE = re.compile(r"<->|↔")


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: tuple[str, ...]

    def render(self) -> str:
        return render_tool_call(self.tool, self.args)


def parse_tool_call(text: str) -> ToolCall:
    """Parse the first tool-call line out of a model response.

    The call line is the first line containing "@@".  Text before the
    tool name and anything on other lines is ignored, which tolerates
    chatty preambles without loosening the grammar of the line itself.
    """
    line = None
    for candidate in text.splitlines():
        if CALL_MARKER in candidate:
            line = candidate
            break
    if line is None:
        raise FormatError("no tool call line found: expected 'tool @@ arguments'")
    head, _, tail = line.partition(CALL_MARKER)
    tool = head.strip()
    if not tool or len(tool.split()) != 1:
        raise FormatError(f"tool name before '@@' must be a single token, got {head.strip()!r}")
    if CALL_MARKER in tail:
        raise FormatError("'@@' may appear only once, between tool name and arguments")
    tail = tail.strip()
    if tail == "":
        args: tuple[str, ...] = ()
    else:
        args = tuple(part.strip() for part in _SEPARATOR_RE.split(tail))
    return ToolCall(tool, args)


def render_tool_call(tool: str, args: tuple[str, ...] | list[str]) -> str:
    """Render a call in canonical form; inverse of parse_tool_call.

    Arguments may contain spaces but not the separators themselves or
    newlines, and outer whitespace is stripped on parse, so it is
    rejected here to keep the round trip exact.  The one unparseable
    shape, a single empty argument, is rejected too: "tool @@" parses
    back as zero arguments.
    """
    tool = tool.strip()
    if not tool or len(tool.split()) != 1:
        raise FormatError(f"tool name must be a single token, got {tool!r}")
    if CALL_MARKER in tool:
        raise FormatError("tool name cannot contain '@@'")
    if list(args) == [""]:
        raise FormatError("a single empty argument is not representable; use no arguments")
    for arg in args:
        if arg != arg.strip():
            raise FormatError(f"argument has outer whitespace: {arg!r}")
        if _SEPARATOR_RE.search(arg):
            raise FormatError(f"argument contains a separator: {arg!r}")
        if CALL_MARKER in arg:
            raise FormatError(f"argument contains '@@': {arg!r}")
        if len(arg.splitlines()) > 1:
            raise FormatError(f"argument contains a line break: {arg!r}")
    if not args:
        return f"{tool} {CALL_MARKER}"
    return f"{tool} {CALL_MARKER} " + f" {ARG_SEPARATOR} ".join(args)


# --- plans -------------------------------------------------------------------

_ITEM_START_RE = re.compile(r"(?:(?<=^)|(?<=[\n;:]))\s*(\d{1,2})\s*[.)]\s+")


def _fold(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


@dataclass(frozen=True)
class ParsedSubtask:
    index: int
    goal_text: str
    tool_name: str


class KeepPlan:
    """Marker result: the reflection chose to keep the current plan."""

    def __repr__(self) -> str:
        return "KeepPlan()"


def split_numbered_items(text: str) -> list[str]:
    """Split text into numbered list items.

    Items may sit on their own lines or run together on one line
    separated by semicolons ("1. do this; 2. do that").  Returns the
    item bodies in order of appearance, without the numbers.
    """
    matches = list(_ITEM_START_RE.finditer(text))
    items = []
    for pos, match in enumerate(matches):
        end = matches[pos + 1].start() if pos + 1 < len(matches) else len(text)
        body = text[match.end():end].strip().rstrip(";").strip()
        if body:
            items.append(body)
    return items


def resolve_tool_mention(line: str, tool_names: list[str]) -> str | None:
    """Find which registered tool a plan line names.

    Matching is case- and punctuation-insensitive (both sides folded to
    lowercase alphanumerics).  When several names occur, the longest
    folded name wins, and among equal lengths the rightmost mention
    wins, so "... using ImageDifferenceLLaVA" resolves to the composite
    tool rather than to LLaVA.
    """
    folded_line = _fold(line)
    best: tuple[int, int] | None = None
    best_name = None
    for name in tool_names:
        folded = _fold(name)
        if not folded:
            continue
        pos = folded_line.rfind(folded)
        if pos < 0:
            continue
        rank = (len(folded), pos)
        if best is None or rank > best:
            best = rank
            best_name = name
    return best_name


def parse_plan(text: str, tool_names: list[str]) -> list[ParsedSubtask]:
    """Parse a numbered plan, resolving each line to a registered tool.

    Raises NoSubtasksFoundError when no numbered items appear, and
    UnknownToolNameError (carrying the offending line) when an item
    names no registered tool.  Indices are re-numbered contiguously
    from 1 regardless of the numbers the model wrote.
    """
    items = split_numbered_items(text)
    if not items:
        raise NoSubtasksFoundError("response contains no numbered subtasks")
    subtasks = []
    for index, body in enumerate(items, start=1):
        tool = resolve_tool_mention(body, tool_names)
        if tool is None:
            raise UnknownToolNameError(
                f"subtask names no registered tool: {body!r}", line=body
            )
        subtasks.append(ParsedSubtask(index=index, goal_text=body, tool_name=tool))
    return subtasks


def parse_reflection(text: str, tool_names: list[str]) -> list[ParsedSubtask] | KeepPlan:
    """Parse a plan revision: either "No" (keep) or a full revised plan."""
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        first = re.split(r"[\s,.:;!]+", stripped, maxsplit=1)[0].strip("\"'").lower()
        if first == "no":
            return KeepPlan()
        break
    return parse_plan(text, tool_names)


# --- verdicts and questions ---------------------------------------------------

_TOKEN_SPLIT_RE = re.compile(r"[\s,.:;!?]+")

AUXILIARY_VERBS = (
    "is", "are", "was", "were", "does", "do", "did",
    "has", "have", "had", "can", "could", "will", "would", "should",
)


def parse_yes_no(text: str) -> tuple[str, str]:
    """Classify an answer as ("yes" | "no" | "unknown", explanation).

    The verdict is the leading token of the reply; anything else is
    "unknown" with the whole reply as the explanation.
    """
    stripped = text.strip()
    if not stripped:
        return "unknown", ""
    parts = _TOKEN_SPLIT_RE.split(stripped, maxsplit=1)
    head = parts[0].strip("\"'()").lower()
    rest = parts[1].strip() if len(parts) > 1 else ""
    if head == "yes":
        return "yes", rest
    if head == "no":
        return "no", rest
    return "unknown", stripped


def parse_questions(text: str, max_questions: int = 5) -> list[str]:
    """Parse generated verification questions.

    A valid question ends with "?" and starts with an auxiliary verb.
    Invalid items are dropped; an output with no valid questions raises
    NoQuestionsFoundError.  At most max_questions are kept, in order.
    """
    questions = []
    for body in split_numbered_items(text):
        candidate = body.strip()
        if not candidate.endswith("?"):
            continue
        first = _TOKEN_SPLIT_RE.split(candidate, maxsplit=1)[0].lower()
        if first not in AUXILIARY_VERBS:
            continue
        questions.append(candidate)
        if len(questions) == max_questions:
            break
    if not questions:
        raise NoQuestionsFoundError("response contains no usable yes-or-no questions")
    return questions
