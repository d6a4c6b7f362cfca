"""Session transcripts: serialization, atomic persistence, event linting.

A transcript is a versioned JSON document containing the config
snapshot, the request, every round's plans/traces/feedback, the full
ordered event stream, and every prompt/response exchange.  Everything
in it is plain JSON data so a transcript can be diffed, replayed, and
machine-checked.

The event linter enforces the round shape: within a round, plan events
come first, then execute, feedback, decompose, one compete, one memory
update, and one stop check, with the same agents appearing in every
per-agent phase.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import SchemaVersionMismatchError, TranscriptLintError
from .model import (
    ExecutionTrace,
    FeedbackReport,
    Plan,
    StepRecord,
    SubtaskFeedback,
)

TRANSCRIPT_SCHEMA_VERSION = 1

TRANSCRIPT_FILENAME = "transcript.json"

# Per-agent phases happen once per participating agent; the round then
# closes with exactly one compete, memory, and stop_check event.
AGENT_PHASES = ("plan", "execute", "feedback", "decompose")
ROUND_PHASES = AGENT_PHASES + ("compete", "memory", "stop_check")


# --- payload builders ----------------------------------------------------------


def plan_payload(plan: Plan) -> dict:
    return {
        "round": plan.round_index,
        "agent": plan.agent_id,
        "provenance": plan.provenance,
        "subtasks": [
            {
                "index": s.index,
                "goal": s.goal_text,
                "tool": s.tool_name,
                "args": dict(s.bound_args) if s.bound_args else None,
                "status": s.status,
            }
            for s in plan.subtasks
        ],
    }


def step_payload(step: StepRecord) -> dict:
    return {
        "index": step.index,
        "tool": step.tool_name,
        "call": step.call,
        "input": step.input_id,
        "output": step.output_id,
        "duration": step.duration,
        "error": step.error,
        "chained": step.chained,
    }


def trace_payload(trace: ExecutionTrace) -> dict:
    return {
        "round": trace.round_index,
        "agent": trace.agent_id,
        "steps": [step_payload(s) for s in trace.steps],
        "final_output": trace.final_output.id if trace.final_output else None,
    }


def feedback_payload(report: FeedbackReport) -> dict:
    return {
        "answers": [
            {
                "question": a.question.text,
                "kind": a.question.kind,
                "verdict": a.verdict,
                "explanation": a.explanation,
            }
            for a in report.answers
        ],
        "summary": report.summary,
        "satisfied": report.satisfied_count,
        "total": report.total_checks,
        "aesthetic": report.aesthetic,
    }


def subtask_feedback_payload(feedback: SubtaskFeedback) -> dict:
    return {
        "index": feedback.index,
        "verdict": feedback.verdict,
        "note": feedback.note,
        "suggestion": {
            "kind": feedback.suggestion.kind,
            "tool": feedback.suggestion.tool,
        },
    }


# --- persistence ----------------------------------------------------------------


def transcript_text(doc: dict) -> str:
    """The canonical byte representation used for on-disk transcripts."""
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def persist_transcript(doc: dict, directory: str | Path) -> Path:
    """Write the transcript atomically; readers never see a partial file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / TRANSCRIPT_FILENAME
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(transcript_text(doc), encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_transcript(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("schema_version") if isinstance(doc, dict) else None
    if version != TRANSCRIPT_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"transcript schema {version!r} is not supported "
            f"(expected {TRANSCRIPT_SCHEMA_VERSION})"
        )
    return doc


# --- event linting ---------------------------------------------------------------


def lint_events(events: list[dict]) -> None:
    """Check the event stream against the round-loop structure.

    Raises TranscriptLintError naming the first offending event.
    """
    if not events:
        raise TranscriptLintError("transcript contains no events")
    rounds: list[tuple[int, list[dict]]] = []
    for event in events:
        kind = event.get("event")
        if kind not in ROUND_PHASES:
            raise TranscriptLintError(f"unknown event type {kind!r}")
        m = event.get("round")
        if not isinstance(m, int) or m < 1:
            raise TranscriptLintError(f"event {kind!r} has invalid round {m!r}")
        if not rounds or rounds[-1][0] != m:
            rounds.append((m, []))
        rounds[-1][1].append(event)
    indices = [m for m, _ in rounds]
    if indices != list(range(1, len(indices) + 1)):
        raise TranscriptLintError(f"round sequence {indices} is not contiguous from 1")
    for m, group in rounds:
        _lint_round(m, group)


def _lint_round(m: int, group: list[dict]) -> None:
    phase_order = {phase: i for i, phase in enumerate(ROUND_PHASES)}
    agents_by_phase: dict[str, list[int]] = {phase: [] for phase in AGENT_PHASES}
    closing = []
    last_phase = -1
    for event in group:
        kind = event["event"]
        rank = phase_order[kind]
        if rank < last_phase:
            raise TranscriptLintError(
                f"round {m}: {kind!r} appears after a later phase"
            )
        last_phase = rank
        if kind in agents_by_phase:
            agents_by_phase[kind].append(event.get("agent"))
        else:
            closing.append(kind)
    for phase, agents in agents_by_phase.items():
        if not agents:
            raise TranscriptLintError(f"round {m}: no {phase!r} events")
        if any(not isinstance(a, int) for a in agents):
            raise TranscriptLintError(f"round {m}: {phase!r} event missing agent id")
        if agents != sorted(set(agents)):
            raise TranscriptLintError(
                f"round {m}: {phase!r} agents {agents} not strictly increasing"
            )
    reference = agents_by_phase["plan"]
    for phase in ("execute", "feedback", "decompose"):
        if agents_by_phase[phase] != reference:
            raise TranscriptLintError(
                f"round {m}: {phase!r} agents {agents_by_phase[phase]} "
                f"differ from planned agents {reference}"
            )
    if closing != ["compete", "memory", "stop_check"]:
        raise TranscriptLintError(
            f"round {m}: closing events {closing} are not compete, memory, stop_check"
        )
