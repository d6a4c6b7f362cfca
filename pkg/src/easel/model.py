"""Domain types shared by the planning, execution, and review sides.

Kept in one module so the generator side (plans, traces) and the
reviewer side (feedback, scores, memory) can reference each other's
types without circular imports.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .artifacts import Artifact

PENDING = "pending"
DONE = "done"
FAILED = "failed"

VERDICT_YES = "yes"
VERDICT_NO = "no"
VERDICT_UNKNOWN = "unknown"

ITEM_CHECK = "item_check"
GLOBAL_QUALITY = "global_quality"

SUGGEST_KEEP = "keep"
SUGGEST_RETUNE = "retune_params"
SUGGEST_CHANGE_TOOL = "change_tool"
SUGGEST_CHANGE_GOAL = "change_goal"

# Comparator slot for "no aesthetic measurement"; sorts below any real
# score, which is bounded to [0, 10].
AESTHETIC_UNSET = -1.0


@dataclass(frozen=True)
class UserRequest:
    """What the session is asked to do: source image, goal, caption."""

    image: Artifact
    goal: str
    caption: str

    def __post_init__(self):
        if not self.goal.strip():
            raise ValueError("editing goal must be non-empty")
        if not self.caption.strip():
            raise ValueError("caption must be resolved before building a request")


@dataclass
class Subtask:
    index: int
    goal_text: str
    tool_name: str
    bound_args: dict | None = None
    status: str = PENDING


@dataclass
class Plan:
    round_index: int
    agent_id: int
    subtasks: list[Subtask]
    provenance: str = "initial"

    def __post_init__(self):
        if self.round_index < 1:
            raise ValueError("plans start at round 1")
        if not self.subtasks:
            raise ValueError("a plan needs at least one subtask")
        indices = [s.index for s in self.subtasks]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError(f"subtask indices must be contiguous from 1, got {indices}")

    def lines(self) -> str:
        return "\n".join(f"{s.index}. {s.goal_text}" for s in self.subtasks)


def carry_plan(plan: Plan, round_index: int) -> Plan:
    """The same plan, carried into a new round with fresh statuses."""
    subtasks = [
        replace(s, bound_args=dict(s.bound_args) if s.bound_args else None, status=PENDING)
        for s in plan.subtasks
    ]
    return Plan(round_index, plan.agent_id, subtasks, provenance=plan.provenance)


@dataclass
class StepRecord:
    """One executed subtask: the bound call and the artifact chain link.

    `chained` is False for steps whose output is text or a scalar;
    such outputs are recorded but the image chain continues from the
    last raster artifact.
    """

    index: int
    tool_name: str
    call: str
    input_id: str
    output_id: str | None
    duration: int
    error: str | None = None
    chained: bool = True


@dataclass
class ExecutionTrace:
    round_index: int
    agent_id: int
    steps: list[StepRecord] = field(default_factory=list)
    final_output: Artifact | None = None

    def succeeded_steps(self) -> int:
        return sum(1 for s in self.steps if s.error is None)


def validate_chain(trace: ExecutionTrace, input_id: str) -> None:
    """Chain integrity: every step consumes the last good raster output."""
    current = input_id
    for step in trace.steps:
        if step.input_id != current:
            raise ValueError(
                f"step {step.index} consumed {step.input_id}, expected {current}"
            )
        if step.error is None:
            if step.output_id is None:
                raise ValueError(f"step {step.index} succeeded without an output")
            if step.chained:
                current = step.output_id


# --- review-side types ----------------------------------------------------------


@dataclass(frozen=True)
class Question:
    text: str
    kind: str  # item_check | global_quality

    def __post_init__(self):
        if self.kind not in (ITEM_CHECK, GLOBAL_QUALITY):
            raise ValueError(f"unknown question kind: {self.kind!r}")


@dataclass
class Answer:
    question: Question
    verdict: str  # yes | no | unknown
    explanation: str = ""


@dataclass
class FeedbackReport:
    answers: list[Answer]
    summary: str
    satisfied_count: int
    total_checks: int
    aesthetic: float | None = None

    def satisfied_ratio(self) -> float:
        if self.total_checks == 0:
            return 0.0
        return self.satisfied_count / self.total_checks

    def all_items_satisfied(self) -> bool:
        return self.total_checks >= 1 and self.satisfied_count == self.total_checks


@dataclass(frozen=True)
class Suggestion:
    """Advice for one subtask.  change_tool may name a replacement or
    leave the choice open (tool=None means "pick a different tool")."""

    kind: str  # keep | retune_params | change_tool | change_goal
    tool: str | None = None

    def __post_init__(self):
        if self.kind not in (
            SUGGEST_KEEP,
            SUGGEST_RETUNE,
            SUGGEST_CHANGE_TOOL,
            SUGGEST_CHANGE_GOAL,
        ):
            raise ValueError(f"unknown suggestion kind: {self.kind!r}")
        if self.tool is not None and self.kind != SUGGEST_CHANGE_TOOL:
            raise ValueError("only change_tool suggestions carry a tool name")


@dataclass
class SubtaskFeedback:
    index: int
    verdict: str
    note: str = ""
    suggestion: Suggestion = Suggestion(SUGGEST_KEEP)


@dataclass(frozen=True)
class QualityScore:
    """Deterministic comparator behind the quality competition.

    Higher satisfied ratio wins, then higher aesthetic (missing
    measurements rank below any real one), then the earlier round, then
    the lower agent id, so replays always pick the same winner.
    """

    satisfied_ratio: float
    aesthetic: float
    round_index: int
    agent_id: int

    def sort_key(self) -> tuple:
        return (self.satisfied_ratio, self.aesthetic, -self.round_index, -self.agent_id)

    def beats(self, other: "QualityScore") -> bool:
        return self.sort_key() > other.sort_key()

    def quality_key(self) -> tuple:
        """The score components alone, without tie-break position."""
        return (self.satisfied_ratio, self.aesthetic)


def score_of(feedback: FeedbackReport, round_index: int, agent_id: int) -> QualityScore:
    aesthetic = AESTHETIC_UNSET if feedback.aesthetic is None else feedback.aesthetic
    return QualityScore(feedback.satisfied_ratio(), aesthetic, round_index, agent_id)


@dataclass
class MemoryEntry:
    round_index: int
    agent_id: int
    artifact: Artifact
    feedback: FeedbackReport
    score: QualityScore


class MemoryBank:
    """Per-round best results; the head entry is the session's best."""

    def __init__(self):
        self.entries: list[MemoryEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def best(self) -> MemoryEntry | None:
        return self.entries[-1] if self.entries else None

    def append(self, entry: MemoryEntry) -> None:
        head = self.best()
        if head is not None and head.score.quality_key() > entry.score.quality_key():
            raise ValueError(
                "memory must stay monotone: new entry scores below the current best"
            )
        self.entries.append(entry)
