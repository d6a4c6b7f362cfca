"""The reviewer side: questions, answers, feedback, competition, memory.

The reviewer turns an editing goal into at most five yes-or-no
verification questions, answers them against a candidate image through
a pluggable VQA provider, compiles the answers into a feedback report,
dissects that report into per-subtask advice, and runs the quality
competition that decides each round's best result and whether the
session can stop.

The competition is decided by a deterministic comparator (satisfied
ratio, then aesthetic score, then earlier round, then lower agent id).
An optional model-judged mode exists behind a flag; it falls back to
the comparator whenever the judge's answer is unusable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import Artifact, ArtifactStore
from .errors import EaselError, FormatError, QuestionParseFailureError
from .gateway import CompletionParams, Gateway
from .model import (
    GLOBAL_QUALITY,
    ITEM_CHECK,
    SUGGEST_CHANGE_GOAL,
    SUGGEST_CHANGE_TOOL,
    SUGGEST_KEEP,
    SUGGEST_RETUNE,
    VERDICT_NO,
    VERDICT_UNKNOWN,
    VERDICT_YES,
    Answer,
    FeedbackReport,
    MemoryBank,
    MemoryEntry,
    Plan,
    Question,
    QualityScore,
    SubtaskFeedback,
    Suggestion,
    score_of,
)
from .parsing import parse_questions, parse_yes_no, split_numbered_items
from .stubs import aesthetic_value
from .templates import REPROMPT_SUFFIX, render, role_of
from .transport import AdapterClient, invoke_external

MAX_QUESTIONS = 5

GLOBAL_QUALITY_QUESTION = (
    "Is the overall quality of the edited image natural and free of artifacts?"
)

# A question is about overall quality rather than a specific request item
# when it uses holistic vocabulary.
_GLOBAL_MARKERS = (
    "overall",
    "quality",
    "natural",
    "artifact",
    "artifacts",
    "aesthetic",
    "realistic",
    "visually",
    "seamless",
)

TIE_SUGGESTION = "select an alternative, more suitable tool"

_CHANGE_TOOL_RE = re.compile(
    r"chang(?:e|ing)\s+the\s+tool\s+to\s+[`\"']?([A-Za-z][A-Za-z0-9_-]*)", re.IGNORECASE
)

_RETUNE_MARKERS = (
    "parameter",
    "parameters",
    "stronger",
    "weaker",
    "increase",
    "decrease",
    "guidance",
    "cfg",
    "intensity",
    "strength",
    "retune",
)

_CHANGE_GOAL_MARKERS = (
    "change the goal",
    "rephrase",
    "different approach",
    "reformulate",
    "restate",
)

_STOPWORDS = frozenset(
    """the a an is are was were of to in on at for with and or does do has have
    image picture photo edited editing it its this that look looks there any
    using use used make made please""".split()
)


def _content_words(text: str) -> set[str]:
    return {
        w
        for w in re.findall(r"[a-z0-9]+", text.lower())
        if len(w) >= 2 and w not in _STOPWORDS
    }


def classify_question(text: str) -> str:
    lowered = text.lower()
    if any(marker in lowered for marker in _GLOBAL_MARKERS):
        return GLOBAL_QUALITY
    return ITEM_CHECK


@dataclass
class Candidate:
    """One agent's round output entering the competition."""

    artifact: Artifact
    feedback: FeedbackReport
    round_index: int
    agent_id: int

    def score(self) -> QualityScore:
        return score_of(self.feedback, self.round_index, self.agent_id)


class DiscriminatorAgent:
    def __init__(
        self,
        gateway: Gateway,
        vqa,
        aesthetic=None,
        model_routing: dict[str, str] | None = None,
        seed: int = 0,
        use_llm_judge: bool = False,
    ):
        self.gateway = gateway
        self.vqa = vqa
        self.aesthetic = aesthetic
        self.model_routing = model_routing or {"strong": "strong", "fast": "fast"}
        self.seed = seed
        self.use_llm_judge = use_llm_judge
        self.exchanges = []
        self._question_cache: dict[tuple[str, str], list[Question]] = {}

    # --- model access --------------------------------------------------------

    def _params(self, template_id: str) -> CompletionParams:
        return CompletionParams(
            model_id=self.model_routing[role_of(template_id)],
            temperature=0.0,
            max_tokens=1024,
            seed=self.seed,
        )

    def _complete(self, template_id: str, variables: dict) -> str:
        prompt = render(template_id, variables)
        exchange = self.gateway.complete(template_id, prompt, self._params(template_id))
        self.exchanges.append(exchange)
        return exchange.response

    def _complete_parsed(self, template_id: str, variables: dict, parser):
        """One model call with a single corrective re-prompt on bad format."""
        prompt = render(template_id, variables)
        exchange = self.gateway.complete(template_id, prompt, self._params(template_id))
        self.exchanges.append(exchange)
        try:
            return parser(exchange.response)
        except FormatError as first_error:
            reprompt = prompt + REPROMPT_SUFFIX.format(reason=first_error)
            retry = self.gateway.complete(template_id, reprompt, self._params(template_id))
            self.exchanges.append(retry)
            return parser(retry.response)

    # --- questions --------------------------------------------------------------

    def generate_questions(self, caption: str, request_goal: str) -> list[Question]:
        if not caption.strip() or not request_goal.strip():
            raise ValueError("caption and editing goal must be non-empty")
        cache_key = (caption, request_goal)
        if cache_key in self._question_cache:
            return self._question_cache[cache_key]
        variables = {"CAPTION": caption, "EDITING_REQUEST": request_goal}
        try:
            raw = self._complete_parsed(
                "question_gen",
                variables,
                lambda text: parse_questions(text, MAX_QUESTIONS),
            )
        except FormatError as exc:
            raise QuestionParseFailureError(
                f"question generation unusable after re-prompt: {exc}"
            ) from exc
        questions = ensure_global_question(
            [Question(q, classify_question(q)) for q in raw]
        )
        self._question_cache[cache_key] = questions
        return questions

    # --- answering -----------------------------------------------------------------

    def answer_questions(self, artifact: Artifact, questions: list[Question]) -> list[Answer]:
        answers = []
        for question in questions:
            try:
                reply = self.vqa.answer(artifact, question.text)
            except EaselError as exc:
                answers.append(
                    Answer(question, VERDICT_UNKNOWN, f"answering failed: {exc}")
                )
                continue
            verdict, explanation = parse_yes_no(reply)
            answers.append(Answer(question, verdict, explanation))
        return answers

    # --- feedback ---------------------------------------------------------------------

    def review(self, artifact: Artifact, caption: str, request_goal: str) -> FeedbackReport:
        questions = self.generate_questions(caption, request_goal)
        answers = self.answer_questions(artifact, questions)
        aesthetic = None
        if self.aesthetic is not None:
            try:
                aesthetic = self.aesthetic(artifact)
            except EaselError:
                aesthetic = None
        return compile_feedback(answers, aesthetic)

    def decompose(
        self, report: FeedbackReport, plan: Plan, caption: str, request_goal: str
    ) -> list[SubtaskFeedback]:
        """Per-subtask advice, model-assisted when it cooperates.

        The model is asked once; any response that does not line up with
        the plan's subtasks falls back to the keyword alignment, so this
        never raises.
        """
        variables = {
            "EDITING_REQUEST": request_goal,
            "CAPTION": caption,
            "SUBTASKS": plan.lines(),
            "FEEDBACK": answers_block(report),
        }
        try:
            text = self._complete("feedback_compile", variables)
            return parse_subtask_feedback(text, plan)
        except EaselError:
            return decompose_feedback(report, plan)

    def judge(self, candidates: list[Candidate], request_goal: str) -> int:
        """Model-judged competition: returns an index into candidates.

        Any unusable answer falls back to the deterministic comparator.
        """
        lines = []
        for pos, c in enumerate(candidates, start=1):
            aesthetic = "unknown" if c.feedback.aesthetic is None else f"{c.feedback.aesthetic}"
            lines.append(
                f"{pos}. agent {c.agent_id}, round {c.round_index}: satisfied "
                f"{c.feedback.satisfied_count}/{c.feedback.total_checks} checks, "
                f"aesthetic {aesthetic}"
            )
        variables = {"EDITING_REQUEST": request_goal, "FEEDBACK": "\n".join(lines)}
        response = self._complete("competitor_judge", variables)
        match = re.search(r"\d+", response)
        if match:
            pick = int(match.group())
            if 1 <= pick <= len(candidates):
                return pick - 1
        best = max(range(len(candidates)), key=lambda i: candidates[i].score().sort_key())
        return best


def ensure_global_question(questions: list[Question]) -> list[Question]:
    """Guarantee at least one overall-quality question under the cap."""
    questions = questions[:MAX_QUESTIONS]
    if any(q.kind == GLOBAL_QUALITY for q in questions):
        return questions
    extra = Question(GLOBAL_QUALITY_QUESTION, GLOBAL_QUALITY)
    if len(questions) < MAX_QUESTIONS:
        return questions + [extra]
    return questions[:-1] + [extra]


def compile_feedback(answers: list[Answer], aesthetic: float | None = None) -> FeedbackReport:
    """Fold answers into a report; failures lead the summary."""
    if not answers:
        raise ValueError("cannot compile feedback from zero answers")
    item_checks = [a for a in answers if a.question.kind == ITEM_CHECK]
    satisfied = sum(1 for a in item_checks if a.verdict == VERDICT_YES)
    failed = [a for a in answers if a.verdict == VERDICT_NO]
    unclear = [a for a in answers if a.verdict == VERDICT_UNKNOWN]
    parts = []
    for a in failed:
        line = f"not satisfied: {a.question.text}"
        if a.explanation:
            line += f" ({a.explanation})"
        parts.append(line)
    for a in unclear:
        parts.append(f"cannot judge: {a.question.text}")
    if not parts:
        parts.append("all checks satisfied")
    elif not failed:
        parts.append("remaining checks satisfied")
    if aesthetic is not None:
        parts.append(f"aesthetic score: {aesthetic}")
    summary = "\n".join(f"{i}. {p}" for i, p in enumerate(parts, start=1))
    return FeedbackReport(
        answers=answers,
        summary=summary,
        satisfied_count=satisfied,
        total_checks=len(item_checks),
        aesthetic=aesthetic,
    )


def answers_block(report: FeedbackReport) -> str:
    """The question-answer list as numbered prompt lines."""
    lines = []
    for i, a in enumerate(report.answers, start=1):
        line = f"{i}. Q: {a.question.text} A: {a.verdict}"
        if a.explanation:
            line += f" ({a.explanation})"
        lines.append(line)
    if report.aesthetic is not None:
        lines.append(f"aesthetic score: {report.aesthetic}")
    return "\n".join(lines)


def parse_subtask_feedback(text: str, plan: Plan) -> list[SubtaskFeedback]:
    """Parse one verdict line per subtask out of a compilation response."""
    items = split_numbered_items(text)
    if len(items) != len(plan.subtasks):
        raise FormatError(
            f"expected {len(plan.subtasks)} verdict lines, got {len(items)}"
        )
    out = []
    for subtask, body in zip(plan.subtasks, items):
        verdict, explanation = parse_yes_no(body)
        suggestion = (
            extract_suggestion(explanation) if verdict == VERDICT_NO else Suggestion(SUGGEST_KEEP)
        )
        out.append(SubtaskFeedback(subtask.index, verdict, explanation, suggestion))
    return out


def extract_suggestion(text: str) -> Suggestion:
    """Read subtask advice out of an explanation sentence."""
    lowered = text.lower()
    match = _CHANGE_TOOL_RE.search(text)
    if match:
        return Suggestion(SUGGEST_CHANGE_TOOL, tool=match.group(1))
    if TIE_SUGGESTION in lowered or ("alternative" in lowered and "tool" in lowered):
        return Suggestion(SUGGEST_CHANGE_TOOL)
    if any(marker in lowered for marker in _CHANGE_GOAL_MARKERS):
        return Suggestion(SUGGEST_CHANGE_GOAL)
    if any(marker in lowered for marker in _RETUNE_MARKERS):
        return Suggestion(SUGGEST_RETUNE)
    return Suggestion(SUGGEST_KEEP)


def decompose_feedback(report: FeedbackReport, plan: Plan) -> list[SubtaskFeedback]:
    """One SubtaskFeedback per subtask, aligned by shared content words.

    Every item-check answer is assigned to the subtask whose goal text
    it shares the most content words with (ties to the earlier
    subtask); subtasks no answer refers to come back unknown/keep.
    """
    goal_words = {s.index: _content_words(s.goal_text) for s in plan.subtasks}
    matched: dict[int, list[Answer]] = {s.index: [] for s in plan.subtasks}
    for answer in report.answers:
        if answer.question.kind != ITEM_CHECK:
            continue
        q_words = _content_words(answer.question.text)
        best_index = None
        best_overlap = 0
        for subtask in plan.subtasks:
            overlap = len(q_words & goal_words[subtask.index])
            if overlap > best_overlap:
                best_overlap = overlap
                best_index = subtask.index
        if best_index is not None:
            matched[best_index].append(answer)
    out = []
    for subtask in plan.subtasks:
        answers = matched[subtask.index]
        if not answers:
            out.append(
                SubtaskFeedback(subtask.index, VERDICT_UNKNOWN, "no check refers to this subtask")
            )
            continue
        verdicts = [a.verdict for a in answers]
        if VERDICT_NO in verdicts:
            verdict = VERDICT_NO
        elif all(v == VERDICT_YES for v in verdicts):
            verdict = VERDICT_YES
        else:
            verdict = VERDICT_UNKNOWN
        note = "; ".join(
            f"{a.question.text} {a.verdict}" + (f" ({a.explanation})" if a.explanation else "")
            for a in answers
        )
        suggestion = Suggestion(SUGGEST_KEEP)
        if verdict == VERDICT_NO:
            for a in answers:
                if a.verdict == VERDICT_NO:
                    suggestion = extract_suggestion(a.explanation or "")
                    if suggestion.kind != SUGGEST_KEEP:
                        break
        out.append(SubtaskFeedback(subtask.index, verdict, note, suggestion))
    return out


def carry_feedback(
    decomposed: list[SubtaskFeedback], old_plan: Plan, new_plan: Plan
) -> dict[int, SubtaskFeedback]:
    """Map per-subtask feedback onto a possibly revised plan.

    Feedback carries over only to subtasks whose goal text is unchanged;
    new or rewritten subtasks start from no feedback at all.
    """
    by_old_index = {f.index: f for f in decomposed}
    old_goals = {s.goal_text: s.index for s in old_plan.subtasks}
    carried = {}
    for subtask in new_plan.subtasks:
        old_index = old_goals.get(subtask.goal_text)
        if old_index is None:
            continue
        feedback = by_old_index.get(old_index)
        if feedback is None:
            continue
        carried[subtask.index] = SubtaskFeedback(
            subtask.index, feedback.verdict, feedback.note, feedback.suggestion
        )
    return carried


def carry_args(old_plan: Plan, new_plan: Plan) -> dict[int, dict]:
    """Previous bound arguments for goal-identical subtasks."""
    old_args = {s.goal_text: s.bound_args for s in old_plan.subtasks if s.bound_args}
    out = {}
    for subtask in new_plan.subtasks:
        args = old_args.get(subtask.goal_text)
        if args:
            out[subtask.index] = dict(args)
    return out


def compete(
    candidates: list[Candidate], memory: MemoryBank
) -> tuple[MemoryEntry, bool]:
    """Pick the best of this round's candidates and the remembered best.

    Returns the winning entry and whether everything tied.  On an
    all-way tie each candidate's report gains the suggestion to try a
    different tool, which is the competition channel's way of breaking
    a stalemate.
    """
    if not candidates:
        raise ValueError("compete needs at least one candidate")
    pool = [
        MemoryEntry(c.round_index, c.agent_id, c.artifact, c.feedback, c.score())
        for c in candidates
    ]
    head = memory.best()
    if head is not None:
        pool.append(head)
    winner = max(pool, key=lambda e: e.score.sort_key())
    keys = {e.score.quality_key() for e in pool}
    all_tied = len(pool) > 1 and len(keys) == 1
    if all_tied:
        for candidate in candidates:
            candidate.feedback.summary += f"\nsuggestion: {TIE_SUGGESTION}"
    return winner, all_tied


def update_memory(memory: MemoryBank, winner: MemoryEntry) -> MemoryBank:
    memory.append(winner)
    return memory


def should_stop(feedback: FeedbackReport, request_goal: str) -> bool:
    """Stop once every item check passes; aesthetic stays advisory."""
    return feedback.all_items_satisfied()


# --- VQA and aesthetic providers ------------------------------------------------


class PropertyOracleVqa:
    """Mechanical question answering from measurable artifact properties.

    Supports size, grayscale, orientation, and watermark-corner
    questions; anything else is answered "Unknown".  This keeps the
    engine honest without any ML dependency.
    """

    def __init__(self, store: ArtifactStore):
        self.store = store

    def answer(self, artifact: Artifact, question: str) -> str:
        lowered = question.lower()
        img = self.store.load_image(artifact)
        numbers = [int(n) for n in re.findall(r"\d+", lowered)]
        if ("size" in lowered or "side" in lowered or "pixels" in lowered) and numbers:
            target = numbers[0]
            longest = max(img.size)
            if longest == target:
                return f"Yes, the longest side is {longest} pixels."
            return f"No, the longest side is {longest} pixels, not {target}."
        if "grayscale" in lowered or "gray" in lowered or "black and white" in lowered:
            return "Yes, the image is grayscale." if _is_grayscale(img) else (
                "No, the image still has color."
            )
        if "portrait" in lowered:
            return "Yes." if img.height > img.width else "No, it is not in portrait orientation."
        if "landscape" in lowered:
            return "Yes." if img.width > img.height else "No, it is not in landscape orientation."
        if "watermark" in lowered:
            if _has_magenta_corner(img):
                return "Yes, there is a watermark in the bottom-right corner."
            return "No watermark is visible in the bottom-right corner."
        return "Unknown; this cannot be verified mechanically."


def _is_grayscale(img) -> bool:
    if img.mode == "L":
        return True
    arr = np.asarray(img.convert("RGB"))
    return bool((arr[..., 0] == arr[..., 1]).all() and (arr[..., 1] == arr[..., 2]).all())


def _has_magenta_corner(img, patch: int = 16) -> bool:
    rgb = img.convert("RGB")
    arr = np.asarray(rgb)
    if arr.shape[0] < patch or arr.shape[1] < patch:
        return False
    corner = arr[-patch:, -patch:]
    magenta = (corner[..., 0] > 200) & (corner[..., 1] < 60) & (corner[..., 2] > 200)
    return bool(magenta.mean() > 0.5)


class AdapterVqa:
    """Answers questions through an external vision-language endpoint."""

    def __init__(self, client: AdapterClient, store: ArtifactStore, tool: str = "LLaVA"):
        self.client = client
        self.store = store
        self.tool = tool
        self._counter = 0

    def answer(self, artifact: Artifact, question: str) -> str:
        self._counter += 1
        target = self.store.resolve(f"measurements/vqa-{self._counter}.txt")
        target.parent.mkdir(parents=True, exist_ok=True)
        response = invoke_external(
            self.client,
            self.tool,
            {"question": question, "output_path": str(target)},
            [str(self.store.resolve(artifact))],
            request_id=f"vqa-{self._counter}",
        )
        return Path(response.output_path).read_text(encoding="utf-8")


class StubAesthetic:
    """Aesthetic measurement without ML, identical to the stub tool."""

    def __init__(self, store: ArtifactStore):
        self.store = store

    def __call__(self, artifact: Artifact) -> float:
        img = self.store.load_image(artifact)
        return round(aesthetic_value(img), 3)


class AdapterAesthetic:
    """Aesthetic measurement via an external scoring endpoint."""

    def __init__(self, client: AdapterClient, store: ArtifactStore, tool: str = "AestheticScore"):
        self.client = client
        self.store = store
        self.tool = tool
        self._counter = 0

    def __call__(self, artifact: Artifact) -> float:
        self._counter += 1
        target = self.store.resolve(f"measurements/aesthetic-{self._counter}.txt")
        target.parent.mkdir(parents=True, exist_ok=True)
        response = invoke_external(
            self.client,
            self.tool,
            {"output_path": str(target)},
            [str(self.store.resolve(artifact))],
            request_id=f"aesthetic-{self._counter}",
        )
        if "aesthetic" in response.metrics:
            return float(response.metrics["aesthetic"])
        return float(Path(response.output_path).read_text(encoding="utf-8").strip())
