"""Scripted stand-ins for every model call the engine makes.

Benchmark sessions run with a rule backend built for one synthetic
task.  It plans from the task's own canonical step list, corrupts a
configurable fraction of initial plans (wrong tool or wrong order),
and repairs plans during reflection either by itself or by adopting a
peer plan whose feedback looks strictly better.  All randomness is
hash-derived from the call's identity, so a benchmark run is
reproducible regardless of thread scheduling.

The module also ships the two calibration backends for the format
corpus: one that always answers in the requested format and one that
deliberately malforms a fraction of its responses.
"""

from __future__ import annotations

import hashlib
import random
import re
import threading
from dataclasses import dataclass

from ..artifacts import Artifact, ArtifactStore
from ..gateway import Backend, ChatExchange
from ..registry import Registry, ToolSpec, default_registry
from .tasks import WATERMARK_ALPHA, SyntheticTask

# Relative path of the watermark asset inside a session's artifact
# store; the benchmark runner copies it there before the session runs.
WATERMARK_STORE_PATH = "watermark.png"

UNKNOWN_ANSWER = "Unknown; this cannot be verified mechanically."

# Prompt landmarks of the reflection template, used to slice out the
# current plan, its feedback, and the optional peer section.
_OWN_PLAN_MARK = "decomposed the request into the following plan:\n"
_OWN_FEEDBACK_MARK = "received the following feedback:\n"
_PEER_PLAN_MARK = "we also have another plan for the same request:\n"
_PEER_FEEDBACK_MARK = "That plan's edited image received the following feedback:\n"

_IMAGE_PATH_RE = re.compile(r"image is saved at (\S+)\.")
_SUBTASK_RE = re.compile(r"The subtask to perform is: (.+)")
_MANUAL_NAME_RE = re.compile(r"^# (\w+)", re.MULTILINE)
_TRAILING_TOOL_RE = re.compile(r"using \w+\s*$")
_NUMBERED_RE = re.compile(r"^\s*\d+[.)]\s*(.+)$")

# Substitution pool for wrong-tool corruption.  Every name resolves
# against any canonical goal line because tool mentions embedded in the
# goal text fold shorter than these names do.
_WRONG_TOOLS = (
    "GaussianBlur",
    "EnhanceColor",
    "RGB2Gray",
    "FlipHorizontal",
    "RotateClockwise",
    "Resize",
)


@dataclass(frozen=True)
class PlannerNoise:
    """How unreliable one agent's scripted planner is.

    corrupt_rate is the chance the initial plan ships a defect; the
    defect is a wrong tool with probability wrong_tool_bias, otherwise
    an adjacent-step order swap.  During reflection the agent fixes its
    plan unaided with probability self_repair_rate per round, and
    adopts a strictly better peer plan with probability adopt_rate.
    """

    corrupt_rate: float = 0.0
    self_repair_rate: float = 0.15
    adopt_rate: float = 0.35
    wrong_tool_bias: float = 0.6


def _rng(*parts) -> random.Random:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _numbered(lines: list[str]) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def _strip_numbering(block: str) -> list[str]:
    out = []
    for raw in block.splitlines():
        match = _NUMBERED_RE.match(raw)
        if match:
            out.append(match.group(1).strip())
    return out


def _swap_tool(line: str, wrong: str) -> str:
    return _TRAILING_TOOL_RE.sub(f"using {wrong}", line)


def _corrupt(lines: list[str], noise: PlannerNoise, rng: random.Random) -> list[str]:
    out = list(lines)
    if len(out) >= 2 and rng.random() >= noise.wrong_tool_bias:
        at = rng.randrange(len(out) - 1)
        out[at], out[at + 1] = out[at + 1], out[at]
        return out
    at = rng.randrange(len(out))
    current = out[at].rsplit("using ", 1)[-1].strip()
    pool = [t for t in _WRONG_TOOLS if t != current]
    out[at] = _swap_tool(out[at], pool[rng.randrange(len(pool))])
    return out


def _failed_questions(feedback: str, questions: list[str]) -> list[str]:
    return [q for q in questions if f"not satisfied: {q}" in feedback]


def _slice(text: str, start_mark: str, end_marks: tuple[str, ...]) -> str | None:
    if start_mark not in text:
        return None
    tail = text.split(start_mark, 1)[1]
    cut = len(tail)
    for mark in end_marks:
        at = tail.find(mark)
        if at != -1:
            cut = min(cut, at)
    return tail[:cut]


class _RuleModel(Backend):
    """Responses for one task, pure in everything but a reflect counter.

    Identical reflection prompts recur when an agent keeps a failing
    plan, so a per-(seed, template) call counter feeds the hash rng and
    gives each round an independent repair draw.  Counter keys never
    cross agents, which keeps the responses deterministic under the
    engine's thread-per-agent execution.
    """

    def __init__(self, task: SyntheticTask, session_seed: int, noises: tuple[PlannerNoise, ...]):
        self.task = task
        self.session_seed = session_seed
        self.noises = tuple(noises) or (PlannerNoise(),)
        self._lock = threading.Lock()
        self._calls: dict[tuple[int, str], int] = {}

    def complete(self, exchange: ChatExchange) -> str:
        seed = exchange.params.seed
        with self._lock:
            key = (seed, exchange.template_id)
            tick = self._calls.get(key, 0)
            self._calls[key] = tick + 1
        noise = self._noise_for(seed)
        rng = _rng(seed, exchange.template_id, tick, exchange.prompt)
        if exchange.template_id == "planner_initial":
            return self._initial_plan(noise, rng)
        if exchange.template_id == "planner_reflect":
            return self._reflect(exchange.prompt, noise, rng)
        if exchange.template_id == "executor_toolcall":
            return tool_call_line(exchange.prompt)
        if exchange.template_id == "question_gen":
            return _numbered(self.task.questions())
        if exchange.template_id == "feedback_compile":
            # Unusable on purpose: the engine then aligns answers to
            # subtasks mechanically, which is deterministic.
            return "unable to comply"
        if exchange.template_id == "competitor_judge":
            return "1"
        raise ValueError(f"rule backend got unknown template {exchange.template_id!r}")

    def _noise_for(self, seed: int) -> PlannerNoise:
        agent = max(0, seed - self.session_seed)
        return self.noises[min(agent, len(self.noises) - 1)]

    def _initial_plan(self, noise: PlannerNoise, rng: random.Random) -> str:
        lines = [goal for goal, _tool in self.task.subtasks()]
        if noise.corrupt_rate > 0 and rng.random() < noise.corrupt_rate:
            lines = _corrupt(lines, noise, rng)
        return _numbered(lines)

    def _reflect(self, prompt: str, noise: PlannerNoise, rng: random.Random) -> str:
        questions = self.task.questions()
        own_feedback = _slice(
            prompt, _OWN_FEEDBACK_MARK, (_PEER_PLAN_MARK, "Based on the feedback")
        ) or ""
        own_failed = _failed_questions(own_feedback, questions)
        if not own_failed:
            return "No"
        peer_block = _slice(prompt, _PEER_PLAN_MARK, (_PEER_FEEDBACK_MARK,))
        if peer_block is not None:
            peer_feedback = _slice(
                prompt, _PEER_FEEDBACK_MARK, ("Comparing the two plans",)
            ) or ""
            peer_lines = _strip_numbering(peer_block)
            own_lines = _strip_numbering(
                _slice(prompt, _OWN_PLAN_MARK, (_OWN_FEEDBACK_MARK,)) or ""
            )
            peer_failed = _failed_questions(peer_feedback, questions)
            if (
                peer_lines
                and peer_lines != own_lines
                and len(peer_failed) < len(own_failed)
                and rng.random() < noise.adopt_rate
            ):
                return _numbered(peer_lines)
        if rng.random() < noise.self_repair_rate:
            return _numbered([goal for goal, _tool in self.task.subtasks()])
        return "No"


def make_rule_backend(
    task: SyntheticTask,
    session_seed: int,
    noises: tuple[PlannerNoise, ...] = (),
) -> _RuleModel:
    """A scripted gateway backend driving one task's session.

    noises holds one entry per agent id (the last entry covers any
    higher ids); an empty tuple means every planner is noiseless.
    """
    return _RuleModel(task, session_seed, tuple(noises))


# --- the executor stub ------------------------------------------------------------


def tool_call_line(prompt: str) -> str:
    """One well-formed call line for an executor prompt.

    Arguments come from the subtask text where the goal names them
    (resize target, crop box, border width) and from fixed defaults
    everywhere else.
    """
    path_match = _IMAGE_PATH_RE.search(prompt)
    path = path_match.group(1) if path_match else "input.png"
    goal_match = _SUBTASK_RE.search(prompt)
    goal = goal_match.group(1) if goal_match else ""
    name_match = _MANUAL_NAME_RE.search(prompt)
    name = name_match.group(1) if name_match else "Resize"
    numbers = [int(n) for n in re.findall(r"\d+", goal)]
    if name == "Resize":
        usable = [n for n in numbers if 16 <= n <= 8192]
        return f"Resize @@ {path} <-> {usable[0] if usable else 256}"
    if name == "Crop":
        box = numbers[:4] if len(numbers) >= 4 else [0, 0, 16, 16]
        return f"Crop @@ {path} <-> " + " <-> ".join(str(n) for n in box)
    if name == "ImageExpand":
        width = numbers[0] if numbers else 10
        return f"ImageExpand @@ {path} <-> {width} <-> white"
    if name == "GaussianBlur":
        return f"GaussianBlur @@ {path} <-> 5"
    if name == "EnhanceColor":
        return f"EnhanceColor @@ {path} <-> 1.5"
    if name == "AddWatermark":
        return f"AddWatermark @@ {path} <-> {WATERMARK_STORE_PATH} <-> {WATERMARK_ALPHA}"
    return f"{name} @@ {path}"


# --- ground-truth question answering -----------------------------------------------


class TaskCheckerVqa:
    """Answers a task's own verification questions from pixels.

    Questions that do not match one of the task's predicates (the
    overall-quality question, mainly) come back unknown, which the
    engine treats as advisory rather than blocking.
    """

    def __init__(self, task: SyntheticTask, store: ArtifactStore):
        self.task = task
        self.store = store

    def answer(self, artifact: Artifact, question: str) -> str:
        for pred in self.task.predicates:
            if self.task.question_for(pred) != question:
                continue
            img = self.store.load_image(artifact)
            if self.task.check(img)[pred.kind]:
                return "Yes, this holds on the edited image."
            return "No, this check fails on the edited image."
        return UNKNOWN_ANSWER


# --- format-corpus calibration backends ----------------------------------------------

# Landmark the one-stage measurement prompt carries; scripted backends
# switch to flat call-line output when they see it.
ONE_STAGE_MARK = "Respond with one numbered line per step, where each line body is a tool call"


class WellFormedBackend(Backend):
    """Always answers in exactly the requested format.

    Used to calibrate the format-success measurement: whatever prompt
    mode is under test, this backend's rate must come out 1.0.
    """

    def __init__(self, registry: Registry | None = None):
        self.registry = registry or default_registry()

    def complete(self, exchange: ChatExchange) -> str:
        if exchange.template_id == "planner_initial":
            return (
                "1. Resize the image to have its longest side at 512 pixels using Resize\n"
                "2. Apply the requested edit to the image using InstructDiffusion"
            )
        if exchange.template_id == "planner_reflect":
            return "No"
        if exchange.template_id == "executor_toolcall":
            name_match = _MANUAL_NAME_RE.search(exchange.prompt)
            name = name_match.group(1) if name_match else "Resize"
            path_match = _IMAGE_PATH_RE.search(exchange.prompt)
            path = path_match.group(1) if path_match else "input.png"
            return self._call_for(name, path)
        if ONE_STAGE_MARK in exchange.prompt:
            return (
                f"1. {self._call_for('Resize', 'input.png')}\n"
                f"2. {self._call_for('InstructDiffusion', 'input.png')}"
            )
        if exchange.template_id == "question_gen":
            return "1. Is the requested edit present in the image?"
        return "1. yes, satisfied"

    def _call_for(self, name: str, path: str) -> str:
        spec = self.registry.get(name)
        values = [str(v) for v in _schema_safe_args(spec, path)]
        if not values:
            return name
        return f"{name} @@ " + " <-> ".join(values)


def _schema_safe_args(spec: ToolSpec, path: str) -> list:
    """One in-range value per argument, in schema order."""
    out = []
    for arg in spec.args:
        if arg.kind == "path":
            out.append(path)
        elif arg.kind in ("int", "real"):
            if arg.default is not None:
                out.append(arg.default)
            elif arg.minimum is not None:
                out.append(arg.minimum)
            else:
                out.append(1 if arg.kind == "int" else 1.0)
        elif arg.kind == "enum":
            out.append(arg.choices[0])
        else:
            out.append(arg.default if arg.default is not None else "auto")
    return out


class AdversarialBackend(Backend):
    """Malforms a hash-chosen fraction of its responses.

    The rest of the time it defers to the well-formed backend, so the
    measured failure rate tracks flaw_rate instead of collapsing to
    zero or one.
    """

    def __init__(self, flaw_rate: float = 0.3, seed: int = 0, registry: Registry | None = None):
        if not 0.0 <= flaw_rate <= 1.0:
            raise ValueError(f"flaw_rate must be in [0, 1], got {flaw_rate}")
        self.flaw_rate = flaw_rate
        self.seed = seed
        self._clean = WellFormedBackend(registry)

    def complete(self, exchange: ChatExchange) -> str:
        rng = _rng(self.seed, exchange.template_id, exchange.prompt)
        text = self._clean.complete(exchange)
        if rng.random() >= self.flaw_rate:
            return text
        flaw = rng.randrange(3)
        if flaw == 0:
            return "Happy to help! Let me think through the best approach first."
        if flaw == 1:
            return text.replace(" @@ ", " ").replace(" <-> ", ", ")
        # Capitalized tokens carry the tool names; losing them defeats
        # both plan parsing and call resolution.
        return re.sub(r"\b[A-Z][A-Za-z0-9]*\b", "MagicWand", text)
