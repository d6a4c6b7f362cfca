"""Prompt templates for every model call the engine makes.

There are exactly six call sites, each with a fixed template id:

* ``planner_initial``    first decomposition of the editing request
* ``planner_reflect``    plan revision from feedback (and, when
                         available, a peer's plan and feedback)
* ``executor_toolcall``  one tool invocation line from a tool manual
* ``question_gen``       verification questions for an edited image
* ``feedback_compile``   per-subtask verdict compilation
* ``competitor_judge``   picking the best of several candidate edits

Placeholders use ``{NAME}`` syntax.  Rendering is strict: a required
placeholder without a value raises MissingVariableError, while the
optional context slots (FEEDBACK, SUBTASKS, PLAN, PEER_FEEDBACK)
default to the literal sentinel ``(empty)`` so a rendered prompt never
contains an unreplaced placeholder.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MissingVariableError

EMPTY_SENTINEL = "(empty)"

# Appended to the original prompt for the single corrective re-prompt
# that format errors are allowed before they become hard failures.
REPROMPT_SUFFIX = (
    "\n\nYour previous response could not be used: {reason}. "
    "Respond again, following the requested format exactly."
)

OPTIONAL_PLACEHOLDERS = frozenset({"FEEDBACK", "SUBTASKS", "PLAN", "PEER_FEEDBACK"})

_PLACEHOLDER_RE = re.compile(r"\{([A-Z_]+)\}")

ROLE_STRONG = "strong"
ROLE_FAST = "fast"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    role: str = ROLE_STRONG
    peer_body: str | None = None

    def placeholders(self, with_peer: bool = False) -> tuple[str, ...]:
        text = self.peer_body if (with_peer and self.peer_body) else self.body
        seen: list[str] = []
        for name in _PLACEHOLDER_RE.findall(text):
            if name not in seen:
                seen.append(name)
        return tuple(seen)


_PLANNER_INITIAL = """\
You are an image editing assistant that plans how to fulfil an editing request.
The image to edit is saved at {IMAGE_PATH}.
The editing request is: "{EDITING_REQUEST}"

Each step of the plan must use exactly one tool. The tools you may choose from
are listed below, one per line, as "name: what it does". Do not invent tools.
{TOOL_DESCRIPTIONS}

Decompose the editing request into a numbered plan of subtasks, one line per
subtask, where each line states what to do and names the single tool that does
it. If you have to resize the image, put it at the first. For example, the
request "Create a vintage-style portrait of a person with a hat and adjust the
image to have a sepia tone, with the longest side being 800 pixels." can be
decomposed as: 1. Resize the image to have its longest side at 800 pixels
using Resize; 2. Add a vintage-style hat to the person in the image using
InstructDiffusion; 3. Apply a sepia tone filter to the entire image using
Edict.

Now give me the plan.
"""

_PLANNER_REFLECT_SOLO = """\
You are an image editing assistant revisiting your plan for an editing request.
The image is saved at {IMAGE_PATH}.
The editing request is: "{EDITING_REQUEST}"
The tools you may choose from are: {TOOL_NAMES}

Currently, I have decomposed the request into the following plan:
{SUBTASKS}

After executing this plan, the edited image received the following feedback:
{FEEDBACK}

Based on the feedback, decide whether you should change the order of the
subtasks, modify some subtasks, or change the tools they use. If so, give me
the complete revised plan as a numbered list, one line per subtask, each line
naming the single tool it uses. If you decide to keep the current plan
unchanged, please respond with "No".
"""

_PLANNER_REFLECT_PEER = """\
You are an image editing assistant revisiting your plan for an editing request.
The image is saved at {IMAGE_PATH}.
The editing request is: "{EDITING_REQUEST}"
The tools you may choose from are: {TOOL_NAMES}

Currently, I have decomposed the request into the following plan:
{SUBTASKS}

After executing this plan, the edited image received the following feedback:
{FEEDBACK}

Besides, we also have another plan for the same request:
{PLAN}

That plan's edited image received the following feedback:
{PEER_FEEDBACK}

Comparing the two plans and their feedback, decide whether you should change
the order of the subtasks, modify some subtasks, or change the tools they use.
If so, give me the complete revised plan as a numbered list, one line per
subtask, each line naming the single tool it uses. If you decide to keep the
current plan unchanged, please respond with "No".
"""

_EXECUTOR_TOOLCALL = """\
You are an image editing assistant operating a single tool.
The current image is saved at {IMAGE_PATH}.
The subtask to perform is: {SUBTASKS}
Feedback on the previous attempt at this subtask, if any:
{FEEDBACK}

The manual of the tool you must use is below.
{MANUAL}

Respond with exactly one line of the form:
ToolName @@ first argument <-> second argument <-> third argument
listing the tool's arguments in the order the manual gives them, separated by
"<->". Do not add any other separator or commentary on that line. All output
images should be saved in the same folder as the input image.
"""

_QUESTION_GEN = """\
You are a meticulous reviewer of image edits.
An image, originally described as "{CAPTION}", was edited according to the
request: "{EDITING_REQUEST}"

Give me a numbered list of at most five yes-or-no questions that verify, one
by one, whether each change asked for in the request is present in the edited
image. Include at least one question about the overall quality of the edited
image, for example whether it looks natural and free of artifacts. Every
question must be answerable by looking at the edited image alone, and must
start with an auxiliary verb such as "Is", "Are", "Does", or "Has".

Now give me the questions.
"""

_FEEDBACK_COMPILE = """\
You are a critic compiling review results for an edited image.
The editing request was: "{EDITING_REQUEST}"
The edited image is described as: "{CAPTION}"
The plan that produced the edited image was:
{SUBTASKS}

The verification questions and their answers were:
{FEEDBACK}

For each subtask of the plan, write one numbered line stating whether that
subtask is satisfied ("yes"), not satisfied ("no"), or cannot be judged
("unknown"), followed by a short reason. When a subtask is not satisfied, end
the line with one suggestion: keep the subtask as is, retune the parameters,
change the tool to a named better tool, or change the goal of the subtask.
"""

_COMPETITOR_JUDGE = """\
You are judging several candidate edits of the same image.
The editing request was: "{EDITING_REQUEST}"
The candidates are summarized below, one per numbered line, each with the
number of verification checks it satisfied and its aesthetic score when known:
{FEEDBACK}

Respond with the number of the single best candidate. Value correct content
edits first and overall visual quality second.
"""


TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t
    for t in (
        PromptTemplate("planner_initial", _PLANNER_INITIAL, ROLE_STRONG),
        PromptTemplate(
            "planner_reflect",
            _PLANNER_REFLECT_SOLO,
            ROLE_STRONG,
            peer_body=_PLANNER_REFLECT_PEER,
        ),
        PromptTemplate("executor_toolcall", _EXECUTOR_TOOLCALL, ROLE_FAST),
        PromptTemplate("question_gen", _QUESTION_GEN, ROLE_STRONG),
        PromptTemplate("feedback_compile", _FEEDBACK_COMPILE, ROLE_STRONG),
        PromptTemplate("competitor_judge", _COMPETITOR_JUDGE, ROLE_FAST),
    )
}


def render(template_id: str, variables: dict[str, str]) -> str:
    """Render a template to the final prompt text.

    Unknown template ids raise KeyError; a missing required placeholder
    raises MissingVariableError; missing or empty optional placeholders
    render as the ``(empty)`` sentinel.  Extra variables are ignored so
    one variable map can serve several templates.
    """
    template = TEMPLATES[template_id]
    with_peer = bool(
        template.peer_body
        and (variables.get("PLAN") or variables.get("PEER_FEEDBACK"))
    )
    body = template.peer_body if with_peer else template.body

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        value = variables.get(name)
        if value is None or value == "":
            if name in OPTIONAL_PLACEHOLDERS:
                return EMPTY_SENTINEL
            raise MissingVariableError(
                f"template {template_id!r} needs a value for {name}"
            )
        return str(value)

    rendered = _PLACEHOLDER_RE.sub(substitute, body)
    return rendered.rstrip("\n")


def role_of(template_id: str) -> str:
    return TEMPLATES[template_id].role
