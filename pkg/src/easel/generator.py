"""The generator side: planning, reflection, and subtask execution.

One GeneratorAgent couples a planner and a tool executor under the
engine's information barrier: the planner only ever sees tool names
with one-line descriptions, the executor sees the full manual of
exactly one tool per call.

Execution policy per subtask:

* tools whose only arguments are engine-supplied image paths are bound
  deterministically, without any model call;
* a subtask whose previous attempt was judged satisfied reuses its
  previous arguments verbatim (success freezes parameters);
* otherwise the executor model writes one tool-call line, which is
  parsed, validated against the schema, and re-prompted once on a
  malformed response;
* when feedback marks the subtask unmet, every strength-like parameter
  declared in the manual escalates by its step, capped at its maximum,
  and never below the previous value.

Failures never abort a round: the step is recorded as failed and later
subtasks run against the last good artifact, so the reflection loop
always has something to critique.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .artifacts import Artifact, ArtifactStore
from .errors import (
    ArgValidationError,
    EaselError,
    FormatError,
    PlanParseFailureError,
)
from .gateway import CompletionParams, Gateway
from .model import (
    DONE,
    FAILED,
    VERDICT_NO,
    VERDICT_YES,
    ExecutionTrace,
    Plan,
    StepRecord,
    Subtask,
    SubtaskFeedback,
    UserRequest,
)
from .parsing import (
    KeepPlan,
    parse_plan,
    parse_reflection,
    parse_tool_call,
    render_tool_call,
)
from .registry import Registry, ToolSpec, bind_positional, coerce_args, invoke_builtin
from .stubs import invoke_stub
from .templates import REPROMPT_SUFFIX, render, role_of
from .transport import AdapterClient, invoke_external


def fallback_caption(image: Artifact) -> str:
    return f"an image of {Path(image.path).name}"


def resolve_caption(image: Artifact, user_caption: str | None, captioner=None) -> str:
    """Caption fallback chain: user-supplied, then captioner, then stub."""
    if user_caption and user_caption.strip():
        return user_caption.strip()
    if captioner is not None:
        try:
            produced = captioner(image)
            if produced and produced.strip():
                return produced.strip()
        except EaselError:
            pass
    return fallback_caption(image)


class GeneratorAgent:
    def __init__(
        self,
        agent_id: int,
        registry: Registry,
        gateway: Gateway,
        store: ArtifactStore,
        model_routing: dict[str, str] | None = None,
        seed: int = 0,
        adapters: dict[str, AdapterClient] | None = None,
        clock=None,
    ):
        self.agent_id = agent_id
        self.registry = registry
        self.gateway = gateway
        self.store = store
        self.model_routing = model_routing or {"strong": "strong", "fast": "fast"}
        self.seed = seed
        self.adapters = adapters or {}
        self.clock = clock or (lambda: 0)
        self.exchanges = []  # drained by the orchestrator at round barriers

    # --- model access ------------------------------------------------------

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

    # --- planning ----------------------------------------------------------

    def plan_initial(self, request: UserRequest, round_index: int = 1) -> Plan:
        views = self.registry.planner_view()
        variables = {
            "IMAGE_PATH": request.image.path,
            "EDITING_REQUEST": request.goal,
            "TOOL_DESCRIPTIONS": "\n".join(f"{v.name}: {v.description}" for v in views),
        }
        try:
            subtasks = self._complete_parsed(
                "planner_initial",
                variables,
                lambda text: parse_plan(text, self.registry.names()),
            )
        except FormatError as exc:
            raise PlanParseFailureError(f"initial plan unusable after re-prompt: {exc}") from exc
        return Plan(
            round_index,
            self.agent_id,
            [Subtask(s.index, s.goal_text, s.tool_name) for s in subtasks],
            provenance="initial",
        )

    def plan_reflect(
        self,
        request: UserRequest,
        prev_plan: Plan,
        own_feedback: str,
        round_index: int,
        peer_plan: Plan | None = None,
        peer_feedback: str | None = None,
    ) -> Plan | KeepPlan:
        variables = {
            "IMAGE_PATH": request.image.path,
            "EDITING_REQUEST": request.goal,
            "TOOL_NAMES": ", ".join(self.registry.names()),
            "SUBTASKS": prev_plan.lines(),
            "FEEDBACK": own_feedback,
        }
        if peer_plan is not None:
            variables["PLAN"] = peer_plan.lines()
            variables["PEER_FEEDBACK"] = peer_feedback or ""
        try:
            parsed = self._complete_parsed(
                "planner_reflect",
                variables,
                lambda text: parse_reflection(text, self.registry.names()),
            )
        except FormatError as exc:
            raise PlanParseFailureError(f"reflection unusable after re-prompt: {exc}") from exc
        if isinstance(parsed, KeepPlan):
            return parsed
        return Plan(
            round_index,
            self.agent_id,
            [Subtask(s.index, s.goal_text, s.tool_name) for s in parsed],
            provenance=f"reflected:{prev_plan.round_index}",
        )

    # --- execution -----------------------------------------------------------

    def run_round(
        self,
        request: UserRequest,
        plan: Plan,
        round_index: int,
        feedback_by_index: dict[int, SubtaskFeedback] | None = None,
        prev_args_by_index: dict[int, dict] | None = None,
    ) -> ExecutionTrace:
        feedback_by_index = feedback_by_index or {}
        prev_args_by_index = prev_args_by_index or {}
        trace = ExecutionTrace(round_index, self.agent_id)
        current = request.image
        for subtask in plan.subtasks:
            artifact, record = self.execute_subtask(
                subtask,
                current,
                coords=(round_index, self.agent_id, subtask.index),
                feedback=feedback_by_index.get(subtask.index),
                prev_args=prev_args_by_index.get(subtask.index),
            )
            trace.steps.append(record)
            if artifact is not None and artifact.is_raster:
                current = artifact
        trace.final_output = current
        return trace

    def execute_subtask(
        self,
        subtask: Subtask,
        input_artifact: Artifact,
        coords: tuple[int, int, int],
        feedback: SubtaskFeedback | None = None,
        prev_args: dict | None = None,
    ) -> tuple[Artifact | None, StepRecord]:
        spec = self.registry.get(subtask.tool_name)
        started = self.clock()
        call_line = f"{subtask.tool_name} (unbound)"
        try:
            values = self._bind_args(spec, subtask, input_artifact, feedback, prev_args)
            if feedback is not None and feedback.verdict == VERDICT_NO and prev_args:
                values = escalate_strength(prev_args, values, spec)
            call_line = self._render_bound_call(spec, values)
            artifact = self._invoke(spec, values, coords)
        except EaselError as exc:
            subtask.status = FAILED
            record = StepRecord(
                index=subtask.index,
                tool_name=subtask.tool_name,
                call=call_line,
                input_id=input_artifact.id,
                output_id=None,
                duration=self.clock() - started,
                error=f"{type(exc).__name__}: {exc}",
            )
            return None, record
        subtask.status = DONE
        subtask.bound_args = dict(values)
        record = StepRecord(
            index=subtask.index,
            tool_name=subtask.tool_name,
            call=call_line,
            input_id=input_artifact.id,
            output_id=artifact.id,
            duration=self.clock() - started,
            chained=artifact.is_raster,
        )
        return artifact, record

    def _bind_args(
        self,
        spec: ToolSpec,
        subtask: Subtask,
        input_artifact: Artifact,
        feedback: SubtaskFeedback | None,
        prev_args: dict | None,
    ) -> dict:
        primary = _primary_path_arg(spec)
        if prev_args and feedback is not None and feedback.verdict == VERDICT_YES:
            values = dict(prev_args)
            if primary:
                values[primary] = input_artifact.path
            return coerce_args(spec, values)
        if not spec.free_args():
            values = {}
            if primary:
                values[primary] = input_artifact.path
            return coerce_args(spec, values)
        return self._bind_via_model(spec, subtask, input_artifact, feedback)

    def _bind_via_model(
        self,
        spec: ToolSpec,
        subtask: Subtask,
        input_artifact: Artifact,
        feedback: SubtaskFeedback | None,
    ) -> dict:
        view = self.registry.executor_view(spec.name)
        note = ""
        if feedback is not None and feedback.verdict != VERDICT_YES and feedback.note:
            note = feedback.note
        variables = {
            "IMAGE_PATH": input_artifact.path,
            "SUBTASKS": subtask.goal_text,
            "FEEDBACK": note,
            "MANUAL": view.manual,
        }

        def parser(text: str) -> dict:
            call = parse_tool_call(text)
            resolved = self.registry.resolve_name(call.tool)
            if resolved != spec.name:
                raise FormatError(
                    f"call names tool {call.tool!r}, subtask requires {spec.name}"
                )
            try:
                return bind_positional(spec, list(call.args))
            except ArgValidationError as exc:
                # Give the model one chance to fix its arguments too.
                raise FormatError(str(exc)) from exc

        values = self._complete_parsed("executor_toolcall", variables, parser)
        primary = _primary_path_arg(spec)
        if primary:
            values[primary] = input_artifact.path
        return values

    def _render_bound_call(self, spec: ToolSpec, values: dict) -> str:
        ordered = []
        for arg in spec.args:
            ordered.append("" if arg.name not in values else str(values[arg.name]))
        while ordered and ordered[-1] == "":
            ordered.pop()
        if ordered == [""]:
            ordered = []
        return render_tool_call(spec.name, tuple(ordered))

    def _invoke(self, spec: ToolSpec, values: dict, coords) -> Artifact:
        if spec.kind == "builtin":
            return invoke_builtin(self.registry, spec.name, values, self.store, coords)
        client = self.adapters.get(spec.name)
        if client is None:
            return invoke_stub(self.registry, spec.name, values, self.store, coords)
        return self._invoke_adapter(client, spec, values, coords)

    def _invoke_adapter(
        self, client: AdapterClient, spec: ToolSpec, values: dict, coords
    ) -> Artifact:
        final = coerce_args(spec, values)
        input_paths = [
            str(self.store.resolve(final[a.name]))
            for a in spec.args
            if a.kind == "path" and a.name in final
        ]
        wire_args = {
            a.name: final[a.name]
            for a in spec.args
            if a.kind != "path" and a.name in final
        }
        round_no, agent_id, step = coords
        ext = ".png" if spec.output == "raster" else ".txt"
        target = self.store.resolve(f"artifacts/{round_no}/{agent_id}/{step}{ext}")
        target.parent.mkdir(parents=True, exist_ok=True)
        wire_args["output_path"] = str(target)
        response = invoke_external(
            client,
            spec.name,
            wire_args,
            input_paths,
            request_id=f"{round_no}-{agent_id}-{step}",
        )
        provenance = {
            "tool": spec.name,
            "args": {k: v for k, v in wire_args.items() if k != "output_path"},
            "adapter": True,
        }
        if response.metrics:
            provenance["metrics"] = dict(response.metrics)
        return self.store.adopt_file(Path(response.output_path), round_no, agent_id, step, provenance)


def _primary_path_arg(spec: ToolSpec) -> str | None:
    for arg in spec.args:
        if arg.kind == "path":
            return arg.name
    return None


def escalate_strength(prev_args: dict, values: dict, spec: ToolSpec) -> dict:
    """Raise strength-like parameters after an unmet verdict.

    Each declared parameter moves up by its step from the previous
    bound value, never below what the model proposed this time, and
    never above the manual's cap.  Parameters the manual does not mark
    are left exactly as proposed.
    """
    out = dict(values)
    for name, param in spec.strength_params().items():
        prev = prev_args.get(name)
        if prev is None:
            continue
        try:
            prev_value = float(prev)
        except (TypeError, ValueError):
            continue
        candidate = prev_value + param.step
        proposed = out.get(name)
        if proposed is not None:
            try:
                candidate = max(candidate, float(proposed))
            except (TypeError, ValueError):
                pass
        out[name] = min(candidate, param.maximum)
    return out
