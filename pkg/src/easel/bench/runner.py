"""Benchmark runner: scripted sessions over synthetic tasks.

Each (config, task) pair runs one full engine session in a throwaway
artifact store, with the rule backend planning and a per-task checker
answering the reviewer's questions.  Success is decided by the task's
own predicate checker on the final image, never by the reviewer, so a
miscalibrated discriminator cannot inflate the numbers.
"""

from __future__ import annotations

import json
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ..artifacts import ArtifactStore
from ..errors import EaselError, FormatError
from ..gateway import Backend, CompletionParams, Gateway
from ..model import UserRequest
from ..parsing import parse_plan, parse_tool_call, split_numbered_items
from ..registry import Registry, bind_positional, default_registry
from ..session import SessionConfig, run_session
from ..templates import REPROMPT_SUFFIX, render
from .rules import (
    ONE_STAGE_MARK,
    WATERMARK_STORE_PATH,
    PlannerNoise,
    TaskCheckerVqa,
    make_rule_backend,
)
from .tasks import SyntheticTask, watermark_asset

_REPROMPT_MARK = REPROMPT_SUFFIX.split("{", 1)[0].strip()
_PLANNER_TEMPLATES = ("planner_initial", "planner_reflect")


@dataclass(frozen=True)
class BenchConfig:
    """One engine configuration to measure."""

    label: str = "full"
    num_agents: int = 2
    max_rounds: int = 5
    collaboration: bool = True
    competition: bool = True
    early_stop: bool = True
    seed: int = 0
    noise: tuple[PlannerNoise, ...] = ()
    workers: int = 4


def noisy_planners(num_agents: int = 2) -> tuple[PlannerNoise, ...]:
    """Heterogeneous noise profile: agent 0 is the sloppiest planner.

    The spread is what gives the multi-agent channels something to do;
    identical agents would rise and fall together.
    """
    return tuple(
        PlannerNoise(corrupt_rate=max(0.1, 0.7 - 0.3 * agent))
        for agent in range(num_agents)
    )


def ablation_matrix(
    seed: int = 0,
    noise: tuple[PlannerNoise, ...] | None = None,
    num_agents: int = 2,
    max_rounds: int = 5,
) -> list[BenchConfig]:
    """The 2x2 collaboration/competition grid under one noise profile."""
    noise = noise if noise is not None else noisy_planners(num_agents)
    common = dict(num_agents=num_agents, max_rounds=max_rounds, seed=seed, noise=noise)
    return [
        BenchConfig(label="full", collaboration=True, competition=True, **common),
        BenchConfig(label="no-collaboration", collaboration=False, competition=True, **common),
        BenchConfig(label="no-competition", collaboration=True, competition=False, **common),
        BenchConfig(label="neither", collaboration=False, competition=False, **common),
    ]


# --- per-session outcome -----------------------------------------------------------


@dataclass(frozen=True)
class TaskOutcome:
    solved: bool
    aborted: bool
    rounds: int
    tool_calls: int
    plan_clean: bool


def _run_task(config: BenchConfig, task: SyntheticTask, registry: Registry) -> TaskOutcome:
    session_seed = config.seed + task.index
    with tempfile.TemporaryDirectory(prefix="easel-bench-") as scratch:
        root = Path(scratch)
        source = root / "source.png"
        task.image.save(source, format="PNG")
        store = ArtifactStore(root / "run")
        request = UserRequest(
            image=store.import_input(source), goal=task.goal, caption=task.caption
        )
        shutil.copyfile(watermark_asset(), store.resolve(WATERMARK_STORE_PATH))
        gateway = Gateway(backend=make_rule_backend(task, session_seed, config.noise))
        session_config = SessionConfig(
            max_rounds=config.max_rounds,
            num_agents=config.num_agents,
            collaboration=config.collaboration,
            competition=config.competition,
            early_stop=config.early_stop,
            seed=session_seed,
        )
        try:
            result = run_session(
                request,
                session_config,
                registry,
                gateway,
                store=store,
                vqa=TaskCheckerVqa(task, store),
            )
        except EaselError:
            return TaskOutcome(False, True, 0, 0, False)
        solved = task.solved(store.load_image(result.final))
        metrics = result.transcript["metrics"]
        plan_clean = not any(
            _REPROMPT_MARK in exchange["prompt"]
            for exchange in result.transcript["exchanges"]
            if exchange["template_id"] in _PLANNER_TEMPLATES
        )
        return TaskOutcome(
            solved=solved,
            aborted=False,
            rounds=metrics["rounds_used"],
            tool_calls=metrics["tool_calls"],
            plan_clean=plan_clean,
        )


# --- metrics ---------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigMetrics:
    """Aggregated outcomes for one configuration."""

    label: str
    tasks: int
    solved: int
    aborted: int
    total_tool_calls: int
    total_rounds: int
    clean_plans: int

    @property
    def completed(self) -> int:
        return self.tasks - self.aborted

    @property
    def solve_rate(self) -> float:
        return self.solved / self.tasks if self.tasks else 0.0

    @property
    def mean_tool_calls(self) -> float:
        return self.total_tool_calls / self.completed if self.completed else 0.0

    @property
    def mean_rounds(self) -> float:
        return self.total_rounds / self.completed if self.completed else 0.0

    @property
    def plan_parse_success_rate(self) -> float:
        return self.clean_plans / self.tasks if self.tasks else 0.0

    def to_payload(self) -> dict:
        return {
            "label": self.label,
            "tasks": self.tasks,
            "solved": self.solved,
            "aborted": self.aborted,
            "solve_rate": round(self.solve_rate, 4),
            "mean_tool_calls": round(self.mean_tool_calls, 4),
            "mean_rounds": round(self.mean_rounds, 4),
            "plan_parse_success_rate": round(self.plan_parse_success_rate, 4),
        }


@dataclass(frozen=True)
class BenchMetrics:
    """Whole-run results with a per-config breakdown."""

    rows: tuple[ConfigMetrics, ...]

    def row(self, label: str) -> ConfigMetrics:
        for row in self.rows:
            if row.label == label:
                return row
        raise KeyError(f"no benchmark row labelled {label!r}")

    @property
    def tasks(self) -> int:
        return sum(r.tasks for r in self.rows)

    @property
    def solve_rate(self) -> float:
        total = self.tasks
        return sum(r.solved for r in self.rows) / total if total else 0.0

    @property
    def mean_tool_calls(self) -> float:
        completed = sum(r.completed for r in self.rows)
        return sum(r.total_tool_calls for r in self.rows) / completed if completed else 0.0

    @property
    def mean_rounds(self) -> float:
        completed = sum(r.completed for r in self.rows)
        return sum(r.total_rounds for r in self.rows) / completed if completed else 0.0

    @property
    def plan_parse_success_rate(self) -> float:
        total = self.tasks
        return sum(r.clean_plans for r in self.rows) / total if total else 0.0

    def to_payload(self) -> dict:
        return {
            "tasks": self.tasks,
            "solve_rate": round(self.solve_rate, 4),
            "mean_tool_calls": round(self.mean_tool_calls, 4),
            "mean_rounds": round(self.mean_rounds, 4),
            "plan_parse_success_rate": round(self.plan_parse_success_rate, 4),
            "rows": [r.to_payload() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_payload(), indent=2, sort_keys=True)


def _fold(label: str, outcomes: list[TaskOutcome]) -> ConfigMetrics:
    return ConfigMetrics(
        label=label,
        tasks=len(outcomes),
        solved=sum(1 for o in outcomes if o.solved),
        aborted=sum(1 for o in outcomes if o.aborted),
        total_tool_calls=sum(o.tool_calls for o in outcomes if not o.aborted),
        total_rounds=sum(o.rounds for o in outcomes if not o.aborted),
        clean_plans=sum(1 for o in outcomes if o.plan_clean),
    )


def run_benchmark(
    configs: BenchConfig | list[BenchConfig],
    tasks: list[SyntheticTask],
    registry: Registry | None = None,
    workers: int | None = None,
) -> BenchMetrics:
    """Run every task under every config and aggregate the outcomes.

    Per-task engine failures count as unsolved instead of raising, so
    one pathological task cannot sink a whole run.
    """
    if isinstance(configs, BenchConfig):
        configs = [configs]
    if not configs:
        raise ValueError("run_benchmark needs at least one config")
    if not tasks:
        raise ValueError("run_benchmark needs at least one task")
    registry = registry or default_registry()
    rows = []
    for config in configs:
        pool = workers if workers is not None else config.workers
        if pool <= 1:
            outcomes = [_run_task(config, task, registry) for task in tasks]
        else:
            with ThreadPoolExecutor(max_workers=pool) as executor:
                outcomes = list(
                    executor.map(lambda task: _run_task(config, task, registry), tasks)
                )
        rows.append(_fold(config.label, outcomes))
    return BenchMetrics(tuple(rows))


def metrics_table(metrics: BenchMetrics) -> str:
    """The per-config breakdown as an aligned plain-text table."""
    headers = ("config", "tasks", "solve_rate", "mean_tool_calls", "mean_rounds", "plan_parse", "aborted")
    body = [
        (
            row.label,
            str(row.tasks),
            f"{row.solve_rate:.3f}",
            f"{row.mean_tool_calls:.2f}",
            f"{row.mean_rounds:.2f}",
            f"{row.plan_parse_success_rate:.3f}",
            str(row.aborted),
        )
        for row in metrics.rows
    ]
    widths = [
        max(len(headers[col]), *(len(line[col]) for line in body)) if body else len(headers[col])
        for col in range(len(headers))
    ]
    def fmt(cells):
        return "  ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()
    rule = "  ".join("-" * width for width in widths)
    return "\n".join([fmt(headers), rule, *(fmt(line) for line in body)])


# --- format-success measurement -----------------------------------------------------

_ONE_STAGE_PROMPT = """\
You are an image editing assistant that writes a complete tool-call script in one pass.
The image to edit is saved at {image_path}.
The editing request is: "{goal}"

The manuals of every available tool are below.
{manuals}

{mark}, of the form:
1. ToolName @@ first argument <-> second argument
Use only tools named in the manuals. Do not add commentary.
"""

HIERARCHICAL = "hierarchical"
ONE_STAGE = "one_stage"

_PROBE_PARAMS = CompletionParams(
    model_id="format-probe", temperature=0.0, max_tokens=2048, seed=0
)


def corpus_path() -> Path:
    return Path(__file__).resolve().parent / "corpus" / "editing_prompts.txt"


def load_corpus(path: str | Path | None = None) -> list[str]:
    """The shipped editing prompts, one per non-empty line."""
    target = Path(path) if path is not None else corpus_path()
    lines = [line.strip() for line in target.read_text(encoding="utf-8").splitlines()]
    prompts = [line for line in lines if line and not line.startswith("#")]
    if not prompts:
        raise ValueError(f"prompt corpus is empty: {target}")
    return prompts


def measure_format_success(
    backend: Backend,
    prompts: list[str],
    mode: str = HIERARCHICAL,
    registry: Registry | None = None,
) -> float:
    """Fraction of prompts the backend formats correctly on first try.

    Hierarchical mode mirrors the engine: a plan call, then one
    executor call per subtask whose tool has free arguments.  One-stage
    mode asks for all call lines in a single response.  A prompt counts
    as a success only if every parse and every argument binding
    succeeds without any corrective re-prompt.
    """
    if not prompts:
        raise ValueError("measure_format_success needs a non-empty prompt list")
    if mode not in (HIERARCHICAL, ONE_STAGE):
        raise ValueError(f"unknown format measurement mode: {mode}")
    registry = registry or default_registry()
    gateway = Gateway(backend=backend)
    if mode == HIERARCHICAL:
        check = _hierarchical_ok
    else:
        check = _one_stage_ok
    passed = sum(1 for goal in prompts if check(gateway, registry, goal))
    return passed / len(prompts)


def _hierarchical_ok(gateway: Gateway, registry: Registry, goal: str) -> bool:
    descriptions = "\n".join(
        f"{view.name}: {view.description}" for view in registry.planner_view()
    )
    prompt = render(
        "planner_initial",
        {
            "IMAGE_PATH": "input.png",
            "EDITING_REQUEST": goal,
            "TOOL_DESCRIPTIONS": descriptions,
        },
    )
    exchange = gateway.complete("planner_initial", prompt, _PROBE_PARAMS)
    try:
        subtasks = parse_plan(exchange.response, registry.names())
    except FormatError:
        return False
    for subtask in subtasks:
        spec = registry.get(subtask.tool_name)
        if not spec.free_args():
            continue
        call_prompt = render(
            "executor_toolcall",
            {
                "IMAGE_PATH": "input.png",
                "SUBTASKS": subtask.goal_text,
                "FEEDBACK": "",
                "MANUAL": registry.executor_view(spec.name).manual,
            },
        )
        reply = gateway.complete("executor_toolcall", call_prompt, _PROBE_PARAMS)
        if not _call_binds(registry, reply.response, expect=spec.name):
            return False
    return True


def _one_stage_ok(gateway: Gateway, registry: Registry, goal: str) -> bool:
    manuals = "\n\n".join(
        registry.executor_view(name).manual for name in registry.names()
    )
    prompt = _ONE_STAGE_PROMPT.format(
        image_path="input.png", goal=goal, manuals=manuals, mark=ONE_STAGE_MARK
    )
    exchange = gateway.complete("one_stage_toolcall", prompt, _PROBE_PARAMS)
    items = split_numbered_items(exchange.response)
    if not items:
        return False
    return all(_call_binds(registry, item) for item in items)


def _call_binds(registry: Registry, text: str, expect: str | None = None) -> bool:
    try:
        call = parse_tool_call(text)
        name = registry.resolve_name(call.tool)
        if name is None or (expect is not None and name != expect):
            return False
        bind_positional(registry.get(name), list(call.args))
    except EaselError:
        return False
    return True
