"""Scripted backends: plan corruption, repair, adoption, call emission."""

import pytest

from easel.artifacts import ArtifactStore
from easel.bench import (
    AdversarialBackend,
    PlannerNoise,
    TaskCheckerVqa,
    WellFormedBackend,
    make_rule_backend,
)
from easel.bench.rules import UNKNOWN_ANSWER, tool_call_line
from easel.bench.tasks import (
    FLIPPED_H,
    GRAYSCALE,
    LONGEST_SIDE,
    Predicate,
    apply_predicates,
)
from easel.discriminator import parse_yes_no
from easel.gateway import ChatExchange, CompletionParams
from easel.parsing import parse_plan, parse_questions, parse_tool_call
from easel.registry import bind_positional, default_registry
from easel.templates import render
from tests.test_bench_tasks import make_task

REGISTRY = default_registry()


def ask(backend, template_id, prompt, seed=100):
    exchange = ChatExchange(template_id, prompt, CompletionParams(seed=seed))
    return backend.complete(exchange)


def initial_prompt(task):
    views = REGISTRY.planner_view()
    return render(
        "planner_initial",
        {
            "IMAGE_PATH": "input.png",
            "EDITING_REQUEST": task.goal,
            "TOOL_DESCRIPTIONS": "\n".join(f"{v.name}: {v.description}" for v in views),
        },
    )


def reflect_prompt(task, own_lines, feedback, peer_lines=None, peer_feedback=""):
    variables = {
        "IMAGE_PATH": "input.png",
        "EDITING_REQUEST": task.goal,
        "TOOL_NAMES": ", ".join(REGISTRY.names()),
        "SUBTASKS": numbered(own_lines),
        "FEEDBACK": feedback,
    }
    if peer_lines is not None:
        variables["PLAN"] = numbered(peer_lines)
        variables["PEER_FEEDBACK"] = peer_feedback
    return render("planner_reflect", variables)


def executor_prompt(tool, goal, path="input.png", note=""):
    view = REGISTRY.executor_view(tool)
    return render(
        "executor_toolcall",
        {"IMAGE_PATH": path, "SUBTASKS": goal, "FEEDBACK": note, "MANUAL": view.manual},
    )


def numbered(lines):
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def two_step_task():
    return make_task([Predicate(GRAYSCALE), Predicate(FLIPPED_H)])


# --- the per-task rule backend ------------------------------------------------------


def test_noiseless_initial_plan_is_the_canonical_one():
    task = two_step_task()
    backend = make_rule_backend(task, session_seed=100)
    reply = ask(backend, "planner_initial", initial_prompt(task))
    parsed = parse_plan(reply, REGISTRY.names())
    assert [(s.goal_text, s.tool_name) for s in parsed] == task.subtasks()


def test_corrupted_plans_still_parse_but_differ():
    task = two_step_task()
    noise = (PlannerNoise(corrupt_rate=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    reply = ask(backend, "planner_initial", initial_prompt(task))
    parsed = parse_plan(reply, REGISTRY.names())
    assert [(s.goal_text, s.tool_name) for s in parsed] != task.subtasks()


def test_wrong_tool_corruption_changes_exactly_one_trailing_tool():
    task = two_step_task()
    noise = (PlannerNoise(corrupt_rate=1.0, wrong_tool_bias=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    reply = ask(backend, "planner_initial", initial_prompt(task))
    got = [s.rsplit("using ", 1) for s in reply.splitlines()]
    want = [g.rsplit("using ", 1) for g, _t in task.subtasks()]
    changed = [
        (a, b) for (_, a), (_, b) in zip(got, want) if a.strip() != b.strip()
    ]
    assert len(changed) == 1
    bodies = [body.split(". ", 1)[1] for body, _ in got]
    assert bodies == [body for body, _ in want]


def test_order_corruption_swaps_adjacent_steps():
    task = two_step_task()
    noise = (PlannerNoise(corrupt_rate=1.0, wrong_tool_bias=0.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    reply = ask(backend, "planner_initial", initial_prompt(task))
    got = [line.split(". ", 1)[1] for line in reply.splitlines()]
    want = [goal for goal, _tool in task.subtasks()]
    assert got != want
    assert sorted(got) == sorted(want)


def test_reflect_keeps_plan_when_feedback_is_clean():
    task = two_step_task()
    backend = make_rule_backend(task, session_seed=100)
    lines = [goal for goal, _ in task.subtasks()]
    prompt = reflect_prompt(task, lines, "1. all checks satisfied")
    assert ask(backend, "planner_reflect", prompt) == "No"


def test_reflect_self_repair_restores_the_canonical_plan():
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(task, ["Blur the image using GaussianBlur"], failed)
    reply = ask(backend, "planner_reflect", prompt)
    assert reply == numbered([goal for goal, _ in task.subtasks()])


def test_reflect_without_repair_keeps_the_bad_plan():
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=0.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(task, ["Blur the image using GaussianBlur"], failed)
    assert ask(backend, "planner_reflect", prompt) == "No"


def test_reflect_adopts_a_strictly_better_peer_plan():
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=0.0, adopt_rate=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    peer = [goal for goal, _ in task.subtasks()]
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(
        task,
        ["Blur the image using GaussianBlur"],
        failed,
        peer_lines=peer,
        peer_feedback="1. all checks satisfied",
    )
    assert ask(backend, "planner_reflect", prompt) == numbered(peer)


def test_reflect_never_adopts_an_equally_bad_peer():
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=0.0, adopt_rate=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(
        task,
        ["Blur the image using GaussianBlur"],
        failed,
        peer_lines=["Sharpen the image using GaussianBlur"],
        peer_feedback=failed,
    )
    assert ask(backend, "planner_reflect", prompt) == "No"


def test_reflect_never_adopts_its_own_plan_back():
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=0.0, adopt_rate=1.0),)
    backend = make_rule_backend(task, session_seed=100, noises=noise)
    own = ["Blur the image using GaussianBlur"]
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(
        task, own, failed, peer_lines=own, peer_feedback="1. all checks satisfied"
    )
    assert ask(backend, "planner_reflect", prompt) == "No"


def test_repeated_reflections_draw_fresh_randomness():
    # A kept plan reproduces the same prompt next round; the repair
    # decision must still be a fresh draw, and the whole sequence must
    # replay identically on a fresh backend.
    task = two_step_task()
    noise = (PlannerNoise(self_repair_rate=0.5),)
    failed = f"1. not satisfied: {task.questions()[0]} (the image looks unchanged)"
    prompt = reflect_prompt(task, ["Blur the image using GaussianBlur"], failed)

    def sequence():
        backend = make_rule_backend(task, session_seed=100, noises=noise)
        return [ask(backend, "planner_reflect", prompt) for _ in range(12)]

    first = sequence()
    assert len(set(first)) == 2
    assert first == sequence()


def test_responses_are_deterministic_per_seed_and_agent():
    task = two_step_task()
    noises = (PlannerNoise(corrupt_rate=0.5), PlannerNoise(corrupt_rate=0.5))
    prompt = initial_prompt(task)

    def run(backend):
        return [
            ask(backend, "planner_initial", prompt, seed=100 + agent)
            for agent in (0, 1)
        ]

    a = run(make_rule_backend(task, 100, noises))
    b = run(make_rule_backend(task, 100, noises))
    assert a == b


def test_noise_profile_last_entry_covers_extra_agents():
    task = two_step_task()
    noises = (PlannerNoise(corrupt_rate=1.0), PlannerNoise(corrupt_rate=0.0))
    backend = make_rule_backend(task, session_seed=100, noises=noises)
    canonical = numbered([goal for goal, _ in task.subtasks()])
    prompt = initial_prompt(task)
    assert ask(backend, "planner_initial", prompt, seed=100) != canonical
    assert ask(backend, "planner_initial", prompt, seed=101) == canonical
    assert ask(backend, "planner_initial", prompt, seed=105) == canonical


def test_question_generation_matches_the_task():
    task = two_step_task()
    backend = make_rule_backend(task, session_seed=100)
    reply = ask(backend, "question_gen", "irrelevant")
    assert parse_questions(reply) == task.questions()


def test_feedback_compile_reply_is_deliberately_unusable():
    task = two_step_task()
    backend = make_rule_backend(task, session_seed=100)
    assert ask(backend, "feedback_compile", "irrelevant") == "unable to comply"
    assert ask(backend, "competitor_judge", "irrelevant") == "1"


def test_unknown_template_is_an_error():
    backend = make_rule_backend(two_step_task(), session_seed=100)
    with pytest.raises(ValueError):
        ask(backend, "one_stage_toolcall", "irrelevant")


# --- the executor stub --------------------------------------------------------------


def bind_call(tool, goal):
    line = tool_call_line(executor_prompt(tool, goal))
    call = parse_tool_call(line)
    assert REGISTRY.resolve_name(call.tool) == tool
    return bind_positional(REGISTRY.get(tool), list(call.args))


def test_resize_call_takes_the_target_from_the_goal():
    bound = bind_call("Resize", "Resize the image so its longest side is 256 pixels using Resize")
    assert bound["longest_side"] == 256
    assert bound["image"] == "input.png"


def test_resize_call_ignores_out_of_range_numbers():
    bound = bind_call("Resize", "Resize the image so its longest side is 9 pixels using Resize")
    assert bound["longest_side"] == 256


def test_crop_call_reads_the_region_box():
    bound = bind_call("Crop", "Crop the image to the region (3, 7, 44, 81) using Crop")
    assert (bound["left"], bound["top"], bound["right"], bound["bottom"]) == (3, 7, 44, 81)


def test_border_call_reads_the_width():
    bound = bind_call("ImageExpand", "Add a white border of 50 pixels using ImageExpand")
    assert bound["border_px"] == 50
    assert bound["color"] == "white"


def test_watermark_call_uses_the_staged_asset():
    bound = bind_call(
        "AddWatermark",
        "Blend the standard watermark into the bottom-right corner using AddWatermark",
    )
    assert bound["watermark"] == "watermark.png"
    assert bound["alpha"] == pytest.approx(0.8)


def test_fixed_default_calls_bind():
    assert bind_call("GaussianBlur", "Blur the image using GaussianBlur")["kernel_size"] == 5
    assert bind_call("EnhanceColor", "Boost the colors using EnhanceColor")["factor"] == 1.5
    rotate = bind_call("RotateClockwise", "Rotate the image clockwise by 90 degrees using RotateClockwise")
    assert rotate == {"image": "input.png"}


# --- ground-truth question answering --------------------------------------------------


def test_checker_vqa_answers_from_pixels(tmp_path):
    task = two_step_task()
    store = ArtifactStore(tmp_path / "store")
    before = store.put_image(task.image, 1, 0, 1, {})
    after = store.put_image(apply_predicates(task.image, task.predicates), 1, 0, 2, {})
    vqa = TaskCheckerVqa(task, store)
    question = task.questions()[0]
    assert parse_yes_no(vqa.answer(before, question))[0] == "no"
    assert parse_yes_no(vqa.answer(after, question))[0] == "yes"
    off_script = vqa.answer(after, "Is the overall edit aesthetically pleasing?")
    assert off_script == UNKNOWN_ANSWER
    assert parse_yes_no(off_script)[0] == "unknown"


# --- format-corpus calibration backends ------------------------------------------------


def test_well_formed_executor_lines_bind_for_every_tool():
    backend = WellFormedBackend()
    for name in REGISTRY.names():
        spec = REGISTRY.get(name)
        prompt = executor_prompt(name, "Apply the edit described above.")
        line = ask(backend, "executor_toolcall", prompt)
        call = parse_tool_call(line)
        assert REGISTRY.resolve_name(call.tool) == name
        bind_positional(spec, list(call.args))


def test_well_formed_plan_parses():
    backend = WellFormedBackend()
    reply = ask(backend, "planner_initial", "plan please")
    parsed = parse_plan(reply, REGISTRY.names())
    assert [s.tool_name for s in parsed] == ["Resize", "InstructDiffusion"]
    assert ask(backend, "planner_reflect", "reconsider") == "No"


def test_adversarial_flaw_rate_bounds():
    with pytest.raises(ValueError):
        AdversarialBackend(flaw_rate=1.5)
    with pytest.raises(ValueError):
        AdversarialBackend(flaw_rate=-0.1)


def test_adversarial_zero_rate_is_clean_and_one_is_not():
    prompt = executor_prompt("Resize", "Make it smaller.")
    clean = ask(WellFormedBackend(), "executor_toolcall", prompt)
    assert ask(AdversarialBackend(flaw_rate=0.0), "executor_toolcall", prompt) == clean
    broken = ask(AdversarialBackend(flaw_rate=1.0, seed=3), "executor_toolcall", prompt)
    assert broken != clean


def test_adversarial_responses_replay_per_seed():
    prompts = [executor_prompt("Resize", f"Shrink attempt {i}.") for i in range(8)]

    def run(seed):
        backend = AdversarialBackend(flaw_rate=0.5, seed=seed)
        return [ask(backend, "executor_toolcall", p) for p in prompts]

    assert run(9) == run(9)
    assert run(9) != run(10)
