"""Command shell: config merging, exit codes, and the four subcommands."""

import json

import numpy as np
import pytest
from PIL import Image

from easel import cli
from easel.transcript import TRANSCRIPT_FILENAME

pytestmark = pytest.mark.usefixtures("no_api_env")


@pytest.fixture
def no_api_env(monkeypatch):
    monkeypatch.delenv(cli.ENV_API_KEY, raising=False)
    monkeypatch.delenv(cli.ENV_BASE_URL, raising=False)


@pytest.fixture
def source_image(tmp_path):
    rng = np.random.default_rng(4)
    pixels = rng.integers(0, 256, size=(80, 100, 3), dtype=np.uint8)
    path = tmp_path / "in.png"
    Image.fromarray(pixels).save(path)
    return path


@pytest.fixture
def scripted_rules(tmp_path):
    rules = [
        {
            "template": "planner_initial",
            "response": (
                "1. Convert the image to grayscale using RGB2Gray\n"
                "2. Flip the image horizontally using FlipHorizontal"
            ),
        },
        {"template": "planner_reflect", "response": "No"},
        {
            "template": "question_gen",
            "response": (
                "1. Is the image fully grayscale?\n"
                "2. Is the image flipped horizontally?"
            ),
        },
        {"template": "feedback_compile", "response": "unable to comply"},
        {"template": "competitor_judge", "response": "1"},
    ]
    path = tmp_path / "plan.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rules) + "\n", encoding="utf-8")
    return path


def edit_args(source_image, scripted_rules, out, extra=()):
    return [
        "edit",
        "--image",
        str(source_image),
        "--instruction",
        "convert to grayscale and flip",
        "--backend",
        f"scripted:{scripted_rules}",
        "--agents",
        "1",
        "--max-rounds",
        "1",
        "--out",
        str(out),
        *extra,
    ]


def test_exit_codes_are_the_documented_contract():
    assert (cli.EXIT_OK, cli.EXIT_CONFIG, cli.EXIT_SESSION) == (0, 2, 3)
    assert (cli.EXIT_VALIDATION, cli.EXIT_REPLAY) == (4, 5)


def test_no_arguments_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as stop:
        cli.main([])
    assert stop.value.code == 2
    capsys.readouterr()


# --- configuration -----------------------------------------------------------------


def test_dry_run_prints_the_resolved_config_and_writes_nothing(
    tmp_path, source_image, scripted_rules, capsys
):
    out = tmp_path / "run"
    code = cli.main(edit_args(source_image, scripted_rules, out, ["--dry-run"]))
    assert code == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["agents"] == 1
    assert resolved["max_rounds"] == 1
    assert resolved["backend"] == f"scripted:{scripted_rules}"
    assert not out.exists()


def test_flags_beat_environment_beats_file(
    tmp_path, source_image, scripted_rules, capsys, monkeypatch
):
    config = tmp_path / "easel.yaml"
    config.write_text(
        "agents: 3\nseed: 5\nbase_url: https://file.example/v1\n", encoding="utf-8"
    )
    monkeypatch.setenv(cli.ENV_API_KEY, "sk-test")
    monkeypatch.setenv(cli.ENV_BASE_URL, "https://env.example/v1")
    code = cli.main(
        edit_args(
            source_image,
            scripted_rules,
            tmp_path / "run",
            ["--config", str(config), "--dry-run"],
        )
    )
    assert code == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["agents"] == 1  # flag wins over the file's 3
    assert resolved["seed"] == 5  # file wins over the default 0
    assert resolved["base_url"] == "https://env.example/v1"  # env wins over file
    assert resolved["api_key"] == "***"  # set, but never printed


@pytest.mark.parametrize(
    "body",
    [
        "bogus_key: 1\n",
        "- just\n- a\n- list\n",
        "agents: three\n",
        "collaboration: maybe\n",
    ],
)
def test_bad_config_files_are_rejected(tmp_path, source_image, scripted_rules, body, capsys):
    config = tmp_path / "easel.yaml"
    config.write_text(body, encoding="utf-8")
    code = cli.main(
        edit_args(
            source_image, scripted_rules, tmp_path / "run", ["--config", str(config)]
        )
    )
    assert code == cli.EXIT_CONFIG
    assert "config" in capsys.readouterr().err


def test_missing_api_key_fails_before_any_output(tmp_path, source_image, capsys):
    out = tmp_path / "run"
    code = cli.main(
        [
            "edit",
            "--image",
            str(source_image),
            "--instruction",
            "flip it",
            "--out",
            str(out),
        ]
    )
    assert code == cli.EXIT_CONFIG
    assert cli.ENV_API_KEY in capsys.readouterr().err
    assert not out.exists()


def test_unreadable_image_and_empty_instruction_are_config_errors(
    tmp_path, scripted_rules, capsys
):
    missing = tmp_path / "nope.png"
    code = cli.main(edit_args(missing, scripted_rules, tmp_path / "run"))
    assert code == cli.EXIT_CONFIG
    capsys.readouterr()

    real = tmp_path / "real.png"
    Image.new("RGB", (8, 8)).save(real)
    code = cli.main(
        [
            "edit",
            "--image",
            str(real),
            "--instruction",
            "   ",
            "--backend",
            f"scripted:{scripted_rules}",
        ]
    )
    assert code == cli.EXIT_CONFIG
    capsys.readouterr()


# --- edit -------------------------------------------------------------------------


def test_scripted_edit_writes_the_expected_pixels(
    tmp_path, source_image, scripted_rules, capsys
):
    out = tmp_path / "run"
    code = cli.main(edit_args(source_image, scripted_rules, out))
    assert code == 0
    stdout = capsys.readouterr().out
    lines = stdout.splitlines()
    assert lines[0].startswith("round 1: winner agent 0")
    assert "tool calls 2" in lines[0]
    assert (out / "edited.png").is_file()
    assert (out / TRANSCRIPT_FILENAME).is_file()
    assert (out / "llm.jsonl").is_file()

    edited = Image.open(out / "edited.png").convert("RGB")
    expected = (
        Image.open(source_image)
        .convert("L")
        .convert("RGB")
        .transpose(Image.FLIP_LEFT_RIGHT)
    )
    assert np.array_equal(np.asarray(edited), np.asarray(expected))


# --- replay -----------------------------------------------------------------------


@pytest.fixture
def recorded_run(tmp_path, source_image, scripted_rules, capsys):
    out = tmp_path / "run"
    assert cli.main(edit_args(source_image, scripted_rules, out)) == 0
    capsys.readouterr()
    return out


def test_replay_of_an_untouched_run_matches(recorded_run, capsys):
    assert cli.main(["replay", str(recorded_run)]) == 0
    assert "replay ok" in capsys.readouterr().out


def test_replay_accepts_the_transcript_path_too(recorded_run, capsys):
    assert cli.main(["replay", str(recorded_run / TRANSCRIPT_FILENAME)]) == 0
    capsys.readouterr()


def test_tampered_replay_log_reports_the_divergence_point(recorded_run, capsys):
    log = recorded_run / "llm.jsonl"
    entries = [json.loads(line) for line in log.read_text().splitlines()]
    for entry in entries:
        if "grayscale using RGB2Gray" in entry["response"]:
            entry["response"] = "1. Flip the image horizontally using FlipHorizontal"
    log.write_text("\n".join(json.dumps(e) for e in entries) + "\n", encoding="utf-8")
    code = cli.main(["replay", str(recorded_run)])
    assert code == cli.EXIT_REPLAY
    assert "replay diverged at transcript." in capsys.readouterr().err


def test_replay_without_a_log_fails(recorded_run, capsys):
    (recorded_run / "llm.jsonl").unlink()
    assert cli.main(["replay", str(recorded_run)]) == cli.EXIT_REPLAY
    assert "replay" in capsys.readouterr().err


def test_replay_rejects_unknown_schema_versions(recorded_run, capsys):
    path = recorded_run / TRANSCRIPT_FILENAME
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert cli.main(["replay", str(recorded_run)]) == cli.EXIT_REPLAY
    assert "schema" in capsys.readouterr().err


def test_first_divergence_reports_a_usable_path():
    a = {"rounds": [{"agents": [{"trace": {"steps": [1, 2]}}]}], "x": 1}
    b = {"rounds": [{"agents": [{"trace": {"steps": [1, 3]}}]}], "x": 1}
    assert cli.first_divergence(a, b) == "transcript.rounds[0].agents[0].trace.steps[1]"
    assert cli.first_divergence({"k": [1]}, {"k": [1, 2]}) == "transcript.k[1]"
    assert cli.first_divergence({"k": 1}, {"j": 1}) == "transcript.j"


# --- tools ------------------------------------------------------------------------


def test_tools_list_prints_every_registered_tool(capsys):
    assert cli.main(["tools", "list"]) == 0
    out = capsys.readouterr().out
    for name in ("Resize", "RGB2Gray", "InstructDiffusion", "AestheticScore"):
        assert f"{name}: " in out


def test_tools_validate_passes_on_the_shipped_registry(capsys):
    assert cli.main(["tools", "validate"]) == 0
    assert "registry ok: 22 tools" in capsys.readouterr().out


def test_tools_validate_names_the_broken_tool(tmp_path, capsys):
    import shutil

    from easel.registry import default_tools_dir

    broken = tmp_path / "tools"
    shutil.copytree(default_tools_dir(), broken)
    manual = broken / "Resize" / "manual.md"
    assert manual.is_file()
    manual.unlink()
    code = cli.main(["tools", "validate", "--tools-dir", str(broken)])
    assert code == cli.EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "registry invalid" in err
    assert "Resize" in err


# --- bench ------------------------------------------------------------------------


def test_bench_writes_metrics_and_prints_a_table(tmp_path, capsys):
    out = tmp_path / "bench"
    code = cli.main(
        ["bench", "--tasks", "2", "--seed", "3", "--out", str(out), "--workers", "2"]
    )
    assert code == 0
    table = capsys.readouterr().out
    assert "default" in table
    payload = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert payload["rows"][0]["tasks"] == 2
    assert (out / "metrics.txt").is_file()


def test_bench_early_stop_both_compares_two_configs(tmp_path, capsys):
    out = tmp_path / "bench"
    code = cli.main(
        [
            "bench",
            "--tasks",
            "2",
            "--seed",
            "3",
            "--early-stop",
            "both",
            "--out",
            str(out),
            "--workers",
            "2",
        ]
    )
    assert code == 0
    payload = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert [row["label"] for row in payload["rows"]] == ["early-stop", "no-early-stop"]


def test_bench_ablation_runs_the_four_configs(tmp_path, capsys):
    out = tmp_path / "bench"
    code = cli.main(
        [
            "bench",
            "--ablation",
            "2x2",
            "--tasks",
            "2",
            "--seed",
            "3",
            "--out",
            str(out),
            "--workers",
            "4",
        ]
    )
    assert code == 0
    payload = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert [row["label"] for row in payload["rows"]] == [
        "full",
        "no-collaboration",
        "no-competition",
        "neither",
    ]


def test_bench_format_corpus_scores_the_scripted_backend_perfectly(tmp_path, capsys):
    out = tmp_path / "bench"
    code = cli.main(["bench", "--format-corpus", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    by_backend = {row["backend"]: row for row in payload["rows"]}
    assert by_backend["well-formed"]["hierarchical"] == 1.0
    assert by_backend["well-formed"]["one_stage"] == 1.0
    assert by_backend["adversarial"]["hierarchical"] < 1.0
    assert by_backend["adversarial"]["one_stage"] < 1.0
    assert (
        by_backend["adversarial"]["hierarchical"]
        != by_backend["adversarial"]["one_stage"]
    )


def test_bench_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "bench"
    assert cli.main(["bench", "--out", str(out), "--dry-run"]) == 0
    assert not out.exists()
    json.loads(capsys.readouterr().out)
