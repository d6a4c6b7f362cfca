"""Command-line shell over the engine: edit, bench, tools, replay.

Thin and synchronous: every command resolves its configuration, calls
the corresponding module, and maps errors onto a stable exit-code
contract that scripts can rely on:

  0  success
  2  configuration or usage problem (bad flags, bad config file,
     unreadable input, missing API key)
  3  editing session failed
  4  registry or adapter validation failed
  5  replay mismatch (divergence, missing replay entry, schema drift)

Settings are merged with precedence flags > environment > config file >
defaults.  Only the API key and the completion base URL are read from
the environment, so secrets never have to live in a config file.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import shutil
import sys
import tempfile
from pathlib import Path

import yaml
from PIL import Image

from .artifacts import ArtifactStore
from .bench import (
    HIERARCHICAL,
    ONE_STAGE,
    AdversarialBackend,
    BenchConfig,
    WellFormedBackend,
    ablation_matrix,
    gen_tasks,
    load_corpus,
    measure_format_success,
    metrics_table,
    noisy_planners,
    run_benchmark,
)
from .errors import ConfigError, EaselError
from .gateway import (
    MODE_RECORD,
    MODE_REPLAY,
    Gateway,
    PatternBackend,
    RemoteBackend,
    ReplayStore,
)
from .model import UserRequest
from .registry import default_registry, default_tools_dir, load_registry
from .session import REPLAY_STORE_FILENAME, SessionConfig, run_session
from .transcript import TRANSCRIPT_FILENAME, load_transcript, transcript_text
from .transport import StdioAdapterClient, conformance_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SESSION = 3
EXIT_VALIDATION = 4
EXIT_REPLAY = 5

ENV_API_KEY = "EASEL_API_KEY"
ENV_BASE_URL = "EASEL_BASE_URL"

_DEFAULTS = {
    "agents": 2,
    "max_rounds": 5,
    "collaboration": True,
    "competition": True,
    "early_stop": True,
    "seed": 0,
    "use_llm_judge": False,
    "backend": "remote",
    "base_url": "https://api.openai.com/v1",
    "api_key": "",
    "model_strong": "strong",
    "model_fast": "fast",
    "out": "easel-out",
}


# --- configuration -----------------------------------------------------------------


def load_config_file(path: str | Path) -> dict:
    """One flat YAML mapping; unknown keys are a hard error."""
    target = Path(path)
    if not target.is_file():
        raise ConfigError(f"config file not found: {target}")
    try:
        raw = yaml.safe_load(target.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {target} is not valid YAML: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {target} must hold a mapping, got {type(raw).__name__}")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(
            f"config file {target} has unknown keys: {', '.join(sorted(unknown))}"
        )
    for key, value in raw.items():
        want = type(_DEFAULTS[key])
        if want is bool and not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be true or false, got {value!r}")
        if want is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        if want is str and not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    return dict(raw)


def resolve_config(args: argparse.Namespace, environ) -> dict:
    """Merge defaults, config file, environment, and explicit flags."""
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(load_config_file(args.config))
    if environ.get(ENV_API_KEY):
        merged["api_key"] = environ[ENV_API_KEY]
    if environ.get(ENV_BASE_URL):
        merged["base_url"] = environ[ENV_BASE_URL]
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def masked(config: dict) -> dict:
    safe = dict(config)
    if safe.get("api_key"):
        safe["api_key"] = "***"
    return safe


def build_backend(config: dict):
    spec = config["backend"]
    if spec.startswith("scripted:"):
        path = Path(spec.split(":", 1)[1])
        if not path.is_file():
            raise ConfigError(f"scripted backend file not found: {path}")
        return PatternBackend.from_jsonl(path)
    if spec == "remote":
        if not config["api_key"]:
            raise ConfigError(
                f"the remote backend needs an API key; set {ENV_API_KEY} or pick "
                f"--backend scripted:<rules.jsonl>"
            )
        return RemoteBackend(config["base_url"], config["api_key"])
    raise ConfigError(f"unknown backend {spec!r}; use 'remote' or 'scripted:<rules.jsonl>'")


def session_config_from(config: dict) -> SessionConfig:
    return SessionConfig(
        max_rounds=config["max_rounds"],
        num_agents=config["agents"],
        collaboration=config["collaboration"],
        competition=config["competition"],
        early_stop=config["early_stop"],
        seed=config["seed"],
        model_routing={"strong": config["model_strong"], "fast": config["model_fast"]},
        use_llm_judge=config["use_llm_judge"],
    )


# --- edit -------------------------------------------------------------------------


def round_summary(doc: dict) -> list[str]:
    """One line per round: winner, satisfied checks, tool calls."""
    lines = []
    for record in doc["rounds"]:
        winner = record["winner"]["agent"]
        by_agent = {entry["agent"]: entry for entry in record["agents"]}
        feedback = by_agent[winner]["feedback"]
        calls = sum(len(entry["trace"]["steps"]) for entry in record["agents"])
        lines.append(
            f"round {record['round']}: winner agent {winner}, "
            f"checks {feedback['satisfied']}/{feedback['total']}, "
            f"tool calls {calls}"
        )
    return lines


def cmd_edit(args: argparse.Namespace, environ) -> int:
    if not args.instruction.strip():
        raise ConfigError("the editing instruction must not be empty")
    source = Path(args.image)
    if not source.is_file():
        raise ConfigError(f"input image not found: {source}")
    config = resolve_config(args, environ)
    if args.dry_run:
        print(json.dumps(masked(config), indent=2, sort_keys=True))
        return EXIT_OK
    # Backend problems (like a missing API key) must surface before the
    # output directory exists, so a failed invocation leaves no trace.
    backend = build_backend(config)
    session_config = session_config_from(config)
    out = Path(config["out"])
    store = ArtifactStore(out)
    caption = args.caption.strip() or "the user's input image"
    request = UserRequest(
        image=store.import_input(source), goal=args.instruction, caption=caption
    )
    gateway = Gateway(backend=backend, store=ReplayStore(), mode=MODE_RECORD)
    try:
        result = run_session(request, session_config, default_registry(), gateway, store=store)
    except EaselError as exc:
        print(f"session failed: {exc}", file=sys.stderr)
        return EXIT_SESSION
    for line in round_summary(result.transcript):
        print(line)
    edited = out / "edited.png"
    shutil.copyfile(store.resolve(result.final.path), edited)
    print(f"edited image: {edited}")
    print(f"transcript: {result.path}")
    print(f"replay log: {out / REPLAY_STORE_FILENAME}")
    return EXIT_OK


# --- bench ------------------------------------------------------------------------


def _bench_configs(args: argparse.Namespace) -> list[BenchConfig]:
    noise = noisy_planners(args.agents)
    if args.ablation:
        return ablation_matrix(
            seed=args.seed, num_agents=args.agents, max_rounds=args.max_rounds
        )
    common = dict(
        num_agents=args.agents,
        max_rounds=args.max_rounds,
        seed=args.seed,
        noise=noise,
    )
    if args.early_stop == "both":
        return [
            BenchConfig(label="early-stop", early_stop=True, **common),
            BenchConfig(label="no-early-stop", early_stop=False, **common),
        ]
    return [
        BenchConfig(
            label="default", early_stop=(args.early_stop == "on"), **common
        )
    ]


def _format_corpus_report() -> tuple[dict, str]:
    prompts = load_corpus()
    rows = []
    for label, backend in (
        ("well-formed", WellFormedBackend()),
        ("adversarial", AdversarialBackend(flaw_rate=0.3, seed=5)),
    ):
        rows.append(
            {
                "backend": label,
                "hierarchical": measure_format_success(backend, prompts, HIERARCHICAL),
                "one_stage": measure_format_success(backend, prompts, ONE_STAGE),
            }
        )
    header = f"{'backend':<12}  {'hierarchical':>12}  {'one_stage':>9}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['backend']:<12}  {row['hierarchical']:>12.3f}  {row['one_stage']:>9.3f}"
        )
    payload = {"prompts": len(prompts), "rows": rows}
    return payload, "\n".join(lines)


def cmd_bench(args: argparse.Namespace, environ) -> int:
    if args.dry_run:
        view = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "dry_run")}
        print(json.dumps(view, indent=2, sort_keys=True))
        return EXIT_OK
    out = Path(args.out)
    if args.format_corpus:
        payload, table = _format_corpus_report()
    else:
        tasks = gen_tasks(args.seed, args.tasks, max_len=args.max_len)
        metrics = run_benchmark(_bench_configs(args), tasks, workers=args.workers)
        payload, table = metrics.to_payload(), metrics_table(metrics)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "metrics.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    print(f"metrics written to {out / 'metrics.json'}")
    return EXIT_OK


# --- tools ------------------------------------------------------------------------


def cmd_tools(args: argparse.Namespace, environ) -> int:
    tools_dir = Path(args.tools_dir) if args.tools_dir else default_tools_dir()
    if args.action == "list":
        registry = load_registry(tools_dir)
        for view in registry.planner_view():
            print(f"{view.name}: {view.description}")
        return EXIT_OK
    try:
        registry = load_registry(tools_dir)
    except EaselError as exc:
        print(f"registry invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"registry ok: {len(registry)} tools under {tools_dir}")
    if not args.adapter:
        return EXIT_OK
    return _validate_adapter(args.adapter, args.probe_tool)


def _validate_adapter(command: str, probe_tool: str) -> int:
    with tempfile.TemporaryDirectory(prefix="easel-probe-") as scratch:
        probe = Path(scratch) / "probe.png"
        Image.new("RGB", (32, 32), (120, 40, 200)).save(probe, format="PNG")
        client = StdioAdapterClient(shlex.split(command))
        try:
            report = conformance_check(client, probe_tool, {}, [str(probe)])
        finally:
            client.close()
    print(report.summary())
    if not report.ok:
        print(f"adapter failed conformance: {command}", file=sys.stderr)
        return EXIT_VALIDATION
    print("adapter conformance: all checks passed")
    return EXIT_OK


# --- replay -----------------------------------------------------------------------


def first_divergence(a, b, path: str = "transcript") -> str:
    """Path of the first difference between two JSON-shaped documents."""
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return f"{path}.{key}"
            if a[key] != b[key]:
                return first_divergence(a[key], b[key], f"{path}.{key}")
        return path
    if isinstance(a, list) and isinstance(b, list):
        for index, (x, y) in enumerate(zip(a, b)):
            if x != y:
                return first_divergence(x, y, f"{path}[{index}]")
        if len(a) != len(b):
            return f"{path}[{min(len(a), len(b))}]"
        return path
    return path


def cmd_replay(args: argparse.Namespace, environ) -> int:
    run_dir = Path(args.run)
    if run_dir.is_file():
        run_dir = run_dir.parent
    try:
        recorded = load_transcript(run_dir / TRANSCRIPT_FILENAME)
        replay_log = run_dir / REPLAY_STORE_FILENAME
        if not replay_log.is_file():
            raise ConfigError(f"no replay log at {replay_log}")
        config = SessionConfig(**recorded["config"])
        with tempfile.TemporaryDirectory(prefix="easel-replay-") as scratch:
            store = ArtifactStore(Path(scratch) / "run")
            request = UserRequest(
                image=store.import_input(run_dir / recorded["request"]["image"]["path"]),
                goal=recorded["request"]["goal"],
                caption=recorded["request"]["caption"],
            )
            gateway = Gateway(store=ReplayStore.load(replay_log), mode=MODE_REPLAY)
            result = run_session(request, config, default_registry(), gateway, store=store)
    except EaselError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    replayed = result.transcript
    same_text = transcript_text(replayed) == transcript_text(recorded)
    same_digest = replayed["final"]["digest"] == recorded["final"]["digest"]
    if same_text and same_digest:
        print(f"replay ok: final digest {recorded['final']['digest']}")
        return EXIT_OK
    print(f"replay diverged at {first_divergence(recorded, replayed)}", file=sys.stderr)
    return EXIT_REPLAY


# --- argument parsing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="easel",
        description="Multi-agent image editing engine: run sessions, benchmarks, and replays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    bool_flag = argparse.BooleanOptionalAction

    edit = sub.add_parser("edit", help="run one editing session on an image")
    edit.add_argument("--image", required=True, help="input image path")
    edit.add_argument("--instruction", required=True, help="what to change")
    edit.add_argument("--caption", default="", help="optional description of the input")
    edit.add_argument("--out", default=None, help="output directory (default easel-out)")
    edit.add_argument(
        "--backend",
        default=None,
        help="'remote' or 'scripted:<rules.jsonl>' (default remote)",
    )
    edit.add_argument("--config", default=None, help="YAML config file")
    edit.add_argument("--agents", type=int, default=None, help="generator agents (1-3)")
    edit.add_argument("--max-rounds", type=int, default=None, dest="max_rounds")
    edit.add_argument("--seed", type=int, default=None)
    edit.add_argument("--collaboration", action=bool_flag, default=None)
    edit.add_argument("--competition", action=bool_flag, default=None)
    edit.add_argument("--early-stop", action=bool_flag, default=None, dest="early_stop")
    edit.add_argument("--use-llm-judge", action=bool_flag, default=None, dest="use_llm_judge")
    edit.add_argument("--model-strong", default=None, dest="model_strong")
    edit.add_argument("--model-fast", default=None, dest="model_fast")
    edit.add_argument("--base-url", default=None, dest="base_url")
    edit.add_argument("--dry-run", action="store_true", dest="dry_run")
    edit.set_defaults(func=cmd_edit)

    bench = sub.add_parser("bench", help="run the synthetic benchmark harness")
    bench.add_argument("--tasks", type=int, default=20)
    bench.add_argument("--seed", type=int, default=7)
    bench.add_argument("--max-len", type=int, default=3, dest="max_len")
    bench.add_argument("--early-stop", choices=("on", "off", "both"), default="on", dest="early_stop")
    bench.add_argument("--ablation", choices=("2x2",), default=None)
    bench.add_argument("--format-corpus", action="store_true", dest="format_corpus")
    bench.add_argument("--agents", type=int, default=2)
    bench.add_argument("--max-rounds", type=int, default=5, dest="max_rounds")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--out", default="bench-out")
    bench.add_argument("--dry-run", action="store_true", dest="dry_run")
    bench.set_defaults(func=cmd_bench)

    tools = sub.add_parser("tools", help="inspect or validate the tool registry")
    tools.add_argument("action", choices=("list", "validate"))
    tools.add_argument("--tools-dir", default=None, dest="tools_dir")
    tools.add_argument(
        "--adapter",
        default=None,
        help="external adapter command to conformance-check (validate only)",
    )
    tools.add_argument("--probe-tool", default="AestheticScore", dest="probe_tool")
    tools.set_defaults(func=cmd_tools)

    replay = sub.add_parser("replay", help="re-run a recorded session without the network")
    replay.add_argument("run", help="directory of a recorded run (or its transcript path)")
    replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, os.environ)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
