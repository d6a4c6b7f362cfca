"""The round loop: plan, execute, review, compete, remember, stop.

A Session wires N generator agents and one discriminator around a
shared gateway and artifact store, then drives up to max_rounds
iterations.  Agents run concurrently between round barriers; every
discriminator-side step runs single-threaded on the barrier, and all
events are serialized in agent-id order so transcripts are stable
regardless of thread scheduling.

Determinism notes: each agent gets its own logical clock (so step
durations never depend on interleaving), per-agent completion params
carry seed + agent id, and the transcript embeds no absolute paths.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .artifacts import Artifact, ArtifactStore
from .discriminator import (
    Candidate,
    DiscriminatorAgent,
    PropertyOracleVqa,
    StubAesthetic,
    carry_args,
    carry_feedback,
    compete,
    should_stop,
    update_memory,
)
from .errors import (
    ConfigError,
    EaselError,
    PlanParseFailureError,
    SessionAbortedError,
)
from .gateway import MODE_RECORD, Gateway
from .generator import GeneratorAgent
from .model import MemoryBank, MemoryEntry, UserRequest, carry_plan, score_of
from .parsing import KeepPlan
from .transcript import (
    TRANSCRIPT_SCHEMA_VERSION,
    feedback_payload,
    lint_events,
    persist_transcript,
    plan_payload,
    subtask_feedback_payload,
    trace_payload,
)

REPLAY_STORE_FILENAME = "llm.jsonl"


def force_winner(candidates: list[Candidate]) -> MemoryEntry:
    """Competition off: the lowest-id agent's result wins unconditionally."""
    c = min(candidates, key=lambda c: c.agent_id)
    return MemoryEntry(c.round_index, c.agent_id, c.artifact, c.feedback, c.score())


class LogicalClock:
    """Deterministic tick counter standing in for wall time."""

    def __init__(self):
        self._tick = 0

    def __call__(self) -> int:
        self._tick += 1
        return self._tick


@dataclass
class SessionConfig:
    max_rounds: int = 5
    num_agents: int = 2
    collaboration: bool = True
    competition: bool = True
    early_stop: bool = True
    seed: int = 0
    model_routing: dict | None = None
    use_llm_judge: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ConfigError(f"max_rounds must be at least 1, got {self.max_rounds}")
        if self.num_agents not in (1, 2, 3):
            raise ConfigError(f"num_agents must be 1, 2, or 3, got {self.num_agents}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.model_routing is None:
            self.model_routing = {"strong": "strong", "fast": "fast"}
        missing = {"strong", "fast"} - set(self.model_routing)
        if missing:
            raise ConfigError(f"model_routing is missing roles: {sorted(missing)}")

    def snapshot(self) -> dict:
        """The behavior-relevant fields, for embedding in transcripts.

        output_dir is environment, not behavior, so it stays out; this
        keeps transcripts byte-identical across working directories.
        """
        return {
            "max_rounds": self.max_rounds,
            "num_agents": self.num_agents,
            "collaboration": self.collaboration,
            "competition": self.competition,
            "early_stop": self.early_stop,
            "seed": self.seed,
            "model_routing": dict(self.model_routing),
            "use_llm_judge": self.use_llm_judge,
        }


@dataclass
class AgentState:
    agent: GeneratorAgent
    active: bool = True
    plan: object = None
    feedback: object = None
    decomposed: list = field(default_factory=list)


@dataclass
class SessionResult:
    final: Artifact
    final_feedback: object
    transcript: dict
    path: Path


class Session:
    def __init__(
        self,
        config: SessionConfig,
        registry,
        gateway: Gateway,
        store: ArtifactStore | None = None,
        vqa=None,
        aesthetic=None,
        adapters: dict | None = None,
    ):
        self.config = config
        self.registry = registry
        self.gateway = gateway
        if store is None:
            if not config.output_dir:
                raise ConfigError("a session needs an artifact store or an output_dir")
            store = ArtifactStore(Path(config.output_dir))
        self.store = store
        self.states = {
            agent_id: AgentState(
                GeneratorAgent(
                    agent_id,
                    registry,
                    gateway,
                    store,
                    model_routing=config.model_routing,
                    seed=config.seed + agent_id,
                    adapters=adapters,
                    clock=LogicalClock(),
                )
            )
            for agent_id in range(config.num_agents)
        }
        self.disc = DiscriminatorAgent(
            gateway,
            vqa if vqa is not None else PropertyOracleVqa(store),
            aesthetic=aesthetic if aesthetic is not None else StubAesthetic(store),
            model_routing=config.model_routing,
            seed=config.seed,
            use_llm_judge=config.use_llm_judge,
        )
        self.memory = MemoryBank()

    # --- round helpers -------------------------------------------------------

    def _agent_turn(self, state: AgentState, request: UserRequest, m: int, peer):
        agent = state.agent
        if m == 1:
            plan = agent.plan_initial(request)
            feedback_map, args_map = {}, {}
        else:
            peer_plan, peer_summary = peer if peer else (None, None)
            try:
                reflected = agent.plan_reflect(
                    request,
                    state.plan,
                    state.feedback.summary,
                    m,
                    peer_plan=peer_plan,
                    peer_feedback=peer_summary,
                )
            except PlanParseFailureError:
                reflected = KeepPlan()
            plan = carry_plan(state.plan, m) if isinstance(reflected, KeepPlan) else reflected
            feedback_map = carry_feedback(state.decomposed, state.plan, plan)
            args_map = carry_args(state.plan, plan)
        trace = agent.run_round(request, plan, m, feedback_map, args_map)
        return plan, trace

    def _peer_for(self, agent_id: int, m: int):
        """The strongest other agent's (plan, feedback summary) from last round."""
        if not self.config.collaboration:
            return None
        others = [
            s
            for other_id, s in self.states.items()
            if other_id != agent_id and s.active and s.feedback is not None
        ]
        if not others:
            return None
        best = max(
            others,
            key=lambda s: score_of(s.feedback, m - 1, s.agent.agent_id).sort_key(),
        )
        return best.plan, best.feedback.summary

    def _pick_winner(self, candidates: list[Candidate], request: UserRequest):
        if not self.config.competition:
            return force_winner(candidates), False, True
        if self.config.use_llm_judge:
            pick = self.disc.judge(candidates, request.goal)
            winner, tied = compete([candidates[pick]], self.memory)
        else:
            winner, tied = compete(candidates, self.memory)
        update_memory(self.memory, winner)
        return winner, tied, False

    def _drain_exchanges(self, sink: list, source) -> None:
        sink.extend(e.to_payload() for e in source.exchanges)
        source.exchanges.clear()

    # --- the loop ----------------------------------------------------------------

    def run(self, request: UserRequest) -> SessionResult:
        caption = request.caption
        events: list[dict] = []
        exchanges: list[dict] = []
        rounds: list[dict] = []
        winner_history: list[MemoryEntry] = []
        stopped = False

        for m in range(1, self.config.max_rounds + 1):
            active = {a: s for a, s in self.states.items() if s.active}
            if not active:
                break
            peers = {a: self._peer_for(a, m) for a in active} if m > 1 else {}
            with ThreadPoolExecutor(max_workers=len(active)) as pool:
                futures = {
                    a: pool.submit(self._agent_turn, s, request, m, peers.get(a))
                    for a, s in active.items()
                }
            results = {}
            for a in sorted(futures):
                try:
                    results[a] = futures[a].result()
                except EaselError:
                    if m == 1:
                        active[a].active = False
            if not results:
                if winner_history:
                    break
                raise SessionAbortedError(
                    f"round {m}: no agent produced a usable plan and nothing is remembered"
                )

            for a in sorted(results):
                plan, trace = results[a]
                events.append(
                    {"event": "plan", "round": m, "agent": a, "provenance": plan.provenance}
                )
            for a in sorted(results):
                plan, trace = results[a]
                events.append(
                    {
                        "event": "execute",
                        "round": m,
                        "agent": a,
                        "steps": len(trace.steps),
                        "succeeded": trace.succeeded_steps(),
                    }
                )
                self._drain_exchanges(exchanges, self.states[a].agent)

            if not winner_history and all(
                not trace.succeeded_steps() for _, trace in results.values()
            ):
                raise SessionAbortedError(
                    f"round {m}: every subtask failed and nothing is remembered"
                )

            reports = {}
            for a in sorted(results):
                _, trace = results[a]
                report = self.disc.review(trace.final_output, caption, request.goal)
                reports[a] = report
                events.append(
                    {
                        "event": "feedback",
                        "round": m,
                        "agent": a,
                        "satisfied": report.satisfied_count,
                        "total": report.total_checks,
                    }
                )
            decomposed = {}
            for a in sorted(results):
                plan, _ = results[a]
                decomposed[a] = self.disc.decompose(reports[a], plan, caption, request.goal)
                events.append(
                    {
                        "event": "decompose",
                        "round": m,
                        "agent": a,
                        "verdicts": [f.verdict for f in decomposed[a]],
                    }
                )

            candidates = [
                Candidate(results[a][1].final_output, reports[a], m, a)
                for a in sorted(results)
            ]
            winner, tied, forced = self._pick_winner(candidates, request)
            winner_history.append(winner)
            events.append(
                {
                    "event": "compete",
                    "round": m,
                    "winner_agent": winner.agent_id,
                    "winner_round": winner.round_index,
                    "tied": tied,
                    "forced": forced,
                }
            )
            events.append(
                {
                    "event": "memory",
                    "round": m,
                    "size": len(self.memory) if not forced else len(winner_history),
                    "tracked": not forced,
                }
            )

            stop = should_stop(winner.feedback, request.goal)
            stopped = stop and self.config.early_stop
            events.append({"event": "stop_check", "round": m, "stop": stop})
            self._drain_exchanges(exchanges, self.disc)

            rounds.append(
                {
                    "round": m,
                    "agents": [
                        {
                            "agent": a,
                            "plan": plan_payload(results[a][0]),
                            "trace": trace_payload(results[a][1]),
                            "feedback": feedback_payload(reports[a]),
                            "subtask_feedback": [
                                subtask_feedback_payload(f) for f in decomposed[a]
                            ],
                        }
                        for a in sorted(results)
                    ],
                    "winner": {
                        "agent": winner.agent_id,
                        "round": winner.round_index,
                        "artifact": winner.artifact.id,
                        "digest": winner.artifact.digest,
                    },
                    "stopped": stopped,
                }
            )

            for a in sorted(results):
                plan, _ = results[a]
                state = self.states[a]
                state.plan = plan
                state.feedback = reports[a]
                state.decomposed = decomposed[a]

            if stopped:
                break

        final = winner_history[-1]
        doc = {
            "schema_version": TRANSCRIPT_SCHEMA_VERSION,
            "config": self.config.snapshot(),
            "request": {
                "goal": request.goal,
                "caption": request.caption,
                "image": {
                    "id": request.image.id,
                    "path": request.image.path,
                    "digest": request.image.digest,
                },
            },
            "rounds": rounds,
            "events": events,
            "exchanges": exchanges,
            "final": {
                "artifact": final.artifact.id,
                "path": final.artifact.path,
                "digest": final.artifact.digest,
                "agent": final.agent_id,
                "round": final.round_index,
            },
            "metrics": {
                "rounds_used": len(rounds),
                "tool_calls": sum(
                    len(agent["trace"]["steps"])
                    for record in rounds
                    for agent in record["agents"]
                ),
                "stopped": stopped,
            },
        }
        lint_events(events)
        path = persist_transcript(doc, self.store.root)
        if self.gateway.mode == MODE_RECORD and self.gateway.store is not None:
            self.gateway.store.save(self.store.root / REPLAY_STORE_FILENAME)
        return SessionResult(final.artifact, final.feedback, doc, path)


def run_session(
    request: UserRequest,
    config: SessionConfig,
    registry,
    gateway: Gateway,
    store: ArtifactStore | None = None,
    **providers,
) -> SessionResult:
    return Session(config, registry, gateway, store, **providers).run(request)
