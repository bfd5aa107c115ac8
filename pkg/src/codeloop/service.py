"""Multi-tenant session service: wires roles together and runs rounds.

A round is a loop: the Planner reads the newest incoming post and decides
to dispatch a step (routed to the role it names, normally the Code
Interpreter), ask the user something, answer the user, or replan. Every
post is appended to session memory and emitted as an event, so a UI can
replay a round from its event stream alone. Work inside one session is
strictly serialized; sessions are independent.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .config import AppConfig
from .executor import ExecutionMode, ExecutorManager, WorkerDead, WorkerHandle
from .gateway import Gateway, build_gateway
from .interpreter import (
    InterpreterDeps,
    InterpreterOutcome,
    OutcomeStatus,
    interpret,
)
from .memory.examples import Example, ExampleKind, load_examples
from .memory.experience import ExperiencePool
from .memory.store import SessionStore
from .memory.types import (
    CODE_INTERPRETER,
    PLANNER,
    USER,
    Attachment,
    Post,
    Round,
    Session,
    append_post,
    begin_round,
    finish_round,
)
from .planner import (
    AskUser,
    DispatchStep,
    MaxPostsExceeded,
    Planner,
    PlannerState,
    Replan,
    RespondFinal,
    render_ci_description,
)
from .plugins import PluginRegistry, load_registry
from .verifier import VerificationPolicy


class RoundFailedError(Exception):
    pass


class UnknownRole(Exception):
    pass


@dataclass
class ServiceEvent:
    kind: str  # post_created | round_finished | round_failed | artifact_available
    session_id: str
    round_id: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "event": self.kind,
                "session_id": self.session_id,
                "round_id": self.round_id,
                **self.payload,
            }
        )


def post_to_dict(post: Post) -> dict:
    return {
        "id": post.id,
        "send_from": post.send_from,
        "send_to": post.send_to,
        "message": post.message,
        "attachment_list": [{"type": a.kind, "content": a.content} for a in post.attachments],
    }


class _EventLog:
    """Per-session append-only event list with blocking reads."""

    def __init__(self) -> None:
        self.events: list[ServiceEvent] = []
        self._cond = threading.Condition()

    def append(self, event: ServiceEvent) -> None:
        with self._cond:
            self.events.append(event)
            self._cond.notify_all()

    def read_from(self, index: int, timeout: float | None = None) -> list[ServiceEvent]:
        with self._cond:
            if index >= len(self.events) and timeout:
                self._cond.wait(timeout=timeout)
            return self.events[index:]


@dataclass
class RoleContract:
    name: str
    reply: Callable[[Post], Post]


class AgentService:
    def __init__(
        self,
        config: AppConfig,
        gateway: Gateway | None = None,
        registry: PluginRegistry | None = None,
    ):
        self.config = config
        self.gateway = gateway or build_gateway(config.llm)
        if registry is not None:
            self.registry = registry
            self.registry_errors = []
        elif config.plugins_dir:
            self.registry, self.registry_errors = load_registry(config.plugins_dir)
        else:
            self.registry, self.registry_errors = PluginRegistry(), []

        self.manager = ExecutorManager(
            data_dir=config.data_dir,
            mode=ExecutionMode(config.execution.mode),
            execution_timeout=config.execution.timeout_seconds,
            init_timeout=config.execution.init_timeout_seconds,
            container_image=config.execution.container_image,
            container_network=config.execution.container_network,
        )
        self.store = SessionStore(
            data_dir=config.data_dir,
            default_expiry=config.session.expiry_seconds,
            on_evict=self.manager.stop_session,
        )
        self.experience = (
            ExperiencePool(config.experience_dir) if config.experience_dir else None
        )
        self.planner_examples: list[Example] = (
            load_examples(config.examples_planner_dir, ExampleKind.PLANNING)
            if config.examples_planner_dir
            else []
        )
        self.codegen_examples: list[Example] = (
            load_examples(config.examples_codegen_dir, ExampleKind.CODEGEN)
            if config.examples_codegen_dir
            else []
        )

        self.planner = Planner(self.gateway)
        self._planner_states: dict[str, PlannerState] = {}
        self._session_locks: dict[str, threading.RLock] = {}
        self._events: dict[str, _EventLog] = {}
        self._roles: dict[str, RoleContract] = {}
        self.register_role(CODE_INTERPRETER, self._code_interpreter_reply)
        self._lock = threading.Lock()

    # -- role wiring ----------------------------------------------------------

    def register_role(self, name: str, reply: Callable[[Post], Post]) -> None:
        if name in (USER, PLANNER):
            raise ValueError(f"role name {name!r} is reserved")
        if name in self._roles:
            raise ValueError(f"role {name!r} already registered")
        self._roles[name] = RoleContract(name=name, reply=reply)

    def roles(self) -> list[str]:
        return [PLANNER, *sorted(self._roles)]

    # -- session lifecycle ------------------------------------------------------

    def create_session(self, plugin_set: list[str] | None = None) -> Session:
        plugins = plugin_set if plugin_set is not None else self.registry.names()
        session = self.store.create(plugin_set=plugins)
        with self._lock:
            self._session_locks[session.id] = threading.RLock()
            self._events[session.id] = _EventLog()
        return session

    def reset_session(self, session_id: str) -> None:
        """Stop the worker and clear short-term memory; experience persists."""
        session = self.store.get(session_id)
        with self._session_lock(session_id):
            self.manager.stop_session(session_id)
            session.rounds.clear()
            self._planner_states.pop(session_id, None)
            self.store.persist(session)

    def sweep_expired(self, now: float | None = None) -> list[str]:
        removed = self.store.sweep_expired(now)
        for sid in removed:
            with self._lock:
                self._planner_states.pop(sid, None)
                self._session_locks.pop(sid, None)
                self._events.pop(sid, None)
        return removed

    def shutdown(self) -> None:
        self.manager.stop_all()

    def _session_lock(self, session_id: str) -> threading.RLock:
        with self._lock:
            return self._session_locks.setdefault(session_id, threading.RLock())

    def event_log(self, session_id: str) -> _EventLog:
        with self._lock:
            return self._events.setdefault(session_id, _EventLog())

    # -- round loop ---------------------------------------------------------------

    def run_round(self, session_id: str, user_query: str) -> Post:
        """Run one full request/response cycle; returns the final Planner post."""
        session = self.store.get(session_id)
        with self._session_lock(session_id):
            round_ = begin_round(session, user_query, now=self.store.clock())
            self.store.persist(session)
            self._emit_post(session, round_, round_.posts[0])
            try:
                return self._drive(session, round_)
            except (MaxPostsExceeded, UnknownRole) as exc:
                return self._fail_round(session, round_, str(exc))
            except WorkerDead as exc:
                return self._fail_round(
                    session,
                    round_,
                    f"the execution worker died ({exc}); reset the session to "
                    "restart it",
                )

    def _drive(self, session: Session, round_: Round) -> Post:
        state = self._planner_state(session)
        incoming = round_.posts[0]
        while True:
            if len(round_.posts) >= self.config.round.max_posts:
                raise MaxPostsExceeded(
                    f"round exceeded the post budget of {self.config.round.max_posts}"
                )
            decision = self.planner.step(state, incoming)
            if isinstance(decision, Replan):
                # The planner already swapped the stored plan; continue with
                # the decision embedded in the same reply.
                decision = decision.then

            if isinstance(decision, (AskUser, RespondFinal)):
                text = decision.question if isinstance(decision, AskUser) else decision.answer
                final = self._make_planner_post(session, state, USER, text)
                append_post(round_, final)
                self.store.persist(session)
                self._emit_post(session, round_, final)
                finish_round(round_)
                self.store.touch(session)
                self.event_log(session.id).append(
                    ServiceEvent(
                        kind="round_finished",
                        session_id=session.id,
                        round_id=round_.id,
                        payload={"final_message": final.message},
                    )
                )
                return final

            assert isinstance(decision, DispatchStep)
            role = self._roles.get(decision.to_role)
            if role is None:
                raise UnknownRole(
                    f"planner addressed unregistered role {decision.to_role!r}"
                )
            dispatch = self._make_planner_post(
                session, state, decision.to_role, decision.query
            )
            append_post(round_, dispatch)
            self.store.persist(session)
            self._emit_post(session, round_, dispatch)

            reply = role.reply(dispatch)
            reply.id = session.next_post_id()
            append_post(round_, reply)
            self.store.persist(session)
            self._emit_post(session, round_, reply)
            self._emit_artifacts(session, round_, reply)

            succeeded = (reply.find("execution_status") or Attachment(
                "execution_status", "FAILURE"
            )).content == "SUCCESS"
            self.planner.observe_dispatch_result(state, decision.step_index, succeeded)
            incoming = reply

    def _fail_round(self, session: Session, round_: Round, reason: str) -> Post:
        finish_round(round_, failed=True)
        self.store.persist(session)
        self.event_log(session.id).append(
            ServiceEvent(
                kind="round_failed",
                session_id=session.id,
                round_id=round_.id,
                payload={"reason": reason},
            )
        )
        raise RoundFailedError(reason)

    # -- planner plumbing ---------------------------------------------------------

    def _planner_state(self, session: Session) -> PlannerState:
        state = self._planner_states.get(session.id)
        if state is None:
            registry = self.registry.subset(session.plugin_set)
            state = PlannerState(
                session_id=session.id,
                ci_description=render_ci_description(registry),
                merge_plans=self.config.planner.merge_plans,
                examples=self.planner_examples,
            )
            self._planner_states[session.id] = state
        if self.experience is not None and session.rounds:
            state.tips = self.experience.retrieve(session.rounds[-1].user_query, k=3)
        return state

    def _make_planner_post(
        self, session: Session, state: PlannerState, to: str, message: str
    ) -> Post:
        attachments = []
        if state.initial is not None:
            attachments.append(Attachment("init_plan", state.initial.render()))
        if state.plan is not None:
            attachments.append(Attachment("plan", state.plan.render()))
        if state.current_step_text:
            attachments.append(Attachment("current_plan_step", state.current_step_text))
        return Post(
            id=session.next_post_id(),
            send_from=PLANNER,
            send_to=to,
            message=message,
            attachments=attachments,
        )

    # -- the Code Interpreter role ---------------------------------------------------

    def _code_interpreter_reply(self, post: Post) -> Post:
        # Post ids are "{session_id}-pNNNN", so a reply role can recover its
        # session from the post alone (the reply interface is Post -> Post).
        session_id = post.id.rsplit("-p", 1)[0]
        session = self.store.get(session_id)
        handle = self._worker_handle(session)
        registry = self.registry.subset(session.plugin_set)
        tips = (
            self.experience.retrieve(post.message, k=3) if self.experience is not None else []
        )
        deps = InterpreterDeps(
            registry=registry,
            policy=self._policy(session),
            manager=self.manager,
            gateway=self.gateway,
            top_k=self.config.codegen.top_k,
            max_regenerations=self.config.codegen.max_regenerations,
            prompt_token_budget=self.config.codegen.prompt_token_budget,
            examples=self.codegen_examples,
            tips=tips,
        )
        outcome = interpret(post.message, handle, deps)
        return self._outcome_to_post(post, outcome)

    def _worker_handle(self, session: Session) -> WorkerHandle:
        handle = self.manager.handle_for(session.id)
        if handle is None or handle.state.value == "dead":
            packages = [
                self.registry.get(name)
                for name in session.plugin_set
                if name in self.registry
            ]
            handle = self.manager.start(
                session.id,
                packages,
                workdir=self.store.session_dir(session.id),
            )
        return handle

    def _policy(self, session: Session) -> VerificationPolicy:
        cfg = self.config.verifier
        if cfg.policy_file:
            return VerificationPolicy.from_yaml(cfg.policy_file)
        allowed = frozenset(session.plugin_set) if cfg.plugin_only else frozenset()
        return VerificationPolicy(
            forbidden_modules=frozenset(cfg.forbidden_modules),
            forbidden_functions=frozenset(cfg.forbidden_functions),
            plugin_only=cfg.plugin_only,
            allowed_plugins=allowed,
        )

    def _outcome_to_post(self, dispatch: Post, outcome: InterpreterOutcome) -> Post:
        attachments: list[Attachment] = []
        if outcome.thought:
            attachments.append(Attachment("thought", outcome.thought))
        if outcome.final_snippet:
            attachments.append(Attachment("python", outcome.final_snippet))
        attachments.append(
            Attachment("verification", outcome.verification or "CORRECT")
        )
        attachments.append(Attachment("code_error", outcome.code_error))
        attachments.append(
            Attachment(
                "execution_status",
                "SUCCESS" if outcome.status == OutcomeStatus.SUCCESS else "FAILURE",
            )
        )
        if outcome.execution is not None:
            rendered = (
                outcome.execution.output
                or outcome.execution.log_text("stdout").rstrip("\n")
                or "(no output)"
            )
            attachments.append(Attachment("execution_result", rendered))
            attachments.append(
                Attachment(
                    "artifact_paths",
                    json.dumps([a.url for a in outcome.execution.artifacts]),
                )
            )
        return Post(
            id="pending",
            send_from=CODE_INTERPRETER,
            send_to=PLANNER,
            message=outcome.report_to_planner,
            attachments=attachments,
        )

    # -- events -------------------------------------------------------------------

    def _emit_post(self, session: Session, round_: Round, post: Post) -> None:
        self.event_log(session.id).append(
            ServiceEvent(
                kind="post_created",
                session_id=session.id,
                round_id=round_.id,
                payload={"post": post_to_dict(post)},
            )
        )

    def _emit_artifacts(self, session: Session, round_: Round, post: Post) -> None:
        paths = post.find("artifact_paths")
        if paths is None:
            return
        for url in json.loads(paths.content):
            self.event_log(session.id).append(
                ServiceEvent(
                    kind="artifact_available",
                    session_id=session.id,
                    round_id=round_.id,
                    payload={"artifact": {"url": url}},
                )
            )

    # -- artifact serving ------------------------------------------------------------

    def artifact_path(self, session_id: str, name: str) -> Path:
        root = self.store.artifact_dir(session_id).resolve()
        candidate = (root / name).resolve()
        if not candidate.is_relative_to(root) or not candidate.is_file():
            raise FileNotFoundError(name)
        return candidate


def build_service(config: AppConfig) -> AgentService:
    return AgentService(config)


__all__ = [
    "AgentService",
    "RoleContract",
    "RoundFailedError",
    "ServiceEvent",
    "UnknownRole",
    "build_service",
    "post_to_dict",
]
