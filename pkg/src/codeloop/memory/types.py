"""Conversation protocol units: attachments, posts, rounds, sessions.

Roles exchange posts inside a round; a post carries typed attachments
(plans, generated code, verification and execution reports). Only the
Planner talks to the User; every other role is internal.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from enum import Enum

USER = "User"
PLANNER = "Planner"
CODE_INTERPRETER = "CodeInterpreter"

# Closed set of attachment kinds. "python" is kept as the token for code
# snippets for compatibility with the on-disk example format.
ATTACHMENT_KINDS = {
    "init_plan",
    "plan",
    "current_plan_step",
    "thought",
    "python",
    "verification",
    "code_error",
    "execution_status",
    "execution_result",
    "artifact_paths",
}


def register_attachment_kind(kind: str) -> None:
    """Extend the closed kind set (configuration hook)."""
    ATTACHMENT_KINDS.add(kind)


class MemoryError_(Exception):
    """Base for conversation-state errors."""


class UnknownAttachmentKind(MemoryError_):
    pass


class EmptyAttachment(MemoryError_):
    pass


class RoleViolation(MemoryError_):
    pass


class ConcurrentRound(MemoryError_):
    pass


class ClosedRound(MemoryError_):
    pass


class UnfinishedRound(MemoryError_):
    pass


class RoundState(str, Enum):
    CREATED = "created"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


@dataclass
class Attachment:
    kind: str
    content: str


@dataclass
class Post:
    id: str
    send_from: str
    send_to: str
    message: str
    attachments: list[Attachment] = field(default_factory=list)

    def find(self, kind: str) -> Attachment | None:
        for att in self.attachments:
            if att.kind == kind:
                return att
        return None

    def same_content(self, other: "Post") -> bool:
        """Structural equality ignoring ids (ids are storage-local)."""
        return (
            self.send_from == other.send_from
            and self.send_to == other.send_to
            and self.message == other.message
            and [(a.kind, a.content) for a in self.attachments]
            == [(a.kind, a.content) for a in other.attachments]
        )


def validate_attachment(att: Attachment) -> None:
    if att.kind not in ATTACHMENT_KINDS:
        raise UnknownAttachmentKind(f"unknown attachment kind: {att.kind!r}")
    if att.kind != "artifact_paths" and not str(att.content).strip():
        raise EmptyAttachment(f"attachment {att.kind!r} has empty content")


def validate_post(post: Post) -> None:
    if post.send_from == post.send_to:
        raise RoleViolation(f"post {post.id}: send_from equals send_to ({post.send_from})")
    if USER in (post.send_from, post.send_to):
        counterpart = post.send_to if post.send_from == USER else post.send_from
        if counterpart != PLANNER:
            raise RoleViolation(
                f"only the Planner may exchange posts with the User, got {counterpart}"
            )
    for att in post.attachments:
        validate_attachment(att)


@dataclass
class Round:
    id: str
    user_query: str
    posts: list[Post] = field(default_factory=list)
    state: RoundState = RoundState.CREATED


@dataclass
class Session:
    id: str
    rounds: list[Round] = field(default_factory=list)
    plugin_set: list[str] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_active: float = 0.0
    expiry: float = 3600.0
    _post_counter: itertools.count = field(default_factory=itertools.count, repr=False)
    _round_counter: itertools.count = field(default_factory=itertools.count, repr=False)

    def __post_init__(self) -> None:
        if self.last_active < self.created_at:
            self.last_active = self.created_at

    def next_post_id(self) -> str:
        return f"{self.id}-p{next(self._post_counter):04d}"

    def next_round_id(self) -> str:
        return f"{self.id}-r{next(self._round_counter):03d}"

    def running_round(self) -> Round | None:
        for rnd in self.rounds:
            if rnd.state == RoundState.RUNNING:
                return rnd
        return None


def begin_round(session: Session, user_query: str, now: float | None = None) -> Round:
    """Open a round: the first post is always User -> Planner."""
    if session.running_round() is not None:
        raise ConcurrentRound(f"session {session.id} already has a running round")
    rnd = Round(id=session.next_round_id(), user_query=user_query, state=RoundState.RUNNING)
    first = Post(
        id=session.next_post_id(),
        send_from=USER,
        send_to=PLANNER,
        message=user_query,
    )
    validate_post(first)
    rnd.posts.append(first)
    session.rounds.append(rnd)
    session.last_active = time.time() if now is None else now
    return rnd


def append_post(round_: Round, post: Post) -> None:
    if round_.state != RoundState.RUNNING:
        raise ClosedRound(f"round {round_.id} is {round_.state.value}, not running")
    validate_post(post)
    round_.posts.append(post)


def finish_round(round_: Round, failed: bool = False) -> None:
    if round_.state != RoundState.RUNNING:
        raise ClosedRound(f"round {round_.id} is {round_.state.value}, not running")
    if not failed and (not round_.posts or round_.posts[-1].send_to != USER):
        raise RoleViolation("a finished round must end with a post to the User")
    round_.state = RoundState.FAILED if failed else RoundState.FINISHED
