"""Short-term conversation state and long-term example/experience memory."""

from .examples import (
    Example,
    ExampleKind,
    MalformedExample,
    load_examples,
    parse_example,
    render_example,
    save_round_as_example,
)
from .experience import (
    ExperiencePool,
    ExperienceTip,
    NoFinishedRounds,
    distill_experience,
    keywords_for,
)
from .store import SessionStore, UnknownSession, session_from_dict, session_to_dict
from .types import (
    ATTACHMENT_KINDS,
    CODE_INTERPRETER,
    PLANNER,
    USER,
    Attachment,
    ClosedRound,
    ConcurrentRound,
    EmptyAttachment,
    Post,
    RoleViolation,
    Round,
    RoundState,
    Session,
    UnfinishedRound,
    UnknownAttachmentKind,
    append_post,
    begin_round,
    finish_round,
    register_attachment_kind,
    validate_post,
)

__all__ = [
    "ATTACHMENT_KINDS",
    "Attachment",
    "CODE_INTERPRETER",
    "ClosedRound",
    "ConcurrentRound",
    "EmptyAttachment",
    "Example",
    "ExampleKind",
    "ExperiencePool",
    "ExperienceTip",
    "MalformedExample",
    "NoFinishedRounds",
    "PLANNER",
    "Post",
    "RoleViolation",
    "Round",
    "RoundState",
    "Session",
    "SessionStore",
    "USER",
    "UnfinishedRound",
    "UnknownAttachmentKind",
    "UnknownSession",
    "append_post",
    "begin_round",
    "distill_experience",
    "finish_round",
    "keywords_for",
    "load_examples",
    "parse_example",
    "register_attachment_kind",
    "render_example",
    "save_round_as_example",
    "session_from_dict",
    "session_to_dict",
    "validate_post",
]
