"""Few-shot examples: load from and save to the on-disk YAML layout.

An example is a recorded conversation fragment. Planning examples show how
a request was decomposed (init_plan / plan / current_plan_step attachments);
codegen examples show thought + code for a dispatched task. The YAML field
names (`user_query`, `post_list`, `message`, `send_from`, `send_to`,
`attachment_list`, attachment `type`/`content`) are a wire format and must
not drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import yaml

from .types import (
    CODE_INTERPRETER,
    PLANNER,
    Attachment,
    Post,
    Round,
    RoundState,
    UnfinishedRound,
    validate_post,
)


class ExampleKind(str, Enum):
    PLANNING = "planning"
    CODEGEN = "codegen"


class MalformedExample(Exception):
    def __init__(self, file: str, reason: str):
        super().__init__(f"{file}: {reason}")
        self.file = file
        self.reason = reason


@dataclass
class Example:
    kind: ExampleKind
    user_query: str
    post_list: list[Post]

    def same_content(self, other: "Example") -> bool:
        return (
            self.kind == other.kind
            and self.user_query == other.user_query
            and len(self.post_list) == len(other.post_list)
            and all(a.same_content(b) for a, b in zip(self.post_list, other.post_list))
        )


_PLANNING_REQUIRED = ("init_plan", "plan", "current_plan_step")
_CODEGEN_REQUIRED = ("thought", "python")


def _check_shape(example: Example, source: str) -> None:
    if example.kind == ExampleKind.PLANNING:
        required = _PLANNING_REQUIRED
    else:
        required = _CODEGEN_REQUIRED
    for post in example.post_list:
        kinds = {a.kind for a in post.attachments}
        if all(k in kinds for k in required):
            return
    raise MalformedExample(
        source,
        f"no post carries all of {', '.join(required)} (required for a "
        f"{example.kind.value} example)",
    )


def parse_example(text: str, kind: ExampleKind, source: str = "<string>") -> Example:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise MalformedExample(source, f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedExample(source, "top level must be a mapping")
    if "user_query" not in raw:
        raise MalformedExample(source, "missing field: user_query")
    if "post_list" not in raw or not isinstance(raw["post_list"], list):
        raise MalformedExample(source, "missing field: post_list")

    posts: list[Post] = []
    for i, entry in enumerate(raw["post_list"]):
        if not isinstance(entry, dict):
            raise MalformedExample(source, f"post_list[{i}] must be a mapping")
        for required in ("message", "send_from", "send_to"):
            if required not in entry:
                raise MalformedExample(source, f"post_list[{i}] missing field: {required}")
        attachments: list[Attachment] = []
        for j, att in enumerate(entry.get("attachment_list") or []):
            if not isinstance(att, dict) or "type" not in att or "content" not in att:
                raise MalformedExample(
                    source, f"post_list[{i}].attachment_list[{j}] needs type and content"
                )
            attachments.append(Attachment(kind=str(att["type"]), content=str(att["content"])))
        post = Post(
            id=f"example-p{i:04d}",
            send_from=str(entry["send_from"]),
            send_to=str(entry["send_to"]),
            message=str(entry["message"]),
            attachments=attachments,
        )
        try:
            validate_post(post)
        except Exception as exc:
            raise MalformedExample(source, f"post_list[{i}]: {exc}") from exc
        posts.append(post)

    example = Example(kind=kind, user_query=str(raw["user_query"]), post_list=posts)
    _check_shape(example, source)
    return example


def render_example(example: Example) -> str:
    """Inverse of :func:`parse_example`; round-trips field-for-field."""
    doc = {
        "user_query": example.user_query,
        "post_list": [
            {
                "message": p.message,
                "send_from": p.send_from,
                "send_to": p.send_to,
                "attachment_list": [
                    {"type": a.kind, "content": a.content} for a in p.attachments
                ],
            }
            for p in example.post_list
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, default_flow_style=False)


def load_examples(directory: str | Path, kind: ExampleKind) -> list[Example]:
    """Parse every ``*.yaml``/``*.yml`` file in ``directory`` as an example."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"example directory not found: {directory}")
    examples = []
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".yaml", ".yml"):
            continue
        examples.append(parse_example(path.read_text(), kind, source=str(path)))
    return examples


def save_round_as_example(round_: Round, kind: ExampleKind) -> str:
    """Project a finished round onto the example shape and render it.

    Planning examples keep every post but only the plan-tracking attachments
    on Planner posts; codegen examples keep the first dispatch/reply pair
    between Planner and Code Interpreter, re-rooted at the dispatched task.
    """
    if round_.state != RoundState.FINISHED:
        raise UnfinishedRound(f"round {round_.id} is {round_.state.value}")

    if kind == ExampleKind.PLANNING:
        posts = []
        for p in round_.posts:
            kept = (
                [a for a in p.attachments if a.kind in _PLANNING_REQUIRED]
                if p.send_from == PLANNER
                else []
            )
            posts.append(
                Post(
                    id=p.id,
                    send_from=p.send_from,
                    send_to=p.send_to,
                    message=p.message,
                    attachments=kept,
                )
            )
        example = Example(kind=kind, user_query=round_.user_query, post_list=posts)
    else:
        pair: list[Post] = []
        for i, p in enumerate(round_.posts):
            if p.send_from == PLANNER and p.send_to == CODE_INTERPRETER:
                reply = next(
                    (
                        q
                        for q in round_.posts[i + 1 :]
                        if q.send_from == CODE_INTERPRETER and q.send_to == PLANNER
                    ),
                    None,
                )
                if reply is not None and reply.find("thought") and reply.find("python"):
                    dispatch = Post(
                        id=p.id,
                        send_from=PLANNER,
                        send_to=CODE_INTERPRETER,
                        message=p.message,
                        attachments=[],
                    )
                    pair = [dispatch, reply]
                    break
        if not pair:
            raise MalformedExample(
                round_.id, "round has no Code Interpreter post with thought and python"
            )
        example = Example(kind=kind, user_query=pair[0].message, post_list=pair)

    _check_shape(example, round_.id)
    text = render_example(example)
    # Emitted YAML must re-parse to the projection we just built.
    assert parse_example(text, kind, source=round_.id).same_content(example)
    return text
