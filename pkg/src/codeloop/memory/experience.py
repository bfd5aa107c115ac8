"""Long-term experience memory: distilled tips, keyword retrieval.

Tips are distilled from finished conversations by an LLM pass and stored
one YAML file per tip. Retrieval is deterministic keyword overlap between
the query and each tip's keyword set; an embedding-based retriever can be
swapped in behind the same interface.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from ..textutil import tokenize
from .types import RoundState, Session

TIP_PREFIX = "Tip:"


@dataclass
class ExperienceTip:
    id: str
    tip_text: str
    keywords: list[str]
    source_session: str


class NoFinishedRounds(Exception):
    pass


def keywords_for(tip_text: str) -> list[str]:
    """Distinct lowercase tokens of the tip, stop words removed, in order."""
    seen: list[str] = []
    for token in tokenize(tip_text):
        if token not in seen:
            seen.append(token)
    return seen


class ExperiencePool:
    """Disk-backed tip pool: one ``<id>.yaml`` per tip under the pool dir."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._tips: list[ExperienceTip] = []
        self._load()

    def _load(self) -> None:
        for path in sorted(self.directory.glob("*.yaml")):
            raw = yaml.safe_load(path.read_text()) or {}
            self._tips.append(
                ExperienceTip(
                    id=str(raw["id"]),
                    tip_text=str(raw["tip_text"]),
                    keywords=[str(k) for k in raw.get("keywords", [])],
                    source_session=str(raw.get("source_session", "")),
                )
            )
        self._tips.sort(key=lambda t: t.id)

    def __len__(self) -> int:
        return len(self._tips)

    def tips(self) -> list[ExperienceTip]:
        return list(self._tips)

    def _next_id(self) -> str:
        return f"tip-{len(self._tips) + 1:05d}"

    def add(self, tip_text: str, source_session: str) -> ExperienceTip:
        tip = ExperienceTip(
            id=self._next_id(),
            tip_text=tip_text,
            keywords=keywords_for(tip_text),
            source_session=source_session,
        )
        path = self.directory / f"{tip.id}.yaml"
        path.write_text(
            yaml.safe_dump(
                {
                    "id": tip.id,
                    "tip_text": tip.tip_text,
                    "keywords": tip.keywords,
                    "source_session": tip.source_session,
                },
                sort_keys=False,
                allow_unicode=True,
            )
        )
        self._tips.append(tip)
        return tip

    def retrieve(self, query: str, k: int) -> list[ExperienceTip]:
        """Top-k tips by keyword overlap; zero-overlap tips never match.

        Ties keep pool order (older tip first), so results are stable.
        """
        if k <= 0:
            return []
        query_tokens = set(tokenize(query))
        scored = [
            (len(query_tokens & set(tip.keywords)), tip) for tip in self._tips
        ]
        scored = [(s, t) for s, t in scored if s > 0]
        scored.sort(key=lambda pair: -pair[0])  # sort is stable: id order kept
        return [tip for _, tip in scored[:k]]


def _render_history(session: Session) -> str:
    lines = []
    for rnd in session.rounds:
        if rnd.state not in (RoundState.FINISHED, RoundState.FAILED):
            continue
        lines.append(f"## round {rnd.id} ({rnd.state.value})")
        for post in rnd.posts:
            lines.append(f"[{post.send_from} -> {post.send_to}] {post.message}")
    return "\n".join(lines)


def distill_experience(session: Session, gateway, pool: ExperiencePool) -> list[ExperienceTip]:
    """Distill tips from a session's finished rounds into the pool.

    The distiller LLM replies with zero or more ``Tip: ...`` lines; anything
    else in the reply is ignored.
    """
    if not any(r.state == RoundState.FINISHED for r in session.rounds):
        raise NoFinishedRounds(f"session {session.id} has no finished round")
    reply = gateway.complete(
        "ExperienceDistiller",
        [
            {
                "role": "system",
                "content": (
                    "You review a finished conversation between a user and a "
                    "coding assistant and distill reusable lessons. Reply with "
                    "one line per lesson, each starting with 'Tip:'. Reply with "
                    "nothing if there is no lesson worth keeping."
                ),
            },
            {"role": "user", "content": _render_history(session)},
        ],
    )
    tips = []
    for line in reply.splitlines():
        line = line.strip()
        if line.startswith(TIP_PREFIX):
            text = line[len(TIP_PREFIX) :].strip()
            if text:
                tips.append(pool.add(text, source_session=session.id))
    return tips
