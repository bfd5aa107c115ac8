"""Session store: in-memory map with write-through YAML persistence.

Each session lives at ``{data_dir}/{session_id}/session.yaml`` so state can
be inspected and recovered after a crash. Mutations go through the store so
every change is persisted; sessions are independently locked upstream (the
service serializes per-session work), the store itself only guards its map.
"""

from __future__ import annotations

import threading
import time
import uuid
from pathlib import Path
from typing import Callable

import yaml

from .types import Attachment, Post, Round, RoundState, Session


class UnknownSession(Exception):
    pass


def session_to_dict(session: Session) -> dict:
    return {
        "id": session.id,
        "plugin_set": list(session.plugin_set),
        "created_at": session.created_at,
        "last_active": session.last_active,
        "expiry": session.expiry,
        "rounds": [
            {
                "id": rnd.id,
                "user_query": rnd.user_query,
                "state": rnd.state.value,
                "posts": [
                    {
                        "id": p.id,
                        "message": p.message,
                        "send_from": p.send_from,
                        "send_to": p.send_to,
                        "attachment_list": [
                            {"type": a.kind, "content": a.content} for a in p.attachments
                        ],
                    }
                    for p in rnd.posts
                ],
            }
            for rnd in session.rounds
        ],
    }


def session_from_dict(raw: dict) -> Session:
    session = Session(
        id=str(raw["id"]),
        plugin_set=[str(p) for p in raw.get("plugin_set", [])],
        created_at=float(raw.get("created_at", 0.0)),
        last_active=float(raw.get("last_active", 0.0)),
        expiry=float(raw.get("expiry", 3600.0)),
    )
    n_posts = 0
    for rnd_raw in raw.get("rounds", []):
        rnd = Round(
            id=str(rnd_raw["id"]),
            user_query=str(rnd_raw["user_query"]),
            state=RoundState(rnd_raw["state"]),
        )
        for p in rnd_raw.get("posts", []):
            rnd.posts.append(
                Post(
                    id=str(p["id"]),
                    send_from=str(p["send_from"]),
                    send_to=str(p["send_to"]),
                    message=str(p["message"]),
                    attachments=[
                        Attachment(kind=str(a["type"]), content=str(a["content"]))
                        for a in p.get("attachment_list", [])
                    ],
                )
            )
            n_posts += 1
        session.rounds.append(rnd)
    # Advance the id counters past what was persisted.
    for _ in range(n_posts):
        session.next_post_id()
    for _ in range(len(session.rounds)):
        session.next_round_id()
    return session


class SessionStore:
    def __init__(
        self,
        data_dir: str | Path,
        default_expiry: float = 3600.0,
        on_evict: Callable[[str], None] | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.default_expiry = default_expiry
        self.on_evict = on_evict
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._hydrate()

    def _hydrate(self) -> None:
        for path in sorted(self.data_dir.glob("*/session.yaml")):
            raw = yaml.safe_load(path.read_text())
            if raw:
                session = session_from_dict(raw)
                self._sessions[session.id] = session

    def session_dir(self, session_id: str) -> Path:
        return self.data_dir / session_id

    def artifact_dir(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "artifacts"

    def create(self, plugin_set: list[str] | None = None, session_id: str | None = None) -> Session:
        now = self.clock()
        session = Session(
            id=session_id or uuid.uuid4().hex[:12],
            plugin_set=plugin_set or [],
            created_at=now,
            last_active=now,
            expiry=self.default_expiry,
        )
        with self._lock:
            if session.id in self._sessions:
                raise ValueError(f"session id already exists: {session.id}")
            self._sessions[session.id] = session
        self.artifact_dir(session.id).mkdir(parents=True, exist_ok=True)
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSession(session_id) from None

    def list_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._sessions)

    def touch(self, session: Session) -> None:
        session.last_active = self.clock()
        self.persist(session)

    def persist(self, session: Session) -> None:
        path = self.session_dir(session.id) / "session.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            yaml.safe_dump(session_to_dict(session), sort_keys=False, allow_unicode=True)
        )

    def remove(self, session_id: str) -> None:
        with self._lock:
            self._sessions.pop(session_id, None)
        if self.on_evict:
            self.on_evict(session_id)

    def sweep_expired(self, now: float | None = None) -> list[str]:
        """Evict sessions idle at least their expiry; returns removed ids."""
        now = self.clock() if now is None else now
        with self._lock:
            expired = [
                sid
                for sid, s in self._sessions.items()
                if now - s.last_active >= s.expiry
            ]
            for sid in expired:
                del self._sessions[sid]
        for sid in expired:
            if self.on_evict:
                self.on_evict(sid)
        return expired
