"""Execution worker management: one stateful worker process per session.

The manager launches workers (plain subprocess in local mode, docker in
container mode), ships plugin implementations in the init message, submits
snippets, and normalizes replies into :class:`ExecutionResult`. Calls on a
single handle are serialized; distinct sessions run concurrently.
"""

from __future__ import annotations

import json
import os
import queue
import shutil
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .plugins import PluginPackage


class ExecutionMode(str, Enum):
    LOCAL = "local"
    CONTAINER = "container"


class SpawnFailure(Exception):
    pass


class InitTimeout(Exception):
    pass


class WorkerDead(Exception):
    pass


class Busy(Exception):
    pass


class WorkerState(str, Enum):
    STARTING = "starting"
    READY = "ready"
    BUSY = "busy"
    DEAD = "dead"


@dataclass
class Artifact:
    name: str
    path: str
    media_type: str
    url: str


@dataclass
class ExecutionResult:
    return_code: int
    logs: list[tuple[str, str]] = field(default_factory=list)  # (stream, text)
    output: str = ""
    artifacts: list[Artifact] = field(default_factory=list)

    def log_text(self, stream: str) -> str:
        return "".join(text for s, text in self.logs if s == stream)


class WorkerHandle:
    def __init__(self, session_id: str, mode: ExecutionMode, process: subprocess.Popen):
        self.session_id = session_id
        self.mode = mode
        self.process = process
        self.state = WorkerState.STARTING
        self.lock = threading.Lock()
        self._replies: queue.Queue[dict | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self.process.stdout is not None
        for line in self.process.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                self._replies.put(json.loads(line))
            except json.JSONDecodeError:
                continue  # not protocol traffic; ignore
        self._replies.put(None)  # EOF sentinel: the worker is gone

    def send(self, message: dict) -> None:
        if self.process.stdin is None or self.process.poll() is not None:
            raise WorkerDead(f"worker for session {self.session_id} is not running")
        try:
            self.process.stdin.write(json.dumps(message) + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.state = WorkerState.DEAD
            raise WorkerDead(str(exc)) from exc

    def recv(self, timeout: float) -> dict | None:
        try:
            return self._replies.get(timeout=timeout)
        except queue.Empty:
            return {"type": "timeout"}


class ExecutorManager:
    def __init__(
        self,
        data_dir: str | Path,
        mode: ExecutionMode = ExecutionMode.LOCAL,
        execution_timeout: float = 120.0,
        init_timeout: float = 30.0,
        container_image: str = "python:3.10-slim",
        container_network: bool = False,
    ):
        self.data_dir = Path(data_dir)
        self.mode = mode
        self.execution_timeout = execution_timeout
        self.init_timeout = init_timeout
        self.container_image = container_image
        self.container_network = container_network
        self._handles: dict[str, WorkerHandle] = {}
        self._lock = threading.Lock()
        self.executions = 0  # total snippets submitted, across sessions

    # -- lifecycle ------------------------------------------------------------

    def start(
        self,
        session_id: str,
        plugins: list[PluginPackage],
        workdir: str | Path | None = None,
        mode: ExecutionMode | None = None,
    ) -> WorkerHandle:
        mode = mode or self.mode
        with self._lock:
            existing = self._handles.get(session_id)
            if existing is not None and existing.state != WorkerState.DEAD:
                raise SpawnFailure(f"session {session_id} already has a live worker")

        workdir = Path(workdir) if workdir else self.data_dir / session_id
        workdir.mkdir(parents=True, exist_ok=True)
        (workdir / "artifacts").mkdir(exist_ok=True)
        log_path = workdir / "worker.log"

        if mode == ExecutionMode.LOCAL:
            cmd = [sys.executable, "-u", "-m", "codeloop.worker"]
            container_workdir = str(workdir)
        else:
            docker = shutil.which("docker") or shutil.which("podman")
            if docker is None:
                raise SpawnFailure(
                    "container mode requires docker or podman on PATH; install one "
                    "or switch execution.mode to 'local'"
                )
            container_workdir = "/workspace"
            cmd = [
                docker,
                "run",
                "--rm",
                "-i",
                "--network",
                "bridge" if self.container_network else "none",
                "-v",
                f"{workdir}:/workspace",
                self.container_image,
                "python",
                "-u",
                "-m",
                "codeloop.worker",
            ]

        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(
            p for p in [str(Path(__file__).parent.parent), env.get("PYTHONPATH", "")] if p
        )
        try:
            process = subprocess.Popen(
                cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=open(log_path, "a"),
                text=True,
                cwd=str(workdir),
                env=env,
            )
        except OSError as exc:
            raise SpawnFailure(f"failed to launch worker: {exc}") from exc

        handle = WorkerHandle(session_id, mode, process)
        handle.send(
            {
                "type": "init",
                "session_id": session_id,
                "workdir": container_workdir,
                "plugins": [
                    {"name": p.name, "impl_source": p.impl_source} for p in plugins
                ],
            }
        )
        reply = handle.recv(timeout=self.init_timeout)
        if reply is None:
            handle.state = WorkerState.DEAD
            raise SpawnFailure(f"worker exited during init (see {log_path})")
        if reply.get("type") == "timeout":
            self._kill(handle)
            raise InitTimeout(f"worker did not become ready within {self.init_timeout}s")
        if reply.get("type") != "ready":
            self._kill(handle)
            raise SpawnFailure(f"worker init failed: {reply.get('detail', reply)}")
        handle.state = WorkerState.READY
        with self._lock:
            self._handles[session_id] = handle
        return handle

    def handle_for(self, session_id: str) -> WorkerHandle | None:
        with self._lock:
            return self._handles.get(session_id)

    # -- execution --------------------------------------------------------------

    def execute(self, handle: WorkerHandle, snippet: str, cell_id: str) -> ExecutionResult:
        with handle.lock:
            if handle.state == WorkerState.DEAD:
                raise WorkerDead(f"worker for session {handle.session_id} is dead")
            if handle.state != WorkerState.READY:
                raise Busy(f"worker for session {handle.session_id} is {handle.state.value}")
            handle.state = WorkerState.BUSY
            self.executions += 1
            try:
                handle.send({"type": "execute", "id": cell_id, "code": snippet})
                while True:
                    reply = handle.recv(timeout=self.execution_timeout)
                    if reply is None:
                        handle.state = WorkerState.DEAD
                        return self._crash_result("worker process died during execution")
                    if reply.get("type") == "timeout":
                        self._kill(handle)
                        return self._crash_result(
                            f"execution exceeded {self.execution_timeout}s and the "
                            "worker was terminated"
                        )
                    if reply.get("type") == "result" and reply.get("id") == cell_id:
                        handle.state = WorkerState.READY
                        return self._to_result(handle.session_id, reply)
                    # Anything else (stale errors, mismatched ids) is dropped.
            except WorkerDead:
                handle.state = WorkerState.DEAD
                return self._crash_result("worker pipe closed during execution")

    def _to_result(self, session_id: str, reply: dict) -> ExecutionResult:
        artifacts = []
        for raw in reply.get("artifacts", []):
            rel = Path(str(raw.get("path", "")))
            # Confinement: a path that climbs out of the artifact directory
            # is discarded no matter what the worker claims, and the public
            # name is re-derived from the confined path.
            normalized = os.path.normpath(str(rel))
            if rel.is_absolute() or not normalized.startswith("artifacts" + os.sep):
                continue
            name = normalized[len("artifacts") + 1 :].replace(os.sep, "/")
            artifacts.append(
                Artifact(
                    name=name,
                    path=normalized,
                    media_type=str(raw.get("media_type", "application/octet-stream")),
                    url=f"/artifacts/{session_id}/{name}",
                )
            )
        return ExecutionResult(
            return_code=int(reply.get("return_code", 1)),
            logs=[(str(l.get("stream", "stdout")), str(l.get("text", ""))) for l in reply.get("logs", [])],
            output=str(reply.get("output", "")),
            artifacts=artifacts,
        )

    @staticmethod
    def _crash_result(detail: str) -> ExecutionResult:
        return ExecutionResult(return_code=1, logs=[("stderr", detail + "\n")], output="")

    # -- teardown --------------------------------------------------------------

    def _kill(self, handle: WorkerHandle) -> None:
        handle.state = WorkerState.DEAD
        if handle.process.poll() is None:
            handle.process.kill()
            try:
                handle.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def stop(self, handle_or_session: WorkerHandle | str) -> None:
        """Graceful shutdown with a 5 s grace period; idempotent."""
        if isinstance(handle_or_session, str):
            handle = self.handle_for(handle_or_session)
            if handle is None:
                return
        else:
            handle = handle_or_session
        if handle.state == WorkerState.DEAD:
            return
        try:
            handle.send({"type": "shutdown"})
            handle.process.wait(timeout=5)
        except (WorkerDead, subprocess.TimeoutExpired):
            if handle.process.poll() is None:
                handle.process.kill()
                try:
                    handle.process.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    pass
        handle.state = WorkerState.DEAD

    def stop_session(self, session_id: str) -> None:
        handle = self.handle_for(session_id)
        if handle is not None:
            self.stop(handle)
            with self._lock:
                self._handles.pop(session_id, None)

    def stop_all(self) -> None:
        for session_id in list(self._handles):
            self.stop_session(session_id)
