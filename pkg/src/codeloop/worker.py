"""Per-session execution worker process.

Runs as ``python -m codeloop.worker``: hosts one persistent Python
namespace, loads plugin implementations into it, executes snippets with
notebook-cell semantics, and reports results over a line protocol.

Wire protocol — UTF-8, one JSON object per line on stdin/stdout (JSON
string escaping keeps embedded newlines off the line framing):

  -> {"type": "init", "session_id": S, "workdir": W,
      "plugins": [{"name": N, "impl_source": SRC}, ...]}
  <- {"type": "ready"}
  -> {"type": "execute", "id": I, "code": C}
  <- {"type": "result", "id": I, "return_code": 0|1,
      "logs": [{"stream": "stdout"|"stderr"|"plugin", "text": T}, ...],
      "output": O, "artifacts": [{"name": N, "path": P, "media_type": M}]}
  -> {"type": "shutdown"}            (worker exits 0)

This module is intentionally self-contained (standard library only): the
manager process talks to it exclusively through the protocol above, so it
can be replaced by any speaker of the same protocol.
"""

from __future__ import annotations

import ast
import contextlib
import io
import json
import mimetypes
import os
import sys
import traceback
from pathlib import Path

OUTPUT_LIMIT = 4096
TRUNCATION_MARKER = " ...[truncated]"


def render_value(value: object) -> str:
    """Display form of a cell's final expression value, bounded in size."""
    if value is None:
        return ""
    try:
        text = repr(value)
    except Exception as exc:  # a hostile __repr__ must not kill the worker
        text = f"<unprintable {type(value).__name__}: {exc}>"
    if len(text) > OUTPUT_LIMIT:
        text = text[:OUTPUT_LIMIT] + TRUNCATION_MARKER
    return text


class _ArtifactWatcher:
    """Before/after snapshot diff of the artifact directory."""

    def __init__(self, artifact_dir: Path):
        self.artifact_dir = artifact_dir

    def _snapshot(self) -> dict[str, tuple[int, int]]:
        state: dict[str, tuple[int, int]] = {}
        root = self.artifact_dir.resolve()
        if not root.is_dir():
            return state
        for path in root.rglob("*"):
            if not path.is_file():
                continue
            resolved = path.resolve()
            # Symlinks pointing out of the artifact dir are not artifacts.
            if not resolved.is_relative_to(root):
                continue
            stat = path.stat()
            state[path.relative_to(root).as_posix()] = (stat.st_mtime_ns, stat.st_size)
        return state

    def begin(self) -> None:
        self._before = self._snapshot()

    def collect(self) -> list[dict[str, str]]:
        after = self._snapshot()
        artifacts = []
        for rel, stamp in sorted(after.items()):
            if self._before.get(rel) == stamp:
                continue
            media_type = mimetypes.guess_type(rel)[0] or "application/octet-stream"
            artifacts.append(
                {"name": rel, "path": f"artifacts/{rel}", "media_type": media_type}
            )
        return artifacts


class Worker:
    def __init__(self, proto_out):
        self.proto_out = proto_out
        self.namespace: dict[str, object] = {}
        self.artifact_watcher: _ArtifactWatcher | None = None
        self.plugin_log: list[str] = []

    def send(self, message: dict) -> None:
        self.proto_out.write(json.dumps(message) + "\n")
        self.proto_out.flush()

    # -- init ---------------------------------------------------------------

    def handle_init(self, msg: dict) -> None:
        workdir = Path(msg["workdir"])
        workdir.mkdir(parents=True, exist_ok=True)
        os.chdir(workdir)
        (workdir / "artifacts").mkdir(exist_ok=True)
        self.artifact_watcher = _ArtifactWatcher(workdir / "artifacts")

        self.namespace = {"__name__": "__main__", "__builtins__": __builtins__}
        self.namespace["log"] = self._plugin_log_fn
        for plugin in msg.get("plugins", []):
            name = plugin["name"]
            try:
                exec(compile(plugin["impl_source"], f"<plugin:{name}>", "exec"), self.namespace)
                if not callable(self.namespace.get(name)):
                    raise NameError(f"implementation does not define a callable {name!r}")
            except Exception as exc:
                self.send(
                    {"type": "error", "stage": "init", "plugin": name, "detail": str(exc)}
                )
                sys.exit(1)
        self.send({"type": "ready"})

    def _plugin_log_fn(self, message: object) -> None:
        self.plugin_log.append(str(message))

    # -- execute ------------------------------------------------------------

    def handle_execute(self, msg: dict) -> None:
        if self.artifact_watcher is None:
            self.send(
                {
                    "type": "result",
                    "id": msg.get("id"),
                    "return_code": 1,
                    "logs": [{"stream": "stderr", "text": "worker received execute before init\n"}],
                    "output": "",
                    "artifacts": [],
                }
            )
            return
        code = msg.get("code", "")
        stdout_buf, stderr_buf = io.StringIO(), io.StringIO()
        self.plugin_log = []
        return_code = 0
        output = ""
        self.artifact_watcher.begin()
        try:
            with contextlib.redirect_stdout(stdout_buf), contextlib.redirect_stderr(stderr_buf):
                value = self._run_cell(code)
            output = render_value(value)
        except BaseException:
            return_code = 1
            stderr_buf.write(traceback.format_exc())

        logs = []
        if stdout_buf.getvalue():
            logs.append({"stream": "stdout", "text": stdout_buf.getvalue()})
        if stderr_buf.getvalue():
            logs.append({"stream": "stderr", "text": stderr_buf.getvalue()})
        for entry in self.plugin_log:
            logs.append({"stream": "plugin", "text": entry})

        self.send(
            {
                "type": "result",
                "id": msg.get("id"),
                "return_code": return_code,
                "logs": logs,
                "output": output,
                "artifacts": self.artifact_watcher.collect(),
            }
        )

    def _run_cell(self, code: str) -> object:
        """Notebook semantics: run statements, return the final expression."""
        tree = ast.parse(code)
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            body = ast.Module(body=tree.body[:-1], type_ignores=[])
            tail = ast.Expression(body=tree.body[-1].value)
            exec(compile(body, "<cell>", "exec"), self.namespace)
            return eval(compile(tail, "<cell>", "eval"), self.namespace)
        exec(compile(tree, "<cell>", "exec"), self.namespace)
        return None

    # -- main loop ----------------------------------------------------------

    def run(self, lines) -> int:
        for raw in lines:
            raw = raw.strip()
            if not raw:
                continue
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError as exc:
                self.send({"type": "error", "stage": "protocol", "detail": str(exc)})
                continue
            kind = msg.get("type")
            if kind == "init":
                self.handle_init(msg)
            elif kind == "execute":
                self.handle_execute(msg)
            elif kind == "shutdown":
                return 0
            else:
                self.send(
                    {"type": "error", "stage": "protocol", "detail": f"unknown type {kind!r}"}
                )
        return 0


def main() -> int:
    # The protocol owns the real stdout. Anything that prints outside a
    # captured cell (e.g. a plugin import) is diverted to stderr so it can
    # never corrupt the line framing.
    proto_out = sys.stdout
    sys.stdout = sys.stderr
    return Worker(proto_out).run(sys.stdin)


if __name__ == "__main__":
    sys.exit(main())
