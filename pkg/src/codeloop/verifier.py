"""Static policy checks over generated snippets, before anything runs.

The snippet is parsed into a syntax tree and checked line by line against a
policy: forbidden module imports, forbidden call targets (with alias
resolution, so ``import os as o; o.remove(x)`` is still caught), and an
optional plugin-only mode that denies every import and any call that is not
a registered plugin.

The checker walks the whole tree, so imports and calls nested inside
function bodies, loops, or conditionals are checked too; constructs it does
not model are simply traversed. Verification never executes the snippet.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

# Dynamic-evaluation primitives that defeat static checking.
DEFAULT_FORBIDDEN_FUNCTIONS = frozenset({"eval", "exec", "__import__", "getattr"})

RULE_PARSE = "parse-error"
RULE_FORBIDDEN_IMPORT = "forbidden-import"
RULE_FORBIDDEN_CALL = "forbidden-call"
RULE_PLUGIN_ONLY_IMPORT = "plugin-only-import"
RULE_PLUGIN_ONLY_CALL = "plugin-only-call"


class ParseError(Exception):
    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line
        self.detail = detail


class Verdict(str, Enum):
    CORRECT = "CORRECT"
    INCORRECT = "INCORRECT"


@dataclass(frozen=True)
class Violation:
    line: int
    rule: str
    message: str


@dataclass
class VerificationPolicy:
    forbidden_modules: frozenset[str] = frozenset()
    forbidden_functions: frozenset[str] = DEFAULT_FORBIDDEN_FUNCTIONS
    plugin_only: bool = False
    allowed_plugins: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        self.forbidden_modules = frozenset(self.forbidden_modules)
        self.forbidden_functions = frozenset(self.forbidden_functions)
        self.allowed_plugins = frozenset(self.allowed_plugins)
        if self.plugin_only and not self.allowed_plugins:
            raise ValueError("plugin_only mode requires a non-empty allowed_plugins set")

    @classmethod
    def empty(cls) -> "VerificationPolicy":
        return cls(forbidden_functions=frozenset())

    @classmethod
    def from_yaml(cls, path: str | Path) -> "VerificationPolicy":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        return cls(
            forbidden_modules=frozenset(raw.get("forbidden_modules") or []),
            forbidden_functions=frozenset(
                raw.get("forbidden_functions")
                if raw.get("forbidden_functions") is not None
                else DEFAULT_FORBIDDEN_FUNCTIONS
            ),
            plugin_only=bool(raw.get("plugin_only", False)),
            allowed_plugins=frozenset(raw.get("allowed_plugins") or []),
        )


@dataclass
class VerificationReport:
    verdict: Verdict
    violations: list[Violation] = field(default_factory=list)

    def render(self) -> str:
        if self.verdict == Verdict.CORRECT:
            return Verdict.CORRECT.value
        lines = [Verdict.INCORRECT.value]
        lines += [f"line {v.line}: [{v.rule}] {v.message}" for v in self.violations]
        return "\n".join(lines)


def parse_source(snippet: str) -> ast.Module:
    """Parse a snippet; every node carries its source line (ast semantics)."""
    try:
        return ast.parse(snippet)
    except SyntaxError as exc:
        raise ParseError(exc.lineno or 1, exc.msg or "syntax error") from exc


def _dotted_name(node: ast.AST) -> str | None:
    """``a.b.c`` for a Name/Attribute chain, else None."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return ".".join(reversed(parts))
    return None


def _collect_aliases(tree: ast.Module) -> dict[str, str]:
    """Module-level name -> canonical dotted target.

    Covers ``import m as a``, ``from m import f [as g]``, and simple
    module-level assignments of dotted names (``r = os.remove``).
    """
    aliases: dict[str, str] = {}

    def resolve(dotted: str) -> str:
        head, _, rest = dotted.partition(".")
        if head in aliases:
            head = aliases[head]
        return f"{head}.{rest}" if rest else head

    for node in tree.body:
        if isinstance(node, ast.Import):
            for alias in node.names:
                aliases[alias.asname or alias.name.split(".")[0]] = (
                    alias.name if alias.asname else alias.name.split(".")[0]
                )
        elif isinstance(node, ast.ImportFrom) and node.module and node.level == 0:
            for alias in node.names:
                if alias.name != "*":
                    aliases[alias.asname or alias.name] = f"{node.module}.{alias.name}"
        elif isinstance(node, ast.Assign) and len(node.targets) == 1:
            target = node.targets[0]
            value = _dotted_name(node.value)
            if isinstance(target, ast.Name) and value:
                aliases[target.id] = resolve(value)
    return aliases


def resolve_call_name(node: ast.Call, aliases: dict[str, str]) -> str | None:
    dotted = _dotted_name(node.func)
    if dotted is None:
        return None
    head, _, rest = dotted.partition(".")
    if head in aliases:
        head = aliases[head]
    return f"{head}.{rest}" if rest else head


def verify(
    tree: ast.Module, policy: VerificationPolicy, snippet: str = ""
) -> VerificationReport:
    """Apply the policy to a parsed snippet. Pure; nothing is executed."""
    del snippet  # reports address lines via the tree's own line numbers
    violations: list[Violation] = []
    aliases = _collect_aliases(tree)

    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            for alias in node.names:
                root = alias.name.split(".")[0]
                if policy.plugin_only:
                    violations.append(
                        Violation(
                            node.lineno,
                            RULE_PLUGIN_ONLY_IMPORT,
                            f"import of {alias.name!r}: imports are denied in plugin-only mode",
                        )
                    )
                elif root in policy.forbidden_modules:
                    violations.append(
                        Violation(
                            node.lineno,
                            RULE_FORBIDDEN_IMPORT,
                            f"import of forbidden module {root!r}",
                        )
                    )
        elif isinstance(node, ast.ImportFrom):
            root = (node.module or "").split(".")[0]
            if policy.plugin_only:
                violations.append(
                    Violation(
                        node.lineno,
                        RULE_PLUGIN_ONLY_IMPORT,
                        f"import from {node.module or '.'!r}: imports are denied "
                        "in plugin-only mode",
                    )
                )
            elif root and root in policy.forbidden_modules:
                violations.append(
                    Violation(
                        node.lineno,
                        RULE_FORBIDDEN_IMPORT,
                        f"import of forbidden module {root!r}",
                    )
                )
            else:
                # from os import remove == a call alias for os.remove later;
                # importing a forbidden function directly is flagged here.
                for alias in node.names:
                    if node.module and f"{node.module}.{alias.name}" in policy.forbidden_functions:
                        violations.append(
                            Violation(
                                node.lineno,
                                RULE_FORBIDDEN_CALL,
                                f"import of forbidden function {node.module}.{alias.name}",
                            )
                        )
        elif isinstance(node, ast.Call):
            resolved = resolve_call_name(node, aliases)
            if resolved is None:
                if policy.plugin_only:
                    violations.append(
                        Violation(
                            node.lineno,
                            RULE_PLUGIN_ONLY_CALL,
                            "only direct plugin calls are allowed in plugin-only mode",
                        )
                    )
                continue
            if policy.plugin_only:
                if resolved not in policy.allowed_plugins:
                    violations.append(
                        Violation(
                            node.lineno,
                            RULE_PLUGIN_ONLY_CALL,
                            f"call to {resolved!r}: not an allowed plugin",
                        )
                    )
            elif resolved in policy.forbidden_functions:
                violations.append(
                    Violation(
                        node.lineno, RULE_FORBIDDEN_CALL, f"call to forbidden function {resolved!r}"
                    )
                )

    violations.sort(key=lambda v: (v.line, v.rule, v.message))
    verdict = Verdict.CORRECT if not violations else Verdict.INCORRECT
    return VerificationReport(verdict=verdict, violations=violations)


def verify_snippet(snippet: str, policy: VerificationPolicy) -> VerificationReport:
    """Parse-and-verify; parse errors become a single INCORRECT violation."""
    try:
        tree = parse_source(snippet)
    except ParseError as exc:
        return VerificationReport(
            verdict=Verdict.INCORRECT,
            violations=[Violation(exc.line, RULE_PARSE, exc.detail)],
        )
    return verify(tree, policy, snippet)
