"""The Code Interpreter: turns a dispatched sub-task into verified, executed code.

For each task it picks the most relevant plugins, builds the generation
prompt (plugin signatures, worked examples, experience tips, and every
previously failed attempt with its error), parses the LLM reply into
thought + snippet, statically verifies the snippet, and executes it in the
session worker. A verification violation or a nonzero return code feeds
the failure back into the prompt and regenerates, at most three times; the
fourth failure is reported to the Planner instead of retried.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .executor import ExecutionResult, ExecutorManager, WorkerHandle
from .gateway import CODEGEN_ROLE, Gateway, Message
from .memory.examples import Example, render_example
from .memory.experience import ExperienceTip
from .plugins import PluginRegistry, PluginSchema, plugin_tokens, render_schema_for_prompt
from .textutil import estimate_tokens, tokenize
from .verifier import VerificationPolicy, Verdict, verify_snippet

MAX_REGENERATIONS = 3


class PromptBudgetExceeded(Exception):
    pass


class NoCodeBlock(Exception):
    pass


class MultipleCodeBlocks(Exception):
    pass


@dataclass
class GenerationResult:
    thought: str
    snippet: str
    raw: str


class FailureKind(str, Enum):
    VERIFICATION = "verification"
    EXECUTION = "execution"


@dataclass
class Attempt:
    snippet: str
    failure_kind: FailureKind
    failure_detail: str


@dataclass
class CorrectionContext:
    attempts: list[Attempt] = field(default_factory=list)

    def add(self, snippet: str, kind: FailureKind, detail: str) -> None:
        self.attempts.append(Attempt(snippet, kind, detail))


class OutcomeStatus(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass
class InterpreterOutcome:
    status: OutcomeStatus
    report_to_planner: str
    thought: str = ""
    final_snippet: str | None = None
    verification: str = ""
    code_error: str = "No error is detected."
    execution: ExecutionResult | None = None
    generations: int = 0


def select_plugins(task: str, registry: PluginRegistry, k: int) -> list[PluginSchema]:
    """Top-k plugins by token overlap with the task; the whole pool if it fits.

    Pure and deterministic: ties fall back to lexicographic name order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    schemas = registry.schemas()
    if len(schemas) <= k:
        return schemas
    task_tokens = set(tokenize(task))
    scored = sorted(
        schemas, key=lambda s: (-len(task_tokens & plugin_tokens(s)), s.name)
    )
    return scored[:k]


GENERATOR_PREAMBLE = """\
You are the code generator of a code-first assistant. Turn the given task \
into Python code for a stateful sandbox: variables defined by earlier \
snippets are still available. Reply with one line starting with "thought:" \
describing your approach, then exactly one fenced python code block. End \
the snippet with a bare expression when the task produces a value worth \
reporting. Files must only be written under the artifacts/ directory."""


def compose_prompt(
    task: str,
    plugins: list[PluginSchema],
    examples: list[Example],
    tips: list[ExperienceTip],
    ctx: CorrectionContext,
    token_budget: int = 16000,
) -> list[Message]:
    """Assemble the generation request; drops examples oldest-first on overflow."""
    examples = list(examples)
    while True:
        messages: list[Message] = [{"role": "system", "content": GENERATOR_PREAMBLE}]
        if plugins:
            rendered = "\n\n".join(render_schema_for_prompt(s) for s in plugins)
            messages.append(
                {
                    "role": "system",
                    "content": "These plugin functions are already defined in the "
                    "sandbox and can be called directly:\n\n" + rendered,
                }
            )
        for example in examples:
            messages.append(
                {
                    "role": "system",
                    "content": "A worked example:\n" + render_example(example),
                }
            )
        if tips:
            tip_lines = "\n".join(f"- {t.tip_text}" for t in tips)
            messages.append(
                {"role": "system", "content": f"Lessons from earlier sessions:\n{tip_lines}"}
            )
        for i, attempt in enumerate(ctx.attempts, start=1):
            messages.append(
                {
                    "role": "user",
                    "content": (
                        f"Attempt {i} failed ({attempt.failure_kind.value}).\n"
                        f"Code:\n```python\n{attempt.snippet}\n```\n"
                        f"Failure:\n{attempt.failure_detail}\n"
                        "Generate corrected code for the same task."
                    ),
                }
            )
        messages.append({"role": "user", "content": f"Task: {task}"})

        used = sum(estimate_tokens(m["content"]) for m in messages)
        if used <= token_budget:
            return messages
        if examples:
            examples.pop(0)
            continue
        raise PromptBudgetExceeded(
            f"prompt needs ~{used} tokens with no examples left to drop "
            f"(budget {token_budget})"
        )


_CODE_FENCE_RE = re.compile(r"```(?:[a-zA-Z]*)\n(.*?)```", re.DOTALL)
_THOUGHT_RE = re.compile(r"^thought:\s*(.*)$", re.IGNORECASE | re.MULTILINE)


def parse_generation(reply: str) -> GenerationResult:
    """Extract the thought line and the single fenced code block."""
    blocks = _CODE_FENCE_RE.findall(reply)
    if not blocks:
        raise NoCodeBlock("reply contains no fenced code block")
    if len(blocks) > 1:
        raise MultipleCodeBlocks(f"reply contains {len(blocks)} fenced code blocks")
    thought_match = _THOUGHT_RE.search(reply)
    thought = thought_match.group(1).strip() if thought_match else ""
    snippet = blocks[0].strip("\n")
    if not snippet.strip():
        raise NoCodeBlock("fenced code block is empty")
    return GenerationResult(thought=thought, snippet=snippet, raw=reply)


@dataclass
class InterpreterDeps:
    registry: PluginRegistry
    policy: VerificationPolicy
    manager: ExecutorManager
    gateway: Gateway
    top_k: int = 3
    max_regenerations: int = MAX_REGENERATIONS
    prompt_token_budget: int = 16000
    examples: list[Example] = field(default_factory=list)
    tips: list[ExperienceTip] = field(default_factory=list)


def interpret(task: str, handle: WorkerHandle, deps: InterpreterDeps) -> InterpreterOutcome:
    """Generate-verify-execute loop with bounded self-correction.

    At most ``1 + max_regenerations`` LLM calls. A reply that cannot be
    parsed into a single code block consumes a regeneration slot like any
    other failure. Success always means the snippet passed verification and
    executed with return code 0.
    """
    plugins = select_plugins(task, deps.registry, deps.top_k)
    ctx = CorrectionContext()
    generations = 0
    last_thought = ""
    cell = 0

    while generations <= deps.max_regenerations:
        messages = compose_prompt(
            task,
            plugins,
            deps.examples,
            deps.tips,
            ctx,
            token_budget=deps.prompt_token_budget,
        )
        reply = deps.gateway.complete(CODEGEN_ROLE, messages)
        generations += 1
        try:
            generation = parse_generation(reply)
        except (NoCodeBlock, MultipleCodeBlocks) as exc:
            ctx.add("", FailureKind.VERIFICATION, f"reply could not be parsed: {exc}")
            continue
        last_thought = generation.thought

        report = verify_snippet(generation.snippet, deps.policy)
        if report.verdict != Verdict.CORRECT:
            ctx.add(generation.snippet, FailureKind.VERIFICATION, report.render())
            continue

        cell += 1
        result = deps.manager.execute(handle, generation.snippet, cell_id=f"cell-{cell}")
        if result.return_code == 0:
            return InterpreterOutcome(
                status=OutcomeStatus.SUCCESS,
                report_to_planner=_success_report(result),
                thought=generation.thought,
                final_snippet=generation.snippet,
                verification=Verdict.CORRECT.value,
                execution=result,
                generations=generations,
            )
        ctx.add(generation.snippet, FailureKind.EXECUTION, failure_report(result))

    last = ctx.attempts[-1]
    report_lines = [
        "The task could not be completed: code generation failed "
        f"{len(ctx.attempts)} times and the retry budget is exhausted.",
        f"Last failure ({last.failure_kind.value}):",
        last.failure_detail.strip() or "(no detail)",
    ]
    return InterpreterOutcome(
        status=OutcomeStatus.FAILURE,
        report_to_planner="\n".join(report_lines),
        thought=last_thought,
        final_snippet=last.snippet or None,
        verification=(
            last.failure_detail if last.failure_kind == FailureKind.VERIFICATION else ""
        ),
        code_error=last.failure_detail,
        generations=generations,
    )


def _success_report(result: ExecutionResult) -> str:
    lines = ["The execution of the generated python code above has succeeded"]
    stdout = result.log_text("stdout")
    if stdout:
        lines.append("The stdout is:")
        lines.append(stdout.rstrip("\n"))
    if result.output:
        lines.append(
            f"The result of above Python code after execution is: {result.output}"
        )
    if result.artifacts:
        names = ", ".join(a.url for a in result.artifacts)
        lines.append(f"The following artifacts were produced: {names}")
    return "\n".join(lines)


def failure_report(result: ExecutionResult) -> str:
    lines = [
        "The execution of the generated python code above has failed",
        "During execution, the following messages were logged:",
        result.log_text("stderr").rstrip("\n"),
    ]
    return "\n".join(lines)
