"""Helpers for authoring scripted-backend scenarios.

A scripted scenario is a YAML list of ``{role, matcher, reply}`` entries.
Planner replies have to be a fenced YAML block with a fixed key set, which
is tedious to hand-write inside another YAML file, so demos and tests
build their scripts with these helpers and dump them with
:func:`script_to_yaml`.
"""

from __future__ import annotations

import yaml

from .gateway import CODEGEN_ROLE, PLANNER_ROLE, ScriptedExchange


def planner_reply(
    init_plan: str,
    plan: str,
    current_plan_step: str,
    send_to: str,
    message: str,
) -> str:
    """Render the fenced planner reply block."""
    body = yaml.safe_dump(
        {
            "init_plan": init_plan,
            "plan": plan,
            "current_plan_step": current_plan_step,
            "send_to": send_to,
            "message": message,
        },
        sort_keys=False,
        allow_unicode=True,
        default_flow_style=False,
    )
    return f"```yaml\n{body}```"


def codegen_reply(thought: str, code: str) -> str:
    """Render a code-generator reply: thought line plus one fenced block."""
    return f"thought: {thought}\n```python\n{code}\n```"


def planner_exchange(matcher: str, **reply_parts) -> ScriptedExchange:
    return ScriptedExchange(
        role=PLANNER_ROLE, matcher=matcher, reply=planner_reply(**reply_parts)
    )


def codegen_exchange(matcher: str, thought: str, code: str) -> ScriptedExchange:
    return ScriptedExchange(
        role=CODEGEN_ROLE, matcher=matcher, reply=codegen_reply(thought, code)
    )


def script_to_yaml(exchanges: list[ScriptedExchange]) -> str:
    return yaml.safe_dump(
        [{"role": e.role, "matcher": e.matcher, "reply": e.reply} for e in exchanges],
        sort_keys=False,
        allow_unicode=True,
    )
