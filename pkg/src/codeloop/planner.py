"""The Planner role: drafts plans, dispatches steps, reacts to results.

Each planner turn is one LLM completion whose reply must be a single
fenced YAML block with five keys:

    init_plan:          numbered steps with dependency suffixes
    plan:               the final (merged) plan, numbered steps
    current_plan_step:  the step being acted on, e.g. "2. report ..."
    send_to:            CodeInterpreter (dispatch) or User (ask / answer)
    message:            the text sent to that recipient

Drafting the initial plan, refining it, and phrasing the first dispatch
happen in that single completion, which is what keeps simple requests at
three LLM calls per round. The refined plan is validated against the
mechanical merge of the initial plan and falls back to it when the model
merged something it should not have.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .gateway import Gateway, Message, PLANNER_ROLE
from .memory.examples import Example, render_example
from .memory.experience import ExperienceTip
from .memory.types import CODE_INTERPRETER, PLANNER, USER, Post
from .plans import (
    Plan,
    PlanParseError,
    merge_sequential_chains,
    parse_plan,
    plans_equivalent,
    validate_refined,
)
from .plugins import PluginRegistry, describe_for_planner


class MaxPostsExceeded(Exception):
    pass


@dataclass
class DispatchStep:
    step_index: int
    query: str
    to_role: str = CODE_INTERPRETER


@dataclass
class AskUser:
    question: str


@dataclass
class RespondFinal:
    answer: str


@dataclass
class Replan:
    new_plan: Plan
    reason: str
    then: Union[DispatchStep, AskUser, RespondFinal]


PlannerDecision = Union[DispatchStep, AskUser, RespondFinal, Replan]


def render_ci_description(registry: PluginRegistry) -> str:
    """One line per plugin for the planner's view of the Code Interpreter."""
    return describe_for_planner(registry)


_FENCE_RE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)
_CURRENT_STEP_RE = re.compile(r"^\s*(\d+)[.)]?\s*")

_REPLY_KEYS = ("init_plan", "plan", "current_plan_step", "send_to", "message")


class ReplyFormatError(Exception):
    pass


@dataclass
class ParsedReply:
    init_plan: str
    plan: str
    current_plan_step: str
    send_to: str
    message: str

    @property
    def current_index(self) -> int:
        m = _CURRENT_STEP_RE.match(self.current_plan_step)
        if not m:
            raise ReplyFormatError(
                f"current_plan_step must start with a step number: {self.current_plan_step!r}"
            )
        return int(m.group(1))


def parse_planner_reply(reply: str) -> ParsedReply:
    import yaml

    blocks = _FENCE_RE.findall(reply)
    if len(blocks) != 1:
        raise ReplyFormatError(f"expected exactly one fenced block, found {len(blocks)}")
    try:
        raw = yaml.safe_load(blocks[0])
    except yaml.YAMLError as exc:
        raise ReplyFormatError(f"fenced block is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ReplyFormatError("fenced block must hold a mapping")
    missing = [k for k in _REPLY_KEYS if not str(raw.get(k, "") or "").strip()]
    if missing:
        raise ReplyFormatError(f"reply is missing keys: {', '.join(missing)}")
    return ParsedReply(**{k: str(raw[k]).strip() for k in _REPLY_KEYS})


SYSTEM_PREAMBLE = """\
You are the Planner of a code-first assistant. You decompose the user's \
request into numbered sub-task steps, send one step at a time to a worker \
role, watch the results, and answer the user when the work is done.

The CodeInterpreter role generates and executes Python code in a stateful \
sandbox. Its capabilities:
{ci_description}

Rules:
- Write the initial plan as numbered lines "N. description". Annotate each \
dependency with a suffix: "<sequentially depends on i,j>" when a step only \
needs earlier results, or "<interactively depends on i,j>" when its outcome \
must be inspected before the next step can be phrased.
- Then write the final plan: fuse steps that are only sequentially \
dependent into one step; never fuse across an interactive dependency.
- Every reply must be exactly one fenced yaml block with the keys \
init_plan, plan, current_plan_step, send_to, message. send_to is \
CodeInterpreter or User.
- Ask the User only when you genuinely need input; answer the User once \
every step is complete."""


@dataclass
class PlannerState:
    session_id: str
    ci_description: str
    merge_plans: bool = True
    examples: list[Example] = field(default_factory=list)
    tips: list[ExperienceTip] = field(default_factory=list)
    initial: Plan | None = None
    plan: Plan | None = None
    done: set[int] = field(default_factory=set)
    pending_ask: int | None = None
    current_step_text: str = ""
    history: list[Message] = field(default_factory=list)

    def system_messages(self) -> list[Message]:
        messages: list[Message] = [
            {
                "role": "system",
                "content": SYSTEM_PREAMBLE.format(ci_description=self.ci_description),
            }
        ]
        for example in self.examples:
            messages.append(
                {
                    "role": "system",
                    "content": "A worked example of this conversation format:\n"
                    + render_example(example),
                }
            )
        if self.tips:
            tip_lines = "\n".join(f"- {t.tip_text}" for t in self.tips)
            messages.append(
                {"role": "system", "content": f"Lessons from earlier sessions:\n{tip_lines}"}
            )
        return messages


class Planner:
    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    # -- single planning turn -------------------------------------------------

    def step(self, state: PlannerState, incoming: Post) -> PlannerDecision:
        """Run one planner turn on an incoming post and decide what to do next."""
        if incoming.send_to != PLANNER:
            raise ValueError(f"planner received a post addressed to {incoming.send_to}")
        if incoming.send_from == USER and state.pending_ask is not None:
            # The user's reply resolves the step we asked about.
            state.done.add(state.pending_ask)
            state.pending_ask = None

        state.history.append(
            {"role": "user", "content": f"[{incoming.send_from}] {incoming.message}"}
        )
        parsed = self._complete_with_retry(state)
        state.history.append({"role": "assistant", "content": parsed.message})
        return self._apply(state, parsed)

    def _complete_with_retry(self, state: PlannerState) -> ParsedReply:
        messages = state.system_messages() + state.history
        reply = self.gateway.complete(PLANNER_ROLE, messages)
        for attempt in (1, 2):
            try:
                parsed = parse_planner_reply(reply)
                # The embedded plans and step pointer must parse as well.
                parse_plan(parsed.init_plan)
                parse_plan(parsed.plan)
                _ = parsed.current_index
                return parsed
            except (ReplyFormatError, PlanParseError) as exc:
                if attempt == 2:
                    raise PlanParseError(reply, f"after retry: {exc}") from exc
                retry_messages = messages + [
                    {"role": "assistant", "content": reply},
                    {
                        "role": "user",
                        "content": (
                            f"Your reply could not be parsed ({exc}). Reply again with "
                            "exactly one fenced yaml block holding init_plan, plan, "
                            "current_plan_step, send_to, message."
                        ),
                    },
                ]
                reply = self.gateway.complete(PLANNER_ROLE, retry_messages)
        raise AssertionError("unreachable")

    def _adopt_plans(self, state: PlannerState, parsed: ParsedReply) -> Plan | None:
        """Install plans from the reply; returns a new plan if this is a replan."""
        initial = parse_plan(parsed.init_plan)
        candidate = parse_plan(parsed.plan)
        if state.plan is None:
            state.initial = initial
            if state.merge_plans:
                state.plan = (
                    candidate
                    if validate_refined(initial, candidate)
                    else merge_sequential_chains(initial)
                )
            else:
                state.plan = candidate
            return None
        if plans_equivalent(candidate, state.plan):
            return None
        if state.merge_plans and not validate_refined(initial, candidate):
            candidate = merge_sequential_chains(initial)
            if plans_equivalent(candidate, state.plan):
                return None
        return candidate

    def _apply(self, state: PlannerState, parsed: ParsedReply) -> PlannerDecision:
        new_plan = self._adopt_plans(state, parsed)
        if new_plan is not None:
            state.initial = parse_plan(parsed.init_plan)
            state.plan = new_plan
            # Completed work is kept; only pending steps are replaced.
            state.done = {i for i in state.done if i <= len(new_plan)}
        state.current_step_text = parsed.current_plan_step

        decision: Union[DispatchStep, AskUser, RespondFinal]
        if parsed.send_to == USER:
            assert state.plan is not None
            k = parsed.current_index
            others_done = all(
                s.index in state.done for s in state.plan.steps if s.index != k
            )
            if k == len(state.plan) and others_done:
                decision = RespondFinal(answer=parsed.message)
            else:
                decision = AskUser(question=parsed.message)
                state.pending_ask = k
        else:
            k = parsed.current_index
            if state.plan is None or not 1 <= k <= len(state.plan):
                raise ReplyFormatError(f"current_plan_step {k} not in plan")
            decision = DispatchStep(step_index=k, query=parsed.message, to_role=parsed.send_to)

        if new_plan is not None:
            return Replan(new_plan=new_plan, reason=parsed.message, then=decision)
        return decision

    # -- bookkeeping hooks ------------------------------------------------------

    def observe_dispatch_result(
        self, state: PlannerState, step_index: int, succeeded: bool
    ) -> None:
        """A dispatched step is done once its execution report succeeds."""
        if succeeded:
            state.done.add(step_index)


def draft_initial_plan(
    query: str,
    ci_description: str,
    examples: list[Example],
    tips: list[ExperienceTip],
    gateway: Gateway,
) -> Plan:
    """Draft the dependency-annotated initial plan for a fresh request."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    state = PlannerState(
        session_id="draft",
        ci_description=ci_description,
        examples=examples,
        tips=tips,
    )
    planner = Planner(gateway)
    post = Post(id="draft-p0", send_from=USER, send_to=PLANNER_ROLE, message=query)
    planner.step(state, post)
    assert state.initial is not None
    return state.initial
