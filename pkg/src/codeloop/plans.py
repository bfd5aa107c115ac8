"""Step plans with dependency annotations, and sequential-chain merging.

A plan is an ordered list of numbered steps. A step may depend on earlier
steps in one of three ways:

- ``sequential``: order-only dependency; the two steps can be fused into a
  single code-generation task.
- ``interactive``: something (a person or the LLM) must look at the first
  step's outcome before the second can be phrased; never fused.
- ``none``: no dependency (dispatch still happens in listed order).

Merging contracts every chain of steps connected purely by sequential
edges into one step, which keeps the dispatch loop from paying one LLM
round-trip per micro-step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum


class DepKind(str, Enum):
    SEQUENTIAL = "sequential"
    INTERACTIVE = "interactive"
    NONE = "none"


class PlanParseError(Exception):
    def __init__(self, line: str, detail: str = ""):
        super().__init__(f"cannot parse plan line: {line!r}" + (f" ({detail})" if detail else ""))
        self.line = line
        self.detail = detail


@dataclass
class PlanStep:
    index: int  # 1-based
    description: str
    deps: list[tuple[int, DepKind]] = field(default_factory=list)


@dataclass
class Plan:
    steps: list[PlanStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def step(self, index: int) -> PlanStep:
        return self.steps[index - 1]

    def validate(self) -> None:
        for pos, step in enumerate(self.steps, start=1):
            if step.index != pos:
                raise ValueError(f"step indices must be 1..n contiguous, got {step.index} at {pos}")
            for target, _ in step.deps:
                if target >= step.index:
                    raise ValueError(
                        f"step {step.index} depends on {target}: edges must point backward"
                    )
                if target < 1:
                    raise ValueError(f"step {step.index} has dependency target {target} < 1")

    def render(self) -> str:
        """The line grammar: ``N. description <kind depends on i,j>``."""
        lines = []
        for step in self.steps:
            suffix = ""
            by_kind: dict[DepKind, list[int]] = {}
            for target, kind in step.deps:
                by_kind.setdefault(kind, []).append(target)
            parts = []
            for kind in (DepKind.SEQUENTIAL, DepKind.INTERACTIVE, DepKind.NONE):
                if kind in by_kind:
                    targets = ",".join(str(t) for t in sorted(by_kind[kind]))
                    adverb = {
                        DepKind.SEQUENTIAL: "sequentially",
                        DepKind.INTERACTIVE: "interactively",
                        DepKind.NONE: "none",
                    }[kind]
                    parts.append(f"<{adverb} depends on {targets}>")
            if parts:
                suffix = " " + " ".join(parts)
            lines.append(f"{step.index}. {step.description}{suffix}")
        return "\n".join(lines)


_STEP_RE = re.compile(r"^\s*(\d+)[.)]\s*(.*?)\s*$")
_DEP_RE = re.compile(
    r"<\s*(sequential(?:ly)?|interactive(?:ly)?|none)\s*"
    r"(?:depends?\s+on)\s+([0-9,\s]+)\s*>",
    re.IGNORECASE,
)


def _dep_kind(token: str) -> DepKind:
    token = token.lower()
    if token.startswith("seq"):
        return DepKind.SEQUENTIAL
    if token.startswith("inter"):
        return DepKind.INTERACTIVE
    return DepKind.NONE


def parse_plan(text: str) -> Plan:
    """Parse the numbered-line plan grammar; raises on any unparseable line."""
    steps: list[PlanStep] = []
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        deps: list[tuple[int, DepKind]] = []

        def _collect(match: re.Match) -> str:
            kind = _dep_kind(match.group(1))
            for part in match.group(2).split(","):
                part = part.strip()
                if part:
                    deps.append((int(part), kind))
            return ""

        without_deps = _DEP_RE.sub(_collect, line)
        m = _STEP_RE.match(without_deps)
        if not m or not m.group(2).strip():
            raise PlanParseError(raw_line, "expected 'N. description'")
        steps.append(PlanStep(index=int(m.group(1)), description=m.group(2).strip(), deps=deps))
    if not steps:
        raise PlanParseError(text, "plan has no steps")
    plan = Plan(steps=steps)
    plan.validate()
    return plan


class _Clusters:
    """Union-find over step indices, ordered by smallest member."""

    def __init__(self, n: int):
        self.parent = list(range(n + 1))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Root at the smaller index so cluster order follows plan order.
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra


def merge_sequential_chains(plan: Plan) -> Plan:
    """Contract chains of sequential-only dependencies into single steps.

    Interactive edges are hard boundaries: a union is applied only if every
    interactive edge still crosses from an earlier cluster into a strictly
    later one afterwards. Surviving interactive (and none) edges are
    remapped onto the new step numbering. A sequential edge left between
    two distinct clusters by the boundary rule is dropped: dispatch order
    is positional, so the ordering it encoded is preserved anyway.
    """
    plan.validate()
    n = len(plan.steps)
    clusters = _Clusters(n)
    interactive_edges = [
        (step.index, target)
        for step in plan.steps
        for target, kind in step.deps
        if kind == DepKind.INTERACTIVE
    ]

    def _cluster_order(cl: _Clusters) -> dict[int, int]:
        roots = sorted({cl.find(i) for i in range(1, n + 1)})
        return {root: pos for pos, root in enumerate(roots, start=1)}

    def _boundaries_ok(cl: _Clusters) -> bool:
        # Every interactive edge must still cross from a strictly earlier
        # cluster into a later one; a merge may neither swallow nor invert it.
        order = _cluster_order(cl)
        for src, dst in interactive_edges:
            if order[cl.find(dst)] >= order[cl.find(src)]:
                return False
        return True

    for step in plan.steps:
        for target, kind in step.deps:
            if kind != DepKind.SEQUENTIAL:
                continue
            trial = _Clusters(n)
            trial.parent = list(clusters.parent)
            trial.union(step.index, target)
            if _boundaries_ok(trial):
                clusters = trial

    order = _cluster_order(clusters)
    members: dict[int, list[int]] = {}
    for i in range(1, n + 1):
        members.setdefault(clusters.find(i), []).append(i)

    new_steps: list[PlanStep] = []
    for root, new_index in sorted(order.items(), key=lambda kv: kv[1]):
        description = ", ".join(plan.step(i).description for i in sorted(members[root]))
        new_steps.append(PlanStep(index=new_index, description=description))

    # Remap surviving non-sequential edges onto the new numbering.
    for step in plan.steps:
        for target, kind in step.deps:
            if kind == DepKind.SEQUENTIAL:
                continue
            src_cluster = order[clusters.find(step.index)]
            dst_cluster = order[clusters.find(target)]
            if src_cluster == dst_cluster:
                continue
            edge = (dst_cluster, kind)
            deps = new_steps[src_cluster - 1].deps
            if edge not in deps:
                deps.append(edge)
    for step in new_steps:
        step.deps.sort(key=lambda e: (e[0], e[1].value))

    merged = Plan(steps=new_steps)
    merged.validate()
    return merged


def normalized_lines(plan: Plan) -> list[str]:
    """Step descriptions normalized for string comparison."""
    return [" ".join(s.description.split()).rstrip(".").lower() for s in plan.steps]


def plans_equivalent(a: Plan, b: Plan) -> bool:
    """Same steps after whitespace/case normalization, same dep structure."""
    if normalized_lines(a) != normalized_lines(b):
        return False
    return [sorted(s.deps) for s in a.steps] == [sorted(s.deps) for s in b.steps]


def _best_covering_step(description: str, candidates: list[str]) -> int:
    """Index (1-based) of the candidate sharing the most tokens, earliest wins."""
    from .textutil import tokenize

    tokens = set(tokenize(description))
    best, best_score = 1, -1
    for i, cand in enumerate(candidates, start=1):
        score = len(tokens & set(tokenize(cand)))
        if score > best_score:
            best, best_score = i, score
    return best


def validate_refined(initial: Plan, candidate: Plan) -> bool:
    """Check an LLM-refined plan against the mechanical merge of ``initial``.

    The candidate must have exactly as many steps as the mechanical merge,
    and grouping the initial steps by which candidate step absorbs them must
    reproduce the mechanical partition — i.e. nothing the merge kept apart
    may have been fused.
    """
    oracle = merge_sequential_chains(initial)
    if len(candidate) != len(oracle):
        return False
    candidate_texts = [s.description for s in candidate.steps]
    oracle_texts = [s.description for s in oracle.steps]
    candidate_assignment = [
        _best_covering_step(s.description, candidate_texts) for s in initial.steps
    ]
    oracle_assignment = [
        _best_covering_step(s.description, oracle_texts) for s in initial.steps
    ]
    return candidate_assignment == oracle_assignment


def refine_plan(initial: Plan, gateway) -> Plan:
    """Ask the LLM for the final (merged) plan; fall back to the mechanical merge.

    The reply is accepted only if it parses and passes
    :func:`validate_refined`; otherwise the mechanical merge is returned, so
    this never fails.
    """
    oracle = merge_sequential_chains(initial)
    reply = gateway.complete(
        "Planner",
        [
            {
                "role": "system",
                "content": (
                    "Rewrite the given step plan by fusing steps that only "
                    "depend sequentially on one another into single steps. "
                    "Never fuse across an interactive dependency. Reply with "
                    "the final plan only, as numbered 'N. description' lines."
                ),
            },
            {"role": "user", "content": initial.render()},
        ],
    )
    try:
        candidate = parse_plan(reply)
    except PlanParseError:
        return oracle
    if validate_refined(initial, candidate):
        return candidate
    return oracle
