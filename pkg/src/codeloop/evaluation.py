"""Conversation-level evaluation: an Examiner runs the task conversation
with the target agent, a Judge grades the extracted solution.

The Examiner gets only the task description. It opens the conversation,
answers the agent's clarification questions from the task description
alone (hints and ground truth never enter its prompt, so they cannot
leak), and emits a ``SOLUTION:`` marker line once the agent has presented
its answer. The Judge then awards each ground-truth question's points,
either by exact match (for structured ``@name[value]`` answers) or by an
LLM yes/no check. Scores are normalized by the case's maximum points and
averaged over repeated runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml

from .gateway import EXAMINER_ROLE, Gateway, JUDGE_ROLE

SOLUTION_MARKER = "SOLUTION:"
DEFAULT_TURN_BUDGET = 10
DEFAULT_RUNS_PER_CASE = 2


class CaseFormatError(Exception):
    pass


class TurnBudgetExceeded(Exception):
    def __init__(self, case_id: str, transcript: list[tuple[str, str]]):
        super().__init__(f"case {case_id}: no solution within the turn budget")
        self.transcript = transcript


@dataclass
class GroundTruth:
    question_id: str
    expected: str
    points: float
    match: str = "judge"  # "exact" | "judge"


@dataclass
class EvalCase:
    id: str
    task_description: str
    ground_truth: list[GroundTruth]

    @property
    def max_points(self) -> float:
        return sum(q.points for q in self.ground_truth)

    @classmethod
    def from_yaml(cls, text: str, source: str = "<string>") -> "EvalCase":
        raw = yaml.safe_load(text)
        if not isinstance(raw, dict):
            raise CaseFormatError(f"{source}: case must be a mapping")
        for key in ("id", "task", "questions"):
            if key not in raw:
                raise CaseFormatError(f"{source}: missing key {key!r}")
        questions = [
            GroundTruth(
                question_id=str(q["id"]),
                expected=str(q["expected"]),
                points=float(q.get("points", 1)),
                match=str(q.get("match", "judge")),
            )
            for q in raw["questions"]
        ]
        case = cls(id=str(raw["id"]), task_description=str(raw["task"]), ground_truth=questions)
        if case.max_points <= 0:
            raise CaseFormatError(f"{source}: max points must be positive")
        return case


def load_cases(directory: str | Path) -> list[EvalCase]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"case directory not found: {directory}")
    return [
        EvalCase.from_yaml(path.read_text(), source=str(path))
        for path in sorted(directory.glob("*.yaml"))
    ]


@dataclass
class Verdict:
    case_id: str
    points_earned: float
    max_points: float
    transcript: list[tuple[str, str]] = field(default_factory=list)

    @property
    def normalized(self) -> float:
        return self.points_earned / self.max_points


EXAMINER_PREAMBLE = """\
You are the Examiner supervising a conversation with an agent under test.
You know only the task description below; you have no solutions or hints
and must never invent any.

- Open by giving the agent the task.
- If the agent asks a clarification question, answer it using only the
  task description (confirm, restate, or say the task does not specify).
- Once the agent has presented its solution, stop and reply with a single
  line: "SOLUTION: <the solution as the agent stated it>".
- Keep the agent on the task; do not solve it for the agent.

Task description:
{task}"""


def run_examiner(
    case: EvalCase,
    target: Callable[[str], str],
    gateway: Gateway,
    turn_budget: int = DEFAULT_TURN_BUDGET,
) -> tuple[list[tuple[str, str]], str]:
    """Drive the conversation; returns (transcript, extracted solution).

    ``target`` sends one message to the agent and returns its reply.
    Transcript entries are ("examiner"|"agent", text).
    """
    transcript: list[tuple[str, str]] = []
    messages = [
        {"role": "system", "content": EXAMINER_PREAMBLE.format(task=case.task_description)},
        {"role": "user", "content": "Begin the conversation with the agent."},
    ]
    for _ in range(turn_budget):
        examiner_text = gateway.complete(EXAMINER_ROLE, messages)
        for line in examiner_text.splitlines():
            if line.strip().startswith(SOLUTION_MARKER):
                solution = line.strip()[len(SOLUTION_MARKER) :].strip()
                return transcript, solution
        transcript.append(("examiner", examiner_text))
        agent_text = target(examiner_text)
        transcript.append(("agent", agent_text))
        messages.append({"role": "assistant", "content": examiner_text})
        messages.append({"role": "user", "content": f"The agent replied:\n{agent_text}"})
    raise TurnBudgetExceeded(case.id, transcript)


def _is_structured(expected: str) -> bool:
    return expected.startswith("@") and expected.endswith("]") and "[" in expected


def judge(solution: str, case: EvalCase, gateway: Gateway) -> float:
    """Points earned for ``solution`` against the case's ground truth.

    Structured ``@name[value]`` answers are matched exactly without an LLM
    call; everything else goes to the judge model as a yes/no question.
    """
    earned = 0.0
    for question in case.ground_truth:
        if question.match == "exact" or _is_structured(question.expected):
            if question.expected in solution:
                earned += question.points
            continue
        if not solution.strip():
            continue
        reply = gateway.complete(
            JUDGE_ROLE,
            [
                {
                    "role": "system",
                    "content": (
                        "You are the Judge. Decide whether the solution satisfies "
                        "the expected answer, allowing for phrasing differences. "
                        "Reply YES or NO on the first line."
                    ),
                },
                {
                    "role": "user",
                    "content": (
                        f"Expected answer for question {question.question_id!r}: "
                        f"{question.expected}\nSolution:\n{solution}"
                    ),
                },
            ],
        )
        if reply.strip().upper().startswith("YES"):
            earned += question.points
    return earned


def evaluate_case(
    case: EvalCase,
    target: Callable[[str], str],
    gateway: Gateway,
    turn_budget: int = DEFAULT_TURN_BUDGET,
) -> Verdict:
    try:
        transcript, solution = run_examiner(case, target, gateway, turn_budget)
    except TurnBudgetExceeded as exc:
        return Verdict(
            case_id=case.id, points_earned=0.0, max_points=case.max_points,
            transcript=exc.transcript,
        )
    earned = judge(solution, case, gateway)
    return Verdict(
        case_id=case.id, points_earned=earned, max_points=case.max_points,
        transcript=transcript,
    )


@dataclass
class CaseScore:
    case_id: str
    runs: int
    mean_normalized: float


@dataclass
class EvalReport:
    cases: list[CaseScore]
    suite_score: float
    runs_per_case: int

    def to_text_table(self) -> str:
        width = max([len("case")] + [len(c.case_id) for c in self.cases])
        lines = [f"{'case'.ljust(width)}  runs  score"]
        lines.append("-" * (width + 13))
        for c in self.cases:
            lines.append(f"{c.case_id.ljust(width)}  {c.runs:>4}  {c.mean_normalized:>5.2f}")
        lines.append("-" * (width + 13))
        lines.append(f"{'suite'.ljust(width)}        {self.suite_score:>5.2f}")
        return "\n".join(lines)

    def to_yaml(self) -> str:
        return yaml.safe_dump(
            {
                "runs_per_case": self.runs_per_case,
                "cases": [
                    {
                        "id": c.case_id,
                        "runs": c.runs,
                        "mean_normalized": round(c.mean_normalized, 2),
                    }
                    for c in self.cases
                ],
                "suite_score": round(self.suite_score, 2),
            },
            sort_keys=False,
        )


def aggregate(verdicts: list[Verdict], runs_per_case: int = DEFAULT_RUNS_PER_CASE) -> EvalReport:
    """Per-case mean of normalized scores, then the mean over cases."""
    if runs_per_case < 1:
        raise ValueError("runs_per_case must be >= 1")
    by_case: dict[str, list[float]] = {}
    order: list[str] = []
    for verdict in verdicts:
        if verdict.case_id not in by_case:
            order.append(verdict.case_id)
        by_case.setdefault(verdict.case_id, []).append(verdict.normalized)
    cases = [
        CaseScore(
            case_id=cid,
            runs=len(by_case[cid]),
            mean_normalized=sum(by_case[cid]) / len(by_case[cid]),
        )
        for cid in order
    ]
    suite = sum(c.mean_normalized for c in cases) / len(cases) if cases else 0.0
    return EvalReport(cases=cases, suite_score=suite, runs_per_case=runs_per_case)
