"""Benchmark running and report aggregation.

Records stream to JSONL as problems finish, so a killed run resumes by
skipping problems that already have records.  Aggregation excludes
undetermined records (backend aborts) from both numerator and denominator
and reports them separately: infrastructure faults must not masquerade as
proof failures.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

from .engine import AttemptRecord, BudgetConfig, Stage, prove, run_pool
from .errors import BackendUnavailable, EmptyInput
from .jsonl import append_jsonl, read_jsonl
from .model import ModelBackend
from .prover import ProverBackend

__all__ = [
    "BenchmarkProblem",
    "BenchmarkSpec",
    "EvalReport",
    "aggregate",
    "format_hms",
    "format_table",
    "load_benchmark",
    "run_benchmark",
]


@dataclass(frozen=True)
class BenchmarkProblem:
    problem_name: str
    formal_statement: str
    informal_statement: Optional[str] = None
    informal_proof: Optional[str] = None


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    problems: tuple[BenchmarkProblem, ...]
    budget: BudgetConfig = field(default_factory=BudgetConfig)

    def __post_init__(self) -> None:
        names = [p.problem_name for p in self.problems]
        if len(names) != len(set(names)):
            raise ValueError("problem names must be unique")


def load_benchmark(path: Union[str, Path], name: str = "",
                   budget: Optional[BudgetConfig] = None) -> BenchmarkSpec:
    """Build a spec from JSONL rows carrying problem_name/formal_statement
    (optional informal fields are kept when present)."""
    problems = [
        BenchmarkProblem(
            problem_name=row["problem_name"],
            formal_statement=row["formal_statement"],
            informal_statement=row.get("informal_statement"),
            informal_proof=row.get("informal_proof"),
        )
        for row in read_jsonl(path)
    ]
    return BenchmarkSpec(name or Path(path).stem, tuple(problems),
                         budget or BudgetConfig())


def _undetermined_record(problem_name: str) -> AttemptRecord:
    return AttemptRecord(
        problem_name=problem_name, success=False, i_try=0,
        success_stage=Stage.FAILED.value, has_timeout=False, extra_calls=0,
        has_sc=False, wall_time_s=0.0, undetermined=True)


def run_benchmark(
    spec: BenchmarkSpec, model: ModelBackend, prover: ProverBackend,
    records_path: Union[str, Path],
    pool_size: Optional[int] = None,
    prove_fn: Callable[..., AttemptRecord] = prove,
    few_shots: Sequence[tuple[str, str]] = (),
) -> list[AttemptRecord]:
    """One AttemptRecord per problem, written incrementally.

    Problems that already have a record in ``records_path`` are not re-run;
    backend aborts become undetermined records rather than failures.
    """
    records_path = Path(records_path)
    existing = {row["problem_name"]: AttemptRecord.from_json(row)
                for row in read_jsonl(records_path)}
    todo = [p for p in spec.problems if p.problem_name not in existing]
    write_lock = threading.Lock()

    def worker(problem: BenchmarkProblem) -> AttemptRecord:
        try:
            record = prove_fn(problem.formal_statement, model, prover,
                              spec.budget, few_shots,
                              problem_name=problem.problem_name)
        except BackendUnavailable:
            record = _undetermined_record(problem.problem_name)
        with write_lock:
            append_jsonl(records_path, record.to_json())
        return record

    outcomes = run_pool(todo, worker, pool_size or spec.budget.prover.pool_size)
    for outcome in outcomes:
        if isinstance(outcome, Exception):
            raise outcome
    fresh = {record.problem_name: record for record in outcomes}
    return [existing.get(p.problem_name) or fresh[p.problem_name]
            for p in spec.problems]


# ---------------------------------------------------------------------------
# aggregation

def _round_half_up(value: float, places: int) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_hms(seconds: float) -> str:
    total = int(Decimal(repr(seconds)).quantize(0, rounding=ROUND_HALF_UP))
    hours, remainder = divmod(total, 3600)
    minutes, secs = divmod(remainder, 60)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}"


@dataclass(frozen=True)
class EvalReport:
    success_rate: float  # percent, one decimal
    avg_attempts: float  # mean i_try, two decimals
    total_exec_time: str  # h:mm:ss
    n_problems: int
    n_success: int
    n_undetermined: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.success_rate <= 100:
            raise ValueError("success_rate out of range")
        if self.n_success > self.n_problems:
            raise ValueError("n_success exceeds n_problems")


def aggregate(records: Sequence[AttemptRecord],
              attempts_over_successes_only: bool = False) -> EvalReport:
    """Success rate (half-up, 1 decimal), mean attempts (2 decimals), and
    total wall time over the determined records."""
    if not records:
        raise EmptyInput("no records to aggregate")
    determined = [r for r in records if not r.undetermined]
    n_undetermined = len(records) - len(determined)
    if not determined:
        raise EmptyInput("all records are undetermined")
    n_problems = len(determined)
    n_success = sum(1 for r in determined if r.success)
    attempt_pool = [r for r in determined if r.success] \
        if attempts_over_successes_only else determined
    avg_attempts = (sum(r.i_try for r in attempt_pool) / len(attempt_pool)) \
        if attempt_pool else 0.0
    return EvalReport(
        success_rate=_round_half_up(100.0 * n_success / n_problems, 1),
        avg_attempts=_round_half_up(avg_attempts, 2),
        total_exec_time=format_hms(sum(r.wall_time_s for r in determined)),
        n_problems=n_problems,
        n_success=n_success,
        n_undetermined=n_undetermined,
    )


# ---------------------------------------------------------------------------
# report formatting

_HEADERS = ["Method", "Success Rate (%)", "Avg Attempts",
            "Total Exec. Time (h:mm:ss)"]


def format_table(rows: Sequence[tuple[str, str, EvalReport]]) -> tuple[str, str]:
    """Markdown and CSV for (dataset, method, report) rows, grouped by
    dataset in first-appearance order."""
    groups: dict[str, list[tuple[str, EvalReport]]] = {}
    for dataset, method, report in rows:
        groups.setdefault(dataset, []).append((method, report))

    md_lines: list[str] = []
    for dataset, entries in groups.items():
        md_lines.append(f"**{dataset}**")
        md_lines.append("")
        md_lines.append("| " + " | ".join(_HEADERS) + " |")
        md_lines.append("|" + "|".join("---" for _ in _HEADERS) + "|")
        for method, report in entries:
            md_lines.append(
                f"| {method} | {report.success_rate:.1f} | "
                f"{report.avg_attempts:.2f} | {report.total_exec_time} |")
        footnotes = sum(r.n_undetermined for _, r in entries)
        if footnotes:
            md_lines.append("")
            md_lines.append(f"_{footnotes} undetermined record(s) excluded "
                            f"(backend aborts)._")
        md_lines.append("")
    markdown = "\n".join(md_lines).rstrip() + "\n"

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["Dataset", *_HEADERS, "Problems", "Successes",
                     "Undetermined"])
    for dataset, entries in groups.items():
        for method, report in entries:
            writer.writerow([dataset, method, f"{report.success_rate:.1f}",
                             f"{report.avg_attempts:.2f}",
                             report.total_exec_time, report.n_problems,
                             report.n_success, report.n_undetermined])
    return markdown, buffer.getvalue()
