"""Proof construction: sample whole proofs, validate stepwise, repair, and
backtrack until the prover accepts or the budget runs out.

The repair chain at a failing position is, in order: the tactic cascade plus
Sledgehammer (``atp_substitute``), a model-driven continuation from the
verified prefix (``erp_repair``), placeholder rewriting of remaining tactic
steps (``heuristic_repair``, whose placeholders feed back into the cascade),
and finally truncation of the innermost enclosing block with one last cascade
attempt on the closing placeholder.  The engine never declares success on its
own judgment — only the prover's terminal accepted state (``is_done``)
counts.

Placeholder discharge is two-phase: the goal body is applied on its own and
the cascade then tries bare ``by <tactic>`` steps; a failed tactic step is
instead rewritten and re-applied whole.  Failed applies never advance the
prover session; positions the two-phase probe has dirtied are restored by
replaying the validated prefix into a fresh session.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, TypeVar, Union

from .errors import (
    BackendUnavailable,
    ParseError,
    TheoryLoadError,
    TransportError,
)
from .isar import (
    BlockRef,
    ProofScript,
    extract_proof_text,
    innermost_block,
    parse_script,
    slice_steps,
    splice,
    strip_terminal_marker,
    truncate_to_block,
    with_steps,
)
from .model import ModelBackend, ModelParams
from .prompts import erp_prompt, whole_proof_prompt
from .prover import HAMMER_STEP, TIMEOUT, ProverBackend, ProverConfig, StepResult

__all__ = [
    "AttemptRecord",
    "AttemptState",
    "BudgetConfig",
    "RAW_CASCADE_METHODS",
    "RepairOutcome",
    "SessionCursor",
    "Stage",
    "TacticCascade",
    "atp_substitute",
    "backtrack",
    "default_cascade",
    "erp_repair",
    "heuristic_repair",
    "prove",
    "run_pool",
    "validate_candidate",
]


class Stage(str, Enum):
    INIT_PROOF = "init_proof"
    ATP = "atp"
    ERP = "erp"
    HEURISTIC = "heuristic"
    FAILED = "failed"


_STAGE_ORDER = {Stage.INIT_PROOF: 0, Stage.ATP: 1, Stage.ERP: 2,
                Stage.HEURISTIC: 3, Stage.FAILED: 4}


def _advance(stage: Stage, to: Stage) -> Stage:
    return to if _STAGE_ORDER[to] > _STAGE_ORDER[stage] else stage


# The configured method list names auto twice; the cascade drops duplicates
# keeping first occurrence, then appends Sledgehammer.
RAW_CASCADE_METHODS = (
    "auto", "simp", "auto", "blast", "fastforce", "eval", "sos", "arith",
    "simp add: field_simps", "simp add: mod_simps",
)


@dataclass(frozen=True)
class TacticCascade:
    tactics: tuple[str, ...]
    use_hammer: bool = True

    def __post_init__(self) -> None:
        if not self.tactics:
            raise ValueError("cascade must name at least one tactic")
        deduped: dict[str, None] = {}
        for tactic in self.tactics:
            deduped.setdefault(tactic, None)
        object.__setattr__(self, "tactics", tuple(deduped))


def default_cascade() -> TacticCascade:
    return TacticCascade(RAW_CASCADE_METHODS)


def _justification(tactic: str) -> str:
    tactic = tactic.strip()
    if tactic.startswith(("by ", "by(")):
        return tactic
    return f"by ({tactic})" if " " in tactic else f"by {tactic}"


@dataclass(frozen=True)
class BudgetConfig:
    sample_budget: int = 10
    model: ModelParams = field(default_factory=ModelParams)
    prover: ProverConfig = field(default_factory=ProverConfig)
    erp_enabled: bool = True
    erp_rounds: int = 1  # model-repair attempts per failure position
    cascade: TacticCascade = field(default_factory=default_cascade)

    def __post_init__(self) -> None:
        if self.sample_budget < 1:
            raise ValueError("sample_budget must be >= 1")
        if self.erp_rounds < 1:
            raise ValueError("erp_rounds must be >= 1")


@dataclass
class AttemptState:
    """Mutable bookkeeping for one candidate attempt."""

    i_try: int
    script: Optional[ProofScript] = None
    cursor: int = 0
    extra_calls: int = 0
    stage: Stage = Stage.INIT_PROOF
    timed_out: bool = False
    has_sc: bool = False


@dataclass(frozen=True)
class AttemptRecord:
    problem_name: str
    success: bool
    i_try: int
    success_stage: str
    has_timeout: bool
    extra_calls: int
    has_sc: bool
    wall_time_s: float
    final_script: Optional[str] = None
    undetermined: bool = False

    def __post_init__(self) -> None:
        if self.success and self.final_script is None:
            raise ValueError("successful records carry the final script")
        if self.success == (self.success_stage == Stage.FAILED.value):
            raise ValueError("success_stage is 'failed' exactly on failure")

    def to_json(self) -> dict:
        record = {
            "problem_name": self.problem_name,
            "success": self.success,
            "i_try": self.i_try,
            "success_stage": self.success_stage,
            "has_timeout": self.has_timeout,
            "extra_calls": self.extra_calls,
            "has_sc": self.has_sc,
            "wall_time_s": round(self.wall_time_s, 3),
        }
        if self.final_script is not None:
            record["final_script"] = self.final_script
        if self.undetermined:
            record["undetermined"] = True
        return record

    @staticmethod
    def from_json(data: dict) -> "AttemptRecord":
        return AttemptRecord(
            problem_name=data["problem_name"],
            success=bool(data["success"]),
            i_try=int(data["i_try"]),
            success_stage=data["success_stage"],
            has_timeout=bool(data["has_timeout"]),
            extra_calls=int(data["extra_calls"]),
            has_sc=bool(data["has_sc"]),
            wall_time_s=float(data.get("wall_time_s", 0.0)),
            final_script=data.get("final_script"),
            undetermined=bool(data.get("undetermined", False)),
        )


# ---------------------------------------------------------------------------
# session cursor

class SessionCursor:
    """One prover session plus the validated step texts behind it.

    Knows how to rebuild itself (fresh session, prefix replayed) after the
    two-phase placeholder probe leaves the state mid-goal.
    """

    def __init__(self, prover: ProverBackend, theory: str, config: ProverConfig):
        self.prover = prover
        self.theory = theory
        self.config = config
        self.applied: list[str] = []
        self.session = prover.init_session(theory)

    def try_step(self, text: str, timeout_s: float) -> StepResult:
        result = self.prover.apply(self.session, text, timeout_s)
        if result.ok:
            self.applied.append(text)
        return result

    def rebuild(self, prefix: Sequence[str]) -> None:
        self.prover.close(self.session)
        self.session = self.prover.init_session(self.theory)
        self.applied = []
        for text in prefix:
            result = self.try_step(text, self.config.step_timeout_s)
            if not result.ok:
                raise TheoryLoadError(
                    f"validated prefix no longer replays: {result.message}")

    def close(self) -> None:
        self.prover.close(self.session)


def _theory_for(statement: str, config: ProverConfig) -> str:
    return config.theory_header + "\n\n" + strip_terminal_marker(statement)


# ---------------------------------------------------------------------------
# repair operations

@dataclass(frozen=True)
class RepairOutcome:
    success: bool
    script: ProofScript
    extra_calls: int = 0
    replaced_sorry: bool = False
    timed_out: bool = False
    is_done: bool = False
    session_dirty: bool = False


def atp_substitute(cursor: SessionCursor, script: ProofScript, position: int,
                   cascade: TacticCascade, config: ProverConfig) -> RepairOutcome:
    """Try each cascade tactic as the step's justification, then Sledgehammer.

    Sorry placeholders are discharged two-phase (goal body alone, then bare
    ``by <tactic>``); failed tactic steps are rewritten and re-applied whole.
    Every tactic and hammer invocation counts one extra call; goal-body
    applications do not.  On overall failure after a body application the
    session is left mid-goal (``session_dirty``) and must be rebuilt to the
    validated prefix before further use.
    """
    step = script.step_at(position)
    extra = 0
    timed_out = False
    placeholder = step.is_sorry

    def win(justification: str, result: StepResult) -> RepairOutcome:
        repaired = splice(script, position, step.with_justification(justification))
        return RepairOutcome(True, repaired, extra, placeholder,
                             timed_out, result.is_done)

    body_applied = False
    if placeholder:
        if step.body_text:
            body_result = cursor.try_step(step.body_text, config.step_timeout_s)
            if not body_result.ok:
                return RepairOutcome(False, script, extra, False,
                                     body_result.status == TIMEOUT)
            body_applied = True
        for tactic in cascade.tactics:
            extra += 1
            result = cursor.try_step(_justification(tactic), config.step_timeout_s)
            timed_out = timed_out or result.status == TIMEOUT
            if result.ok:
                return win(_justification(tactic), result)
    else:
        for tactic in cascade.tactics:
            extra += 1
            rewritten = step.with_justification(_justification(tactic))
            result = cursor.try_step(rewritten.text, config.step_timeout_s)
            timed_out = timed_out or result.status == TIMEOUT
            if result.ok:
                return win(_justification(tactic), result)
        if cascade.use_hammer and step.body_text:
            body_result = cursor.try_step(step.body_text, config.step_timeout_s)
            timed_out = timed_out or body_result.status == TIMEOUT
            if not body_result.ok:
                return RepairOutcome(False, script, extra, False, timed_out)
            body_applied = True

    if cascade.use_hammer:
        extra += 1
        result = cursor.try_step(HAMMER_STEP, config.hammer_timeout_s)
        timed_out = timed_out or result.status == TIMEOUT
        if result.ok:
            return win(_justification(result.message or "smt"), result)

    return RepairOutcome(False, script, extra, False, timed_out,
                         session_dirty=body_applied)


def erp_repair(script: ProofScript, position: int, model: ModelBackend,
               prover: ProverBackend, statement: str, budget: BudgetConfig,
               few_shots: Sequence[tuple[str, str]] = ()) -> RepairOutcome:
    """Ask the model to continue from the verified prefix, then validate the
    continuation stepwise in a fresh session.

    Success means the prover reached its terminal accepted state on
    prefix + continuation; the merged script is returned.  Anything less —
    parse failure, rejection mid-continuation, running out of steps — is a
    failure and the original script is returned unchanged.
    """
    prefix_steps = script.steps[:position]
    prefix_text = "\n".join(s.text for s in prefix_steps)
    completion = model.complete(
        budget.model, erp_prompt(statement, prefix_text, few_shots), 1)
    if not completion or not completion[0].strip():
        return RepairOutcome(False, script)
    try:
        continuation = parse_script(extract_proof_text(completion[0]))
    except ParseError:
        return RepairOutcome(False, script)
    if not continuation.steps:
        return RepairOutcome(False, script)

    probe = SessionCursor(prover, _theory_for(statement, budget.prover),
                          budget.prover)
    timed_out = False
    try:
        for text in (s.text for s in prefix_steps):
            if not probe.try_step(text, budget.prover.step_timeout_s).ok:
                return RepairOutcome(False, script)
        for offset, step in enumerate(continuation.steps):
            result = probe.try_step(step.text, budget.prover.step_timeout_s)
            timed_out = timed_out or result.status == TIMEOUT
            if not result.ok:
                return RepairOutcome(False, script, timed_out=timed_out)
            if result.is_done:
                merged = with_steps(
                    script, [*prefix_steps, *continuation.steps[:offset + 1]])
                return RepairOutcome(True, merged, timed_out=timed_out,
                                     is_done=True)
        return RepairOutcome(False, script, timed_out=timed_out)
    finally:
        probe.close()


_STRUCTURAL_HEADS = ("proof", "qed", "oops", "next")


def heuristic_repair(script: ProofScript, position: int) -> ProofScript:
    """Rewrite the failing step's justification, and every later terminal
    tactic, to sorry placeholders for the cascade to discharge.  Structural
    steps (block delimiters) take no justification and are left alone."""
    result = script
    for index in range(position, len(script.steps)):
        step = result.steps[index]
        if step.is_sorry or step.head in _STRUCTURAL_HEADS:
            continue
        if index == position or step.terminal_tactic is not None:
            result = splice(result, index, step.with_justification("sorry"))
    return result


def _backtrack_target(script: ProofScript, position: int) -> tuple[BlockRef, int]:
    """Innermost block plus the cut point: a failure at the block's own
    delimiter means the block as a whole is broken, so the cut moves to its
    opener and the entire block collapses into one placeholder."""
    ref = innermost_block(script, position)
    node = ref.resolve(script)
    if node.opener is not None and script.steps[position].head in ("qed", "oops"):
        return ref, node.opener
    return ref, position


def backtrack(script: ProofScript, position: int) -> ProofScript:
    """Truncate the innermost block containing the failure, re-closing it
    with a placeholder (collapsing the block entirely when its delimiter is
    what failed)."""
    ref, target = _backtrack_target(script, position)
    return truncate_to_block(script, ref, target)


def validate_candidate(prover: ProverBackend, session: str,
                       script: ProofScript,
                       step_timeout_s: Optional[float] = None) -> Optional[int]:
    """Apply steps in order from the session's current state.

    Returns the position of the first non-ok step, None when the prover
    reports completion, or len(script.steps) if the script runs out with
    goals remaining.  Stops issuing prover calls at the first failure.
    """
    timeout = step_timeout_s if step_timeout_s is not None \
        else prover.config.step_timeout_s
    for index, step in enumerate(script.steps):
        result = prover.apply(session, step.text, timeout)
        if not result.ok:
            return index
        if result.is_done:
            return None
    return len(script.steps)


# ---------------------------------------------------------------------------
# the prove loop

def prove(statement: str, model: ModelBackend, prover: ProverBackend,
          budget: Optional[BudgetConfig] = None,
          few_shots: Sequence[tuple[str, str]] = (),
          problem_name: str = "") -> AttemptRecord:
    """Run the full pipeline for one statement.

    Samples up to ``sample_budget`` whole-proof candidates in one model
    request, then validates and repairs each in turn.  Returns the first
    successful AttemptRecord, else a failure record whose state fields
    describe the last candidate.  Transport faults raise BackendUnavailable —
    they are never reported as proof failures.
    """
    if not statement or not statement.strip():
        raise ValueError("statement must be non-empty")
    budget = budget or BudgetConfig()
    started = time.monotonic()

    try:
        candidates = model.complete(
            budget.model, whole_proof_prompt(statement, few_shots),
            budget.sample_budget)
    except TransportError as exc:
        raise BackendUnavailable(f"model backend unavailable: {exc}") from exc

    has_timeout = False
    state = AttemptState(i_try=0)
    tried = 0
    for i_try, candidate in enumerate(candidates):
        state = AttemptState(i_try=i_try)
        tried = i_try + 1
        try:
            success, final = _attempt(statement, candidate, state, model,
                                      prover, budget, few_shots)
        except TransportError as exc:
            raise BackendUnavailable(f"prover backend unavailable: {exc}") from exc
        except TheoryLoadError:
            # The statement itself will not load; no candidate can do better.
            break
        has_timeout = has_timeout or state.timed_out
        if success:
            return AttemptRecord(
                problem_name=problem_name,
                success=True,
                i_try=i_try,
                success_stage=state.stage.value,
                has_timeout=has_timeout,
                extra_calls=state.extra_calls,
                has_sc=state.has_sc,
                wall_time_s=time.monotonic() - started,
                final_script=final,
            )
    return AttemptRecord(
        problem_name=problem_name,
        success=False,
        i_try=max(0, tried - 1),
        success_stage=Stage.FAILED.value,
        has_timeout=has_timeout,
        extra_calls=state.extra_calls,
        has_sc=state.has_sc,
        wall_time_s=time.monotonic() - started,
    )


def _attempt(statement: str, candidate: str, state: AttemptState,
             model: ModelBackend, prover: ProverBackend, budget: BudgetConfig,
             few_shots: Sequence[tuple[str, str]]) -> tuple[bool, Optional[str]]:
    text = extract_proof_text(candidate)
    if not text.strip():
        return False, None
    try:
        script = parse_script(text)
    except ParseError:
        return False, None
    if not script.steps:
        return False, None

    cursor = SessionCursor(prover, _theory_for(statement, budget.prover),
                           budget.prover)
    erp_used: dict[int, int] = {}
    heuristic_tried: set[int] = set()
    index = 0
    # Defensive bound: legitimate repair activity is linear in script size;
    # anything past this is a repair loop that failed to make progress.
    chain_budget = 6 * len(script.steps) + 32
    try:
        while True:
            if index >= len(script.steps):
                return False, None
            state.script = script
            state.cursor = index
            step = script.steps[index]

            if not step.is_sorry:
                result = cursor.try_step(step.text, budget.prover.step_timeout_s)
                if result.ok:
                    if result.is_done:
                        return True, _final_text(script, index + 1)
                    index += 1
                    continue
                state.timed_out = state.timed_out or result.status == TIMEOUT

            chain_budget -= 1
            if chain_budget < 0:
                return False, None
            done, script, index, alive = _repair_chain(
                cursor, script, index, state, statement, model, prover,
                budget, few_shots, erp_used, heuristic_tried)
            if done:
                return True, _final_text(script, index)
            if not alive:
                return False, None
    finally:
        cursor.close()


def _final_text(script: ProofScript, applied_count: int) -> str:
    if applied_count < len(script.steps):
        script = slice_steps(script, applied_count)
    return script.text


def _repair_chain(
    cursor: SessionCursor, script: ProofScript, index: int,
    state: AttemptState, statement: str, model: ModelBackend,
    prover: ProverBackend, budget: BudgetConfig,
    few_shots: Sequence[tuple[str, str]], erp_used: dict[int, int],
    heuristic_tried: set[int],
) -> tuple[bool, ProofScript, int, bool]:
    """Repair at a failing or placeholder position.

    Returns (proof_done, script, applied_count_or_next_index, alive).
    """
    prefix = [s.text for s in script.steps[:index]]

    outcome = atp_substitute(cursor, script, index, budget.cascade, budget.prover)
    state.extra_calls += outcome.extra_calls
    state.timed_out = state.timed_out or outcome.timed_out
    if outcome.success:
        state.stage = _advance(state.stage, Stage.ATP)
        state.has_sc = state.has_sc or outcome.replaced_sorry
        return outcome.is_done, outcome.script, index + 1, True
    if outcome.session_dirty:
        cursor.rebuild(prefix)

    if budget.erp_enabled and erp_used.get(index, 0) < budget.erp_rounds:
        erp_used[index] = erp_used.get(index, 0) + 1
        erp = erp_repair(script, index, model, prover, statement, budget,
                         few_shots)
        state.timed_out = state.timed_out or erp.timed_out
        if erp.success:
            state.stage = _advance(state.stage, Stage.ERP)
            return True, erp.script, len(erp.script.steps), True

    if index not in heuristic_tried:
        heuristic_tried.add(index)
        rewritten = heuristic_repair(script, index)
        if rewritten.steps != script.steps:
            state.stage = _advance(state.stage, Stage.HEURISTIC)
            # The placeholder at `index` is re-attempted by the main loop.
            return False, rewritten, index, True

    if index == 0:
        return False, script, index, False
    ref, target = _backtrack_target(script, index)
    truncated = truncate_to_block(script, ref, target)
    if truncated.steps == script.steps or target == 0:
        return False, script, index, False
    if target < index:
        # the collapsed block's steps were already applied; re-align
        cursor.rebuild([s.text for s in truncated.steps[:target]])
    outcome = atp_substitute(cursor, truncated, target, budget.cascade,
                             budget.prover)
    state.extra_calls += outcome.extra_calls
    state.timed_out = state.timed_out or outcome.timed_out
    if outcome.success:
        state.stage = _advance(state.stage, Stage.ATP)
        state.has_sc = True
        return outcome.is_done, outcome.script, target + 1, True
    return False, script, index, False


# ---------------------------------------------------------------------------
# worker pool

T = TypeVar("T")
R = TypeVar("R")


def run_pool(items: Sequence[T], worker: Callable[[T], R],
             pool_size: int) -> list[Union[R, Exception]]:
    """Run the worker over items with bounded concurrency, preserving order;
    per-item exceptions are captured, not raised."""
    def guarded(item: T) -> Union[R, Exception]:
        try:
            return worker(item)
        except Exception as exc:
            return exc

    if pool_size <= 1 or len(items) <= 1:
        return [guarded(item) for item in items]
    with ThreadPoolExecutor(max_workers=pool_size) as pool:
        return list(pool.map(guarded, items))
