"""Dataset construction and reward computation.

The corpus is partitioned by actually checking each proof end-to-end from a
fresh prover session: pairs that verify with no extra dependencies form the
RL pool, the remainder the SFT pool.  Transport faults mark a pair
undetermined and exclude it from both pools — an infrastructure outage must
not look like an unverifiable proof.  The same principle runs through the
rewards: verification returns a distinct UNDETERMINED value on transport
failure, never 0.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .engine import run_pool
from .errors import ParseError, TransportError
from .isar import extract_proof_text, parse_script, token_equivalent
from .model import ModelBackend, ModelParams
from .prompts import nl_statement_prompt
from .prover import ProverBackend, check_script

__all__ = [
    "FilterResult",
    "RlRecord",
    "SftRecord",
    "TheoremProofPair",
    "UNDETERMINED",
    "build_rl_records",
    "build_sft_records",
    "filter_self_contained",
    "reward_correctness",
    "reward_verification",
]

log = logging.getLogger(__name__)


class _Undetermined:
    """Outcome distinct from both reward values; returned on transport faults."""

    def __repr__(self) -> str:
        return "UNDETERMINED"

    def __bool__(self) -> bool:
        return False


UNDETERMINED = _Undetermined()


@dataclass(frozen=True)
class TheoremProofPair:
    statement: str
    proof: str
    source_theory: str = ""

    def __post_init__(self) -> None:
        if not self.statement.strip() or not self.proof.strip():
            raise ValueError("statement and proof must be non-empty")

    @staticmethod
    def from_json(data: dict) -> "TheoremProofPair":
        return TheoremProofPair(data["statement"], data["proof"],
                                data.get("source_theory", ""))


@dataclass(frozen=True)
class SftRecord:
    proof: str
    statement: str
    natural_language_statement: str

    def to_json(self) -> dict:
        return {
            "proof": self.proof,
            "statement": self.statement,
            "natural_language_statement": self.natural_language_statement,
        }


@dataclass(frozen=True)
class RlRecord:
    natural_language_statement: str
    formal_proof: str

    def to_json(self) -> dict:
        return {
            "natural_language_statement": self.natural_language_statement,
            "formal_proof": self.formal_proof,
        }


@dataclass(frozen=True)
class FilterResult:
    rl_pool: tuple[TheoremProofPair, ...]
    sft_pool: tuple[TheoremProofPair, ...]
    undetermined: tuple[tuple[TheoremProofPair, str], ...] = ()

    def __iter__(self):
        return iter((self.rl_pool, self.sft_pool))


def filter_self_contained(pairs: Sequence[TheoremProofPair],
                          prover: ProverBackend,
                          pool_size: Optional[int] = None) -> FilterResult:
    """Partition pairs into (verifies end-to-end, remainder).

    A proof that fails to parse cannot be self-contained and lands in the
    remainder; transport aborts are excluded from both pools with a logged
    warning.  The partition is exact and order-preserving.
    """
    def verify(pair: TheoremProofPair) -> bool:
        try:
            script = parse_script(extract_proof_text(pair.proof))
        except ParseError:
            return False
        return check_script(prover, pair.statement, script).success

    outcomes = run_pool(list(pairs), verify,
                        pool_size or prover.config.pool_size)
    rl, sft, undetermined = [], [], []
    for pair, outcome in zip(pairs, outcomes):
        if isinstance(outcome, TransportError):
            log.warning("pair undetermined (transport): %s", outcome)
            undetermined.append((pair, str(outcome)))
        elif isinstance(outcome, Exception):
            raise outcome
        elif outcome:
            rl.append(pair)
        else:
            sft.append(pair)
    return FilterResult(tuple(rl), tuple(sft), tuple(undetermined))


# ---------------------------------------------------------------------------
# record construction

def _generate_nl(pair: TheoremProofPair, model: ModelBackend,
                 params: ModelParams) -> Optional[str]:
    """One model call, retried once; None when both outputs fail validation."""
    for _ in range(2):
        out = model.complete(params, nl_statement_prompt(pair.statement,
                                                         pair.proof), 1)
        text = out[0].strip() if out else ""
        if text:
            return text
    return None


def build_sft_records(
    pool: Sequence[TheoremProofPair], model: ModelBackend, sample_count: int,
    seed: int = 0, params: Optional[ModelParams] = None,
) -> tuple[list[SftRecord], list[dict]]:
    """Seeded sample of the pool with one NL-statement generation per pair.

    Pairs whose generation fails validation twice are dropped and reported,
    not retried further.  Returns (records, drops).
    """
    if sample_count > len(pool):
        raise ValueError(f"sample_count {sample_count} exceeds pool size {len(pool)}")
    params = params or ModelParams()
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(pool)), sample_count))
    records, drops = [], []
    for index in chosen:
        pair = pool[index]
        text = _generate_nl(pair, model, params)
        if text is None:
            drops.append({"statement": pair.statement,
                          "reason": "nl generation failed after retry"})
            continue
        records.append(SftRecord(pair.proof, pair.statement, text))
    return records, drops


def build_rl_records(
    pool: Sequence[TheoremProofPair], model: ModelBackend,
    params: Optional[ModelParams] = None,
) -> tuple[list[RlRecord], list[dict]]:
    """NL statement per verified pair, same drop policy as the SFT records."""
    params = params or ModelParams()
    records, drops = [], []
    for pair in pool:
        text = _generate_nl(pair, model, params)
        if text is None:
            drops.append({"statement": pair.statement,
                          "reason": "nl generation failed after retry"})
            continue
        records.append(RlRecord(text, pair.proof))
    return records, drops


# ---------------------------------------------------------------------------
# rewards

def _token_f1(a: Sequence[str], b: Sequence[str]) -> float:
    if not a or not b:
        return 0.0
    overlap = sum((Counter(a) & Counter(b)).values())
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (len(a) + len(b))


def reward_correctness(response: str, ground_truth: str,
                       strict: bool = False) -> float:
    """1.0 on token-equivalence with the ground-truth proof, else the
    token-level F1 between the extracted and reference proofs (0.0 when
    nothing extractable).  ``strict`` collapses the graded tail to 0."""
    extracted = extract_proof_text(response or "")
    if not extracted.strip():
        return 0.0
    if token_equivalent(extracted, ground_truth):
        return 1.0
    if strict:
        return 0.0
    return _token_f1(extracted.split(), ground_truth.split())


def reward_verification(response: str, statement: str,
                        prover: ProverBackend) -> Union[int, _Undetermined]:
    """1 iff the extracted proof checks end-to-end against the statement.

    Transport aborts return UNDETERMINED — never 0 — so infrastructure
    faults cannot poison the reward signal.
    """
    try:
        script = parse_script(extract_proof_text(response or ""))
    except ParseError:
        return 0
    try:
        return 1 if check_script(prover, statement, script).success else 0
    except TransportError as exc:
        log.warning("verification undetermined (transport): %s", exc)
        return UNDETERMINED
