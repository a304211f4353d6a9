"""Access-policy parsing and evaluation.

Implements the allow-iff rule used throughout the pipeline: a request is
allowed if and only if at least one statement allows it and no statement
explicitly denies it.  These pure functions double as the ground-truth oracle
behind policy-correctness theorems, so the matcher is written directly
(two-pointer wildcard walk) rather than via regex translation — the test
suite keeps a regex-based reference to check it against.

Caveat, stated loudly: Condition blocks are parsed and carried but never
evaluated.  Any statement that carries conditions is treated as matching,
i.e. evaluation over-approximates conditional grants.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Union

from .errors import PolicyFormatError

__all__ = [
    "ANY_PRINCIPAL",
    "AccessRequest",
    "Decision",
    "Effect",
    "PolicyDocument",
    "PolicyStatement",
    "enumerate_universe",
    "evaluate",
    "load_policy_csv",
    "match_pattern",
    "parse_policy",
]

ANY_PRINCIPAL = "*"
WITNESS_TOKEN = "w"


class Effect(str, Enum):
    ALLOW = "Allow"
    DENY = "Deny"


@dataclass(frozen=True)
class PolicyStatement:
    effect: Effect
    actions: tuple[str, ...]
    resources: tuple[str, ...]
    principals: tuple[str, ...] = (ANY_PRINCIPAL,)
    conditions: tuple[tuple[str, Any], ...] = ()
    extras: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self) -> None:
        if not self.actions:
            raise PolicyFormatError("Action", "empty after normalization")
        if not self.resources:
            raise PolicyFormatError("Resource", "empty after normalization")


@dataclass(frozen=True)
class PolicyDocument:
    statements: tuple[PolicyStatement, ...]
    source_name: str = ""

    def __post_init__(self) -> None:
        if not self.statements:
            raise PolicyFormatError("Statement", "policy has no statements")


@dataclass(frozen=True)
class AccessRequest:
    action: str
    resource: str
    principal: str = "anyone"

    def __post_init__(self) -> None:
        if not (self.action and self.resource and self.principal):
            raise ValueError("request fields must be non-empty")


@dataclass(frozen=True)
class Decision:
    outcome: Effect
    matched_allow: tuple[int, ...] = ()
    matched_deny: tuple[int, ...] = ()

    @property
    def allowed(self) -> bool:
        return self.outcome is Effect.ALLOW


# ---------------------------------------------------------------------------
# parsing

def _as_list(value: Any) -> list[Any]:
    if value is None:
        return []
    return list(value) if isinstance(value, list) else [value]


def _principals_of(raw: Any) -> tuple[str, ...]:
    if raw is None:
        return (ANY_PRINCIPAL,)
    if isinstance(raw, dict):
        # {"AWS": [...]} / {"Service": "..."} — flatten all entries.
        flat: list[str] = []
        for sub in raw.values():
            flat.extend(str(v) for v in _as_list(sub))
        return tuple(flat) or (ANY_PRINCIPAL,)
    vals = tuple(str(v) for v in _as_list(raw))
    return vals or (ANY_PRINCIPAL,)


def parse_policy(source: Union[str, dict], source_name: str = "") -> PolicyDocument:
    """Parse a JSON policy document.

    Scalar Action/Resource/Principal fields are normalized to lists; a
    missing Principal means anyone.  A top-level ``policy_json`` wrapper is
    unwrapped.  NotAction/NotResource/NotPrincipal are rejected — negated
    statements are outside this evaluator's semantics.
    """
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise PolicyFormatError("document", f"invalid JSON: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise PolicyFormatError("document", "expected a JSON object")
    if "policy_json" in doc:
        doc = doc["policy_json"]
        if isinstance(doc, str):
            doc = json.loads(doc)
    raw_statements = doc.get("Statement")
    if raw_statements is None:
        raise PolicyFormatError("Statement")
    statements = []
    for pos, raw in enumerate(_as_list(raw_statements)):
        if not isinstance(raw, dict):
            raise PolicyFormatError("Statement", f"statement {pos} is not an object")
        for banned in ("NotAction", "NotResource", "NotPrincipal"):
            if banned in raw:
                raise PolicyFormatError(banned, "negated statements are unsupported")
        effect_raw = raw.get("Effect")
        if effect_raw not in (Effect.ALLOW.value, Effect.DENY.value):
            raise PolicyFormatError("Effect", f"statement {pos}: {effect_raw!r}")
        actions = tuple(str(a) for a in _as_list(raw.get("Action")))
        if not actions:
            raise PolicyFormatError("Action", f"statement {pos}")
        resources = tuple(str(r) for r in _as_list(raw.get("Resource")))
        if not resources:
            raise PolicyFormatError("Resource", f"statement {pos}")
        conditions = raw.get("Condition") or {}
        if not isinstance(conditions, dict):
            raise PolicyFormatError("Condition", f"statement {pos}")
        known = {"Effect", "Action", "Resource", "Principal", "Condition", "Sid"}
        extras = tuple(sorted((k, json.dumps(v, sort_keys=True))
                              for k, v in raw.items() if k not in known))
        statements.append(PolicyStatement(
            effect=Effect(effect_raw),
            actions=actions,
            resources=resources,
            principals=_principals_of(raw.get("Principal")),
            conditions=tuple(sorted((k, json.dumps(v, sort_keys=True))
                                    for k, v in conditions.items())),
            extras=extras,
        ))
    return PolicyDocument(tuple(statements), source_name=source_name)


def load_policy_csv(text: str) -> list[PolicyDocument]:
    """Load policies from a CSV with columns (problem_name, policy_json)."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"problem_name", "policy_json"} <= set(reader.fieldnames):
        raise PolicyFormatError("csv", "expected columns problem_name, policy_json")
    return [parse_policy(row["policy_json"], source_name=row["problem_name"])
            for row in reader]


# ---------------------------------------------------------------------------
# matching and evaluation

def match_pattern(pattern: str, value: str) -> bool:
    """Wildcard match: ``*`` any substring, ``?`` any single char, else exact.

    Iterative two-pointer walk with star backtracking; case-sensitive.
    """
    p = v = 0
    star = -1
    star_v = 0
    while v < len(value):
        if p < len(pattern) and (pattern[p] == "?" or pattern[p] == value[v]):
            p += 1
            v += 1
        elif p < len(pattern) and pattern[p] == "*":
            star = p
            star_v = v
            p += 1
        elif star != -1:
            p = star + 1
            star_v += 1
            v = star_v
        else:
            return False
    while p < len(pattern) and pattern[p] == "*":
        p += 1
    return p == len(pattern)


def _statement_matches(stmt: PolicyStatement, request: AccessRequest) -> bool:
    if not any(match_pattern(a, request.action) for a in stmt.actions):
        return False
    if not any(match_pattern(r, request.resource) for r in stmt.resources):
        return False
    principal_ok = any(
        p == ANY_PRINCIPAL or match_pattern(p, request.principal)
        for p in stmt.principals
    )
    # Conditions are carried but not evaluated: a conditioned statement is
    # treated as matching (over-approximation).
    return principal_ok


def evaluate(policy: PolicyDocument, request: AccessRequest) -> Decision:
    """Allow iff some statement allows and none denies; default deny."""
    matched_allow = []
    matched_deny = []
    for idx, stmt in enumerate(policy.statements):
        if _statement_matches(stmt, request):
            (matched_allow if stmt.effect is Effect.ALLOW else matched_deny).append(idx)
    outcome = Effect.ALLOW if matched_allow and not matched_deny else Effect.DENY
    return Decision(outcome, tuple(matched_allow), tuple(matched_deny))


# ---------------------------------------------------------------------------
# canonical request universe

def instantiate_pattern(pattern: str, witness: str = WITNESS_TOKEN) -> str:
    """Replace wildcards with a fixed witness token; the result is matched by
    the pattern that produced it."""
    return pattern.replace("*", witness).replace("?", witness)


def literal_actions(policy: PolicyDocument) -> list[str]:
    """Distinct action patterns in first-appearance order, instantiated."""
    seen: dict[str, None] = {}
    for stmt in policy.statements:
        for action in stmt.actions:
            seen.setdefault(instantiate_pattern(action), None)
    return list(seen)


def resource_patterns(policy: PolicyDocument) -> list[str]:
    """Distinct resource patterns in first-appearance order."""
    seen: dict[str, None] = {}
    for stmt in policy.statements:
        for res in stmt.resources:
            seen.setdefault(res, None)
    return list(seen)


def enumerate_universe(policy: PolicyDocument,
                       principal: str = "anyone") -> list[AccessRequest]:
    """Canonical requests: every literal action crossed with every resource
    pattern's witness instantiation, deduplicated in order."""
    requests: dict[AccessRequest, None] = {}
    for action in literal_actions(policy):
        for pattern in resource_patterns(policy):
            requests.setdefault(
                AccessRequest(action, instantiate_pattern(pattern), principal), None)
    return list(requests)
