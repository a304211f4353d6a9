"""Shared fixture data: the EC2 golden sample, generators, and independent
reference implementations used as test oracles."""

from __future__ import annotations

import random
import re

from proofseek.prover import MockOutcome, MockProver, normalize_step

PROBLEM_NAME = "s3_samples_mutations_ec2_exp_single_ec2_prevent_running_classic_policy_6_0"

EC2_POLICY_JSON = """{
  "policy_json": {
    "Statement": [
      {
        "Effect": "Allow",
        "Action": "ec2:RunInstances",
        "Resource": "arn:aws:ec2:us-east-1:123412341234:*"
      },
      {
        "Effect": "Allow",
        "Action": "ec2:RunInstances",
        "Resource": [
          "arn:aws:ec2:us-east-1::image/ami-*",
          "arn:aws:ec2:us-east-1:123412341243:instance/*",
          "arn:aws:ec2:us-east-1:123412341234:volume/*",
          "arn:aws:ec2:us-east-1:123412341234:network-interface/*",
          "arn:aws:ec2:us-east-1:123412341234:key-pair/*"
        ]
      }
    ]
  }
}"""

GOLDEN_FORMAL_STATEMENT = """datatype ec2_action = RunInstances

datatype ec2_resource = AllResources | Images | Instances | Volumes | NetworkInterfaces | KeyPairs

datatype principal = Anyone

record policy_entry =
  act :: ec2_action
  res :: ec2_resource
  prin :: principal

definition ec2_instance_policy :: policy_entry where
  "ec2_instance_policy = (|
    act = RunInstances,
    res = AllResources,
    prin = Anyone
  |)"

fun policy_allows :: "policy_entry => ec2_action => ec2_resource => bool" where
  "policy_allows pe a r = (act pe = RunInstances ∧ (res pe = AllResources \\/ res pe = r))"

theorem ec2_policy_correctness:
  shows "policy_allows ec2_instance_policy RunInstances AllResources ∧
         policy_allows ec2_instance_policy RunInstances Images ∧
         policy_allows ec2_instance_policy RunInstances Instances ∧
         policy_allows ec2_instance_policy RunInstances Volumes ∧
         policy_allows ec2_instance_policy RunInstances NetworkInterfaces ∧
         policy_allows ec2_instance_policy RunInstances KeyPairs"
  oops
"""

GOLDEN_PROOF_BODY = """proof -
  have "policy_allows ec2_instance_policy RunInstances AllResources"
    by (simp add: ec2_instance_policy_def)
  moreover have "policy_allows ec2_instance_policy RunInstances Images"
    by (simp add: ec2_instance_policy_def)
  moreover have "policy_allows ec2_instance_policy RunInstances Instances"
    by (simp add: ec2_instance_policy_def)
  moreover have "policy_allows ec2_instance_policy RunInstances Volumes"
    by (simp add: ec2_instance_policy_def)
  moreover have "policy_allows ec2_instance_policy RunInstances NetworkInterfaces"
    by (simp add: ec2_instance_policy_def)
  moreover have "policy_allows ec2_instance_policy RunInstances KeyPairs"
    by (simp add: ec2_instance_policy_def)
  ultimately show ?thesis by simp
qed"""

GOLDEN_PROOF_WRAPPED = ("(* Proof of the theorem *)\n(*\n"
                        + GOLDEN_PROOF_BODY + "\n*)")

GOLDEN_INFORMAL_STATEMENT = (
    "The text you provided is a policy statement written in JSON format, "
    "which is typically used in cloud computing environments like Amazon Web "
    "Services (AWS) to define permissions. Here's a breakdown of what it "
    "means in plain English:\n\n1. General Permission:\n - The policy allows "
    'the action "ec2:RunInstances." This means that the user or service with '
    "this policy can start or launch new EC2 instances.\n - This applies to "
    "any resource within the specified AWS account (123412341234) in the "
    '"us-east-1" region.\n\n2. Specific Permissions:\n - Images: use any AMI '
    'in "us-east-1".\n - Instances: manage EC2 instances in 123412341243.\n'
    " - Volumes: manage EBS volumes in 123412341234.\n - Network Interfaces "
    "and Key Pairs: full control in 123412341234.\n\nSummary: This policy "
    "allows launching and managing EC2 instances and their dependencies.")

GOLDEN_INFORMAL_PROOF = (
    "To provide an informal proof or argument supporting the interpretation "
    "of the JSON policy statement, we break it into structured observations:"
    '\n\n1. JSON uses keys like "Effect", "Action", and "Resource" to '
    "structure permissions.\n2. 'Allow' means access is granted; "
    "'ec2:RunInstances' lets the user launch EC2s.\n3. '*' in the ARN means "
    "it applies to all of that type within the account and region.\n"
    "4. Specific ARNs grant permissions to manage AMIs, Instances, Volumes, "
    "Interfaces, and Key Pairs.\n\nConclusion: These combined statements "
    "demonstrate full EC2 launch and management capability.")

GOLDEN_STATE_RECORD = {
    "success": True,
    "i_try": 0,
    "success_stage": "init_proof",
    "has_timeout": False,
    "extra_calls": 0,
    "has_sc": False,
}

PROOF_LISTINGS = (GOLDEN_PROOF_WRAPPED, GOLDEN_FORMAL_STATEMENT)


def accepting_mock(script_texts, config=None, **kwargs) -> MockProver:
    """Mock that accepts exactly these step texts (done inferred at qed)."""
    from proofseek.isar import parse_script
    table: dict[str, MockOutcome] = {}
    for text in script_texts:
        for step in parse_script(text).steps:
            table[normalize_step(step.text)] = MockOutcome("ok")
    return MockProver(table=table, **kwargs, config=config)


# ---------------------------------------------------------------------------
# random Isar script generation

def gen_steps(rng: random.Random, max_depth: int = 4,
              sorry_goals: int = 0) -> tuple[list[str], list[int]]:
    """Generate a step list (one canonical text per step) with block
    structure, optionally turning ``sorry_goals`` goal steps into
    placeholders.  Returns (steps, indices of injected placeholders)."""
    counter = [0]

    def goal_text() -> str:
        counter[0] += 1
        return f'"g{counter[0]}"'

    def block(depth: int) -> list[str]:
        steps: list[str] = []
        for _ in range(rng.randint(1, 3)):
            roll = rng.random()
            if roll < 0.25 and depth < max_depth:
                steps.append(rng.choice(["proof -", "proof (intro conjI)"]))
                steps.extend(block(depth + 1))
                steps.append("qed")
            elif roll < 0.45:
                steps.append(rng.choice(["fix x", 'assume "h0"', "then show ?thesis by simp"]))
            elif roll < 0.70:
                steps.append(f"have {goal_text()} by simp")
            else:
                steps.append(f"moreover have {goal_text()} by (simp add: defs)")
        steps.append(rng.choice(["show ?thesis by auto",
                                 f"have {goal_text()} by blast"]))
        return steps

    steps = ["proof -", *block(1), "qed"] if rng.random() < 0.8 \
        else block(0)
    goal_positions = [i for i, s in enumerate(steps)
                      if s.startswith(("have", "moreover have", "show"))]
    injected: list[int] = []
    for position in rng.sample(goal_positions,
                               min(sorry_goals, len(goal_positions))):
        body = steps[position].rsplit(" by ", 1)[0]
        steps[position] = f"{body} sorry"
        injected.append(position)
    return steps, sorted(injected)


def noisy_text(rng: random.Random, steps: list[str]) -> str:
    """Join steps with randomized whitespace (quote contents are space-free
    so this cannot corrupt tokens)."""
    chunks = []
    for step in steps:
        indent = " " * rng.randint(0, 6)
        body = re.sub(" ", lambda _: rng.choice([" ", "  ", "\n   "]), step)
        chunks.append(indent + body)
    return ("\n" * rng.randint(1, 2)).join(chunks)


def gen_script_text(rng: random.Random, max_depth: int = 4) -> str:
    steps, _ = gen_steps(rng, max_depth)
    return noisy_text(rng, steps)


# ---------------------------------------------------------------------------
# random policies and the independent evaluation oracle

ACTIONS = [f"svc:Act{i}" for i in range(6)] + ["svc:Read*", "ops:*"]
RESOURCES = [f"arn:aws:svc:r1:acct{i % 2}:thing{i}/*" for i in range(6)] \
    + ["*", "arn:aws:svc:r1:acct0:*"]
PRINCIPALS = ["*", "alice", "bob", "svc-?-user"]


def gen_policy_dict(rng: random.Random) -> dict:
    statements = []
    for _ in range(rng.randint(1, 4)):
        statement = {
            "Effect": rng.choice(["Allow", "Allow", "Allow", "Deny"]),
            "Action": rng.sample(ACTIONS, rng.randint(1, 3)),
            "Resource": rng.sample(RESOURCES, rng.randint(1, 3)),
        }
        if rng.random() < 0.4:
            statement["Principal"] = rng.choice(PRINCIPALS)
        statements.append(statement)
    return {"Statement": statements}


def gen_requests(rng: random.Random, policy_dict: dict) -> list[tuple[str, str, str]]:
    requests = []
    for stmt in policy_dict["Statement"]:
        for action in stmt["Action"]:
            for resource in stmt["Resource"]:
                requests.append((action.replace("*", "w").replace("?", "w"),
                                 resource.replace("*", "w").replace("?", "w"),
                                 rng.choice(["anyone", "alice", "svc-x-user"])))
    for _ in range(4):
        requests.append((rng.choice(["svc:Act0", "svc:Other", "x:Nope"]),
                         rng.choice(["arn:aws:svc:r1:acct0:thing0/w", "plain",
                                     "arn:aws:svc:r1:acct1:thing1/deep/w"]),
                         rng.choice(["anyone", "bob"])))
    return requests


def oracle_match(pattern: str, value: str) -> bool:
    """Reference matcher built by regex translation (independent route)."""
    regex = "".join(".*" if c == "*" else "." if c == "?" else re.escape(c)
                    for c in pattern)
    return re.fullmatch(regex, value) is not None


def oracle_decision(policy_dict: dict, action: str, resource: str,
                    principal: str) -> bool:
    """Literal 'some statement allows and none denies' over all statements."""
    def as_list(v):
        return v if isinstance(v, list) else [v]

    def stmt_matches(stmt) -> bool:
        if not any(oracle_match(a, action) for a in as_list(stmt["Action"])):
            return False
        if not any(oracle_match(r, resource) for r in as_list(stmt["Resource"])):
            return False
        principals = as_list(stmt.get("Principal", "*"))
        return any(p == "*" or oracle_match(p, principal) for p in principals)

    allows = any(s["Effect"] == "Allow" and stmt_matches(s)
                 for s in policy_dict["Statement"])
    denies = any(s["Effect"] == "Deny" and stmt_matches(s)
                 for s in policy_dict["Statement"])
    return allows and not denies
