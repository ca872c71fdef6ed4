"""Proof obligations, disruptor verdicts, rule-violation investigations and
the non-split skip policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Optional

from .group import Collision, Element, GroupParams, Idle, decode_code_word
from .zkp import (
    CiphertextHistory,
    NeqDlStatement,
    Proof,
    build_retransmission_statement,
    verify_neqdl,
    verify_or2,
    virtual_ciphertext,
)

if TYPE_CHECKING:
    from .sicta import ResolutionTree

DEFAULT_SKIP_THRESHOLD = 5


class Evidence(str, Enum):
    MISSING_PROOF = "missing-proof"
    INVALID_PROOF = "invalid-proof"
    RULE_VIOLATION = "rule-violation"
    BRANCH_SKIPPED = "branch-skipped"


@dataclass(frozen=True)
class Violation:
    participant: Optional[int]
    evidence: Evidence
    node: int
    epoch: int = 0
    # rule violations: the revealed message and the round whose proofs were demanded
    revealed: Optional[Element] = None
    investigated: Optional[int] = None

    def to_json(self, params: GroupParams) -> dict:
        d = {
            "type": "verdict",
            "epoch": self.epoch,
            "round": self.node,
            "participant": self.participant,
            "evidence": self.evidence.value,
        }
        if self.revealed is not None:
            d["revealed"] = params.to_hex(self.revealed)
        if self.investigated is not None:
            d["investigated"] = self.investigated
        return d

    @classmethod
    def from_json(cls, d: dict) -> Violation:
        rev = d.get("revealed")
        return cls(
            participant=d["participant"],
            evidence=Evidence(d["evidence"]),
            node=d["round"],
            epoch=d["epoch"],
            revealed=None if rev is None else int(rev, 16),
            investigated=d.get("investigated"),
        )


@dataclass
class Verdict:
    violations: list = field(default_factory=list)

    @property
    def violators(self) -> list[int]:
        return sorted({v.participant for v in self.violations if v.participant is not None})

    @property
    def clean(self) -> bool:
        return not self.violations

    def extend(self, other: Verdict) -> None:
        self.violations.extend(other.violations)


# skip policy


class Decision(str, Enum):
    CONTINUE = "continue"
    SKIP = "skip"


@dataclass
class BranchMonitor:
    node: int
    count: int = 0
    threshold: int = DEFAULT_SKIP_THRESHOLD


def monitor_and_skip(monitor: BranchMonitor, split: bool) -> Decision:
    if split:
        monitor.count = 0
        return Decision.CONTINUE
    monitor.count += 1
    return Decision.SKIP if monitor.count >= monitor.threshold else Decision.CONTINUE


# per-round obligations


def proof_context(kind: str, epoch: int, node: int, index: int) -> bytes:
    return b"|".join([kind.encode(), str(epoch).encode(), str(node).encode(), str(index).encode()])


def retransmission_statements(params: GroupParams, tree, node: int,
                              histories: Mapping[int, CiphertextHistory],
                              public_keys: Mapping[int, Element]) -> dict:
    return {
        i: build_retransmission_statement(params, node, tree, h.bases, h.ciphertexts, public_keys[i])
        for i, h in histories.items()
    }


def verify_round(params: GroupParams, tree, node: int,
                 histories: Mapping[int, CiphertextHistory],
                 proofs: Mapping[int, Optional[Proof]],
                 public_keys: Mapping[int, Element], epoch: int = 0) -> Verdict:
    """Check every roster member's retransmission proof for transmitted node `node`.

    `histories` must already contain each participant's base and ciphertext
    for `node`.  The root carries no obligation.
    """
    verdict = Verdict()
    if node == 1:
        return verdict
    stmts = retransmission_statements(params, tree, node, histories, public_keys)
    for i in sorted(stmts):
        proof = proofs.get(i)
        if proof is None:
            verdict.violations.append(Violation(i, Evidence.MISSING_PROOF, node, epoch))
        elif not verify_or2(params, stmts[i], proof, proof_context("retx", epoch, node, i)):
            verdict.violations.append(Violation(i, Evidence.INVALID_PROOF, node, epoch))
    return verdict


# deterministic-rule investigation


class InvestigationError(ValueError):
    """The transcript does not show the claimed rule-violation pattern."""


BOTH_TRANSMIT = "both-transmit"
BOTH_SILENT = "both-silent"


@dataclass(frozen=True)
class InvestigationCase:
    kind: str
    node: int               # the two-message collision whose first split failed
    small: Element          # encoded messages, ordered by code word
    large: Element

    @property
    def proof_round(self) -> int:
        return 2 * self.node if self.kind == BOTH_TRANSMIT else self.node


def detect_rule_violations(params: GroupParams, tree: ResolutionTree) -> list[InvestigationCase]:
    """Two-message collisions that did not split as the deterministic rule demands.

    Only the topmost node holding a given pair is checked; below a broken
    node the honest sender falls back to coin flips.  A swapped split
    (larger message first) needs two cheaters and is not investigated.
    """
    cases = []
    for j in sorted(tree.nodes):
        n = tree.nodes[j]
        if not isinstance(n.outcome, Collision):
            continue
        found = tree.subtree_message_nodes(j)
        if found is None or len(found) != 2:
            continue
        if j > 1:
            above = tree.subtree_message_nodes(j // 2)
            if above is not None and len(above) == 2:
                continue
        small, large = sorted((tree.nodes[k].C for k in found),
                              key=lambda e: decode_code_word(params, e))
        left = tree.nodes[2 * j]
        if isinstance(left.outcome, Idle):
            cases.append(InvestigationCase(BOTH_SILENT, j, small, large))
        elif isinstance(left.outcome, Collision) and left.C == n.C:
            cases.append(InvestigationCase(BOTH_TRANSMIT, j, small, large))
    return cases


def investigation_statement(params: GroupParams, case: InvestigationCase, tree,
                            history: CiphertextHistory, y: Element) -> NeqDlStatement:
    if case.kind == BOTH_TRANSMIT:
        j2 = 2 * case.node
        return NeqDlStatement(history.bases[j2],
                              params.div(history.ciphertexts[j2], case.large), y)
    base, value = virtual_ciphertext(params, case.node, tree, history.bases, history.ciphertexts)
    return NeqDlStatement(base, params.div(value, case.small), y)


def _check_case(params: GroupParams, case: InvestigationCase, tree) -> None:
    n = tree.nodes.get(case.node)
    left = tree.nodes.get(2 * case.node)
    if n is None or left is None or n.C != params.mul(case.small, case.large):
        raise InvestigationError("collision value does not match the revealed messages")
    if case.kind == BOTH_TRANSMIT and left.C != n.C:
        raise InvestigationError("round 2j does not contain both messages")
    if case.kind == BOTH_SILENT and left.C != 1:
        raise InvestigationError("round 2j is not idle")
    if case.kind not in (BOTH_TRANSMIT, BOTH_SILENT):
        raise InvestigationError(f"unknown case {case.kind!r}")


def investigate_rule_violation(params: GroupParams, case: InvestigationCase, tree,
                               histories: Mapping[int, CiphertextHistory],
                               public_keys: Mapping[int, Element],
                               proofs: Mapping[int, Optional[Proof]],
                               epoch: int = 0) -> Verdict:
    """Everyone proves they are not the one who broke the rule; whoever cannot is flagged."""
    _check_case(params, case, tree)
    revealed = case.large if case.kind == BOTH_TRANSMIT else case.small
    verdict = Verdict()
    for i in sorted(histories):
        stmt = investigation_statement(params, case, tree, histories[i], public_keys[i])
        proof = proofs.get(i)
        ctx = proof_context("investigate", epoch, case.node, i)
        if proof is None or not verify_neqdl(params, stmt, proof, ctx):
            verdict.violations.append(Violation(
                i, Evidence.RULE_VIOLATION, case.node, epoch,
                revealed=revealed, investigated=case.proof_round))
    return verdict

