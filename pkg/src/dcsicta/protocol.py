"""Full cryptographic protocol: rounds of ciphertexts over a resolution tree.

`EpochView` is everything a bystander sees and checks: it derives pad bases,
combines ciphertexts, verifies retransmission proofs, excludes disruptors,
applies the skip policy and runs rule-violation investigations.  It emits the
transcript records.  Replay drives the same class from recorded inputs.

`ProtocolRunner` plays the participants (honest or scripted adversaries) on
top of a view, epoch after epoch.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

from .group import (
    Element,
    GroupParams,
    Message,
    code_word,
    decode_code_word,
    encode_message,
    outcome_to_json,
)
from .pads import TRANSPARENT, PadBackend, ParticipantKeys, PublicKey, derive_bases, round_nonce
from .sicta import (
    OPTIMIZED,
    EPOCH_DONE,
    CoinScript,
    GroupAlgebra,
    ParticipantCrState,
    PlanKind,
    ResolutionTree,
    Status,
    coin_stream,
    recover_sibling,
)
from .verification import (
    Evidence,
    InvestigationCase,
    Verdict,
    Violation,
    detect_rule_violations,
    investigate_rule_violation,
    investigation_statement,
    proof_context,
    verify_round,
)
from .zkp import (
    OR2,
    CiphertextHistory,
    Proof,
    ProofError,
    build_retransmission_statement,
    challenge,
    prove_neqdl,
    prove_or2,
)

TRANSCRIPT_VERSION = 1
MAX_NODE = 1 << 62


class ProtocolError(RuntimeError):
    """Inputs inconsistent with the protocol state (wrong node, roster mismatch...)."""


class StrategyTag(str, Enum):
    HONEST = "honest"
    INJECTOR = "injector"
    CANCELLER = "example-two-canceller"
    RULE_TRANSMIT = "rule-violator-transmit"
    RULE_SILENT = "rule-violator-silent"
    ALWAYS_COLLIDE = "always-collide"
    INVALID_PROOF = "invalid-proof"

    @property
    def needs_message(self) -> bool:
        return self in (StrategyTag.HONEST, StrategyTag.RULE_TRANSMIT,
                        StrategyTag.RULE_SILENT, StrategyTag.ALWAYS_COLLIDE)


def canonical_strategy(name: str) -> StrategyTag:
    key = name.strip().lower().replace("_", "-")
    aliases = {"injector-mid-epoch": "injector", "canceller": "example-two-canceller",
               "always-collider": "always-collide"}
    return StrategyTag(aliases.get(key, key))


def _entries_json(params: GroupParams, roster, bases, ciphertexts, proofs) -> list:
    out = []
    for i in roster:
        proof = proofs.get(i)
        out.append([i, params.to_hex(bases[i]), params.to_hex(ciphertexts[i]),
                    None if proof is None else proof.to_json()])
    return out


def _copy_history(h: CiphertextHistory, node: int, A: Element, O: Element) -> CiphertextHistory:
    bases, cts = dict(h.bases), dict(h.ciphertexts)
    bases[node], cts[node] = A, O
    return CiphertextHistory(bases, cts)


class EpochView:
    def __init__(self, params: GroupParams, epoch: int, roster: Sequence[PublicKey], *,
                 variant: str, skip_threshold: Optional[int], setup_seed: bytes,
                 backend: PadBackend = TRANSPARENT):
        self.params = params
        self.epoch = epoch
        self.roster = list(roster)
        self.variant = variant
        self.setup_seed = setup_seed
        self.backend = backend
        self.tree = ResolutionTree(GroupAlgebra(params), epoch, skip_threshold)
        self.histories = {k.index: CiphertextHistory() for k in self.roster}
        self.records: list[dict] = []
        self.verdict = Verdict()
        self.records.append({"type": "epoch-start", "epoch": epoch,
                             "roster": [k.index for k in self.roster]})

    @property
    def indices(self) -> list[int]:
        return [k.index for k in self.roster]

    @property
    def public_keys(self) -> dict:
        return {k.index: k.y for k in self.roster}

    def next_plan(self):
        return self.tree.schedule_next()

    def derive_bases(self, node: int, attempt: int) -> dict:
        vals = derive_bases(self.params, self.roster, round_nonce(self.epoch, node, attempt),
                            self.setup_seed, self.backend)
        return dict(zip(self.indices, vals))

    def _exclude(self, violators) -> None:
        bad = set(violators)
        self.roster = [k for k in self.roster if k.index not in bad]
        for i in bad:
            self.histories.pop(i, None)

    def _emit_violations(self, verdict: Verdict) -> None:
        for v in verdict.violations:
            self.records.append(v.to_json(self.params))
        self.verdict.extend(verdict)

    def _after_resolve(self, node: int) -> None:
        if self.tree.nodes[node].status is Status.SKIPPED:
            self._emit_violations(Verdict([Violation(None, Evidence.BRANCH_SKIPPED, node, self.epoch)]))

    def submit_transmit(self, node: int, attempt: int, bases: Mapping[int, Element],
                        ciphertexts: Mapping[int, Element],
                        proofs: Mapping[int, Optional[Proof]]) -> Verdict:
        plan = self.next_plan()
        if plan is EPOCH_DONE or plan.node != node or plan.kind is not PlanKind.TRANSMIT:
            raise ProtocolError(f"node {node} is not the next transmitted round")
        if node > MAX_NODE:
            raise ProtocolError("resolution tree too deep")
        roster = self.indices
        if sorted(ciphertexts) != sorted(roster) or sorted(bases) != sorted(roster):
            raise ProtocolError("ciphertexts do not match the roster")
        p = self.params
        if not all(p.is_element(bases[i]) and p.is_element(ciphertexts[i]) for i in roster):
            raise ProtocolError(f"round {node} carries a value outside the group")
        for i in roster:
            h = self.histories[i]
            h.bases[node], h.ciphertexts[node] = bases[i], ciphertexts[i]
        verdict = verify_round(p, self.tree, node, self.histories, proofs,
                               self.public_keys, self.epoch)
        record = {"type": "round", "epoch": self.epoch, "round": node, "attempt": attempt,
                  "entries": _entries_json(p, roster, bases, ciphertexts, proofs)}
        if verdict.violators:
            record.update(status="lost", C=None, outcome=None)
            self.records.append(record)
            self._emit_violations(verdict)
            self._exclude(verdict.violators)
            for h in self.histories.values():
                h.bases.pop(node, None)
                h.ciphertexts.pop(node, None)
            return verdict
        C = p.prod(ciphertexts[i] for i in roster)
        outcome = self.tree.apply_round(node, C)
        record.update(status="accepted", C=p.to_hex(C), outcome=outcome_to_json(outcome))
        self.records.append(record)
        self._after_resolve(node)
        return verdict

    def infer(self, node: int):
        outcome = self.tree.infer(node)
        self.records.append({"type": "infer", "epoch": self.epoch, "round": node,
                             "C": self.params.to_hex(self.tree.nodes[node].C),
                             "outcome": outcome_to_json(outcome)})
        self._after_resolve(node)
        return outcome

    def cases(self) -> list[InvestigationCase]:
        if self.variant != OPTIMIZED or not self.tree.done:
            return []
        return detect_rule_violations(self.params, self.tree)

    def investigation_statement(self, case: InvestigationCase, index: int):
        k = next(k for k in self.roster if k.index == index)
        return investigation_statement(self.params, case, self.tree, self.histories[index], k.y)

    def submit_investigation(self, case: InvestigationCase,
                             proofs: Mapping[int, Optional[Proof]]) -> Verdict:
        p = self.params
        verdict = investigate_rule_violation(p, case, self.tree, self.histories,
                                             self.public_keys, proofs, self.epoch)
        self.records.append({
            "type": "investigation", "epoch": self.epoch, "round": case.node,
            "case": case.kind, "small": p.to_hex(case.small), "large": p.to_hex(case.large),
            "proofs": [[i, None if proofs.get(i) is None else proofs[i].to_json()]
                       for i in self.indices],
        })
        self._emit_violations(verdict)
        self._exclude(verdict.violators)
        return verdict

    def finish(self) -> dict:
        rec = {
            "type": "epoch-end", "epoch": self.epoch,
            "transmitted": self.tree.transmitted_ids(),
            "inferred": self.tree.inferred_ids(),
            "delivered": [m.payload.hex() for _, m in self.tree.messages()],
            "skipped": list(self.tree.skipped),
            "roster": self.indices,
        }
        self.records.append(rec)
        return rec


def header_record(params: GroupParams, keys: Sequence[PublicKey], variant: str,
                  skip_threshold: Optional[int], setup_seed: bytes,
                  backend: PadBackend = TRANSPARENT) -> dict:
    return {
        "type": "header",
        "version": TRANSCRIPT_VERSION,
        "params": params.header(),
        "roster": [[k.index, params.to_hex(k.y)] for k in keys],
        "variant": variant,
        "skip_threshold": skip_threshold,
        "setup_seed": setup_seed.hex(),
        "backend": backend.name,
    }


def end_record(epochs: int) -> dict:
    return {"type": "end", "epochs": epochs}


# participants


@dataclass
class EpochReport:
    epoch: int
    transmitted: list
    inferred: list
    rounds_used: int
    delivered: list = field(default_factory=list)   # (index, payload, round counter)
    requeued: list = field(default_factory=list)    # (index, payload)
    verdict: Verdict = field(default_factory=Verdict)


def forge_or2(params: GroupParams, stmt, rng: random.Random, context: bytes) -> Proof:
    """What a cheater without a witness can do: honest-looking commitments, random responses."""
    q = params.q
    t = tuple(params.gexp(rng.randrange(q)) for _ in range(4))
    c = challenge(params, OR2, (stmt.left.base, stmt.left.value, stmt.left.y,
                                stmt.right.base, stmt.right.value, stmt.right.y, *t), context)
    c1 = rng.randrange(q)
    return Proof(OR2, t, (c1, (c - c1) % q), (rng.randrange(q), rng.randrange(q)))


class ProtocolRunner:
    def __init__(self, params: GroupParams, keys: Sequence[ParticipantKeys], *, variant: str,
                 seed: int, setup_seed: bytes, skip_threshold: Optional[int] = 5,
                 strategies: Optional[Mapping[int, StrategyTag]] = None,
                 script: Optional[CoinScript] = None, backend: PadBackend = TRANSPARENT):
        self.params = params
        self.keys = {k.index: k for k in keys}
        self.variant = variant
        self.skip_threshold = skip_threshold
        self.setup_seed = setup_seed
        self.backend = backend
        self.strategies = dict(strategies or {})
        self.roster = [k.index for k in keys]
        self.participants = {
            k.index: ParticipantCrState(k.index, coin_stream(seed, k.index), script)
            for k in keys
        }
        self.rng = random.Random(f"dcsicta/prover/{seed}")
        self.records = [header_record(params, [k.public() for k in keys], variant,
                                      skip_threshold, setup_seed, backend)]
        self.rounds = 0
        self.epochs = 0
        self._deviated: set = set()

    def strategy(self, i: int) -> StrategyTag:
        return self.strategies.get(i, StrategyTag.HONEST)

    # decisions

    def _goes_left(self, p: ParticipantCrState, j: int, C_j: Element) -> bool:
        sib = recover_sibling(self.params, C_j, p.element)
        sib_code = None if sib is None else decode_code_word(self.params, sib)
        rule = p.rule_applies(j, sib_code, self.variant == OPTIMIZED)
        s = self.strategy(p.index)
        if s is StrategyTag.ALWAYS_COLLIDE:
            return True
        if rule:
            honest = p.code < sib_code
            if s is StrategyTag.RULE_TRANSMIT and not honest:
                return True
            if s is StrategyTag.RULE_SILENT and honest:
                return False
            return honest
        return p.coin(j)

    def _outgoing(self, view: EpochView, node: int, A: Element, decisions: dict):
        """(O, proof) for every roster member at transmitted node `node`."""
        prm = self.params
        cts, proofs = {}, {}
        for i in view.indices:
            p, key, s = self.participants[i], self.keys[i], self.strategy(i)
            include = False
            if node == 1:
                include = p.message is not None
            elif p.node == node // 2 and p.message is not None:
                if i not in decisions:
                    decisions[i] = self._goes_left(p, node // 2, view.tree.nodes[node // 2].C)
                include = decisions[i]
            O = prm.exp(A[i], key.x)
            if include:
                O = O * p.element % prm.p
            forge = False
            if node > 1 and i not in self._deviated:
                if s is StrategyTag.INJECTOR and not include:
                    # a brand-new message slipped into a resolution round
                    O = O * encode_message(prm, (1 << prm.payload_bits) - i) % prm.p
                    forge = True
                elif s is StrategyTag.CANCELLER:
                    E = prm.gexp(self.rng.randrange(1, prm.q))
                    O = O * E % prm.p
                    forge = True
            cts[i] = O
            if node == 1:
                continue
            hist = _copy_history(view.histories[i], node, A[i], O)
            stmt = build_retransmission_statement(prm, node, view.tree, hist.bases,
                                                  hist.ciphertexts, key.y)
            ctx = proof_context("retx", view.epoch, node, i)
            if forge:
                self._deviated.add(i)
                proofs[i] = forge_or2(prm, stmt, self.rng, ctx)
                continue
            proof = prove_or2(prm, stmt, 1 if include else 2, key.x, self.rng, ctx)
            if s is StrategyTag.INVALID_PROOF and i not in self._deviated:
                self._deviated.add(i)
                proof = Proof(proof.kind, proof.commitments, proof.challenges,
                              ((proof.responses[0] + 1) % prm.q, proof.responses[1]))
            proofs[i] = proof
        return cts, proofs

    def _investigation_proofs(self, view: EpochView, case: InvestigationCase) -> dict:
        proofs = {}
        for i in view.indices:
            stmt = view.investigation_statement(case, i)
            ctx = proof_context("investigate", view.epoch, case.node, i)
            try:
                proofs[i] = prove_neqdl(self.params, stmt, self.keys[i].x, self.rng, ctx)
            except ProofError:
                proofs[i] = None
        return proofs

    # epochs

    def run_epoch(self, epoch: int, messages: Mapping[int, int],
                  on_round: Optional[Callable[[int], None]] = None) -> EpochReport:
        """Resolve one epoch; `messages` maps participant index -> payload value."""
        prm = self.params
        for i in self.roster:
            p = self.participants[i]
            m = messages.get(i)
            if m is None:
                p.start_epoch(None)
            else:
                p.start_epoch(m, code=code_word(prm, m), element=encode_message(prm, m))
        view = EpochView(prm, epoch, [self.keys[i].public() for i in self.roster],
                         variant=self.variant, skip_threshold=self.skip_threshold,
                         setup_seed=self.setup_seed, backend=self.backend)
        report = EpochReport(epoch, [], [], 0)
        while True:
            plan = view.next_plan()
            if plan is EPOCH_DONE:
                break
            node = plan.node
            if plan.kind is PlanKind.INFER:
                view.infer(node)
            else:
                attempt = 0
                # a replayed round repeats the choices made in the lost attempt
                decisions: dict = {}
                while True:
                    if len(view.roster) < 2:
                        raise ProtocolError("fewer than two participants remain")
                    A = view.derive_bases(node, attempt)
                    cts, proofs = self._outgoing(view, node, A, decisions)
                    verdict = view.submit_transmit(node, attempt, A, cts, proofs)
                    self.rounds += 1
                    report.rounds_used += 1
                    if on_round is not None:
                        on_round(self.rounds)
                    if not verdict.violators:
                        break
                    attempt += 1
                for i, left in decisions.items():
                    if i in view.histories:
                        self.participants[i].moved(node // 2, left)
            self._settle(view, node, report)
        for case in view.cases():
            view.submit_investigation(case, self._investigation_proofs(view, case))
        view.finish()
        self.roster = view.indices
        self.records.extend(view.records)
        report.transmitted = view.tree.transmitted_ids()
        report.inferred = view.tree.inferred_ids()
        report.verdict = view.verdict
        self.tree = view.tree
        self.epochs += 1
        return report

    def transcript_records(self) -> list[dict]:
        """All records so far, closed by an end record so truncation is detectable."""
        return self.records + [end_record(self.epochs)]

    def _settle(self, view: EpochView, node: int, report: EpochReport) -> None:
        n = view.tree.nodes[node]
        for i in view.indices:
            p = self.participants[i]
            if p.message is None or p.node != node:
                continue
            if isinstance(n.outcome, Message) and n.outcome.value == p.message:
                report.delivered.append((i, p.message, self.rounds))
                p.message = None
            elif n.status is Status.SKIPPED:
                report.requeued.append((i, p.message))
                p.message = None
