import random

import pytest

from dcsicta.group import encode_message
from dcsicta.pads import keygen
from dcsicta.protocol import EpochView, ProtocolRunner, StrategyTag
from dcsicta.sicta import OPTIMIZED, STANDARD, EPOCH_DONE, ParticipantCrState, coin_stream, resolve_epoch_fast
from dcsicta.verification import (
    BOTH_SILENT,
    BOTH_TRANSMIT,
    BranchMonitor,
    Decision,
    Evidence,
    InvestigationCase,
    InvestigationError,
    Verdict,
    Violation,
    detect_rule_violations,
    investigate_rule_violation,
    monitor_and_skip,
)


def _runner(params, keys, variant=OPTIMIZED, seed=0, **kw):
    return ProtocolRunner(params, keys, variant=variant, seed=seed, setup_seed=b"v", **kw)


def test_monitor():
    m = BranchMonitor(4, 0, 3)
    assert monitor_and_skip(m, True) is Decision.CONTINUE and m.count == 0
    assert monitor_and_skip(m, False) is Decision.CONTINUE and m.count == 1
    assert monitor_and_skip(m, False) is Decision.CONTINUE
    assert monitor_and_skip(m, False) is Decision.SKIP
    assert monitor_and_skip(m, True) is Decision.CONTINUE and m.count == 0


def test_violation_json_round_trip(params):
    v = Violation(3, Evidence.RULE_VIOLATION, 1, 2, revealed=encode_message(params, 9), investigated=2)
    d = v.to_json(params)
    assert d["type"] == "verdict" and d["evidence"] == "rule-violation"
    assert Violation.from_json(d) == v
    assert Verdict([v, Violation(None, Evidence.BRANCH_SKIPPED, 32)]).violators == [3]


def test_honest_epochs_have_no_verdicts(params, keys5):
    for variant in (STANDARD, OPTIMIZED):
        runner = _runner(params, keys5, variant, seed=4)
        rng = random.Random(4)
        for e in range(30):
            senders = rng.sample(range(1, 6), rng.randint(0, 5))
            rep = runner.run_epoch(e, {i: 50 + i + 10 * e for i in senders})
            # skipped branches accuse nobody; honest senders must never be named
            assert rep.verdict.violators == []
            assert {v.evidence for v in rep.verdict.violations} <= {Evidence.BRANCH_SKIPPED}
            assert len(rep.delivered) + len(rep.requeued) == len(senders)


def _first_round_view(params, keys, msgs):
    """Epoch view after an honest root round, with node 2 next."""
    view = EpochView(params, 0, [k.public() for k in keys], variant=STANDARD,
                     skip_threshold=5, setup_seed=b"v")
    A = view.derive_bases(1, 0)
    O = {k.index: params.exp(A[k.index], k.x) * msgs.get(k.index, 1) % params.p for k in keys}
    view.submit_transmit(1, 0, A, O, {})
    return view


def test_missing_proof_flagged_and_round_replayed(params, keys5):
    E1, E2 = encode_message(params, 3), encode_message(params, 4)
    view = _first_round_view(params, keys5, {1: E1, 2: E2})
    A = view.derive_bases(2, 0)
    O = {k.index: params.exp(A[k.index], k.x) for k in keys5}
    verdict = view.submit_transmit(2, 0, A, O, {})
    assert [(v.participant, v.evidence) for v in verdict.violations] == \
        [(i, Evidence.MISSING_PROOF) for i in range(1, 6)]
    assert view.records[-6]["status"] == "lost"


def test_injector_flagged_invalid_proof(params, keys5):
    runner = _runner(params, keys5, STANDARD, strategies={4: StrategyTag.INJECTOR})
    rep = runner.run_epoch(0, {1: 10, 2: 11, 3: 12})
    assert [(v.participant, v.evidence) for v in rep.verdict.violations] == [(4, Evidence.INVALID_PROOF)]
    assert sorted(m for _, m, _ in rep.delivered) == [10, 11, 12]
    assert runner.roster == [1, 2, 3, 5]


@pytest.mark.parametrize("tag,kind", [(StrategyTag.RULE_TRANSMIT, BOTH_TRANSMIT),
                                      (StrategyTag.RULE_SILENT, BOTH_SILENT)])
def test_rule_violators(params, keys5, tag, kind):
    # violator 3 holds the larger (transmit) or smaller (silent) message
    msgs = {1: 20, 3: 30} if tag is StrategyTag.RULE_TRANSMIT else {1: 20, 3: 10}
    runner = _runner(params, keys5, strategies={3: tag})
    rep = runner.run_epoch(0, msgs)
    cases = detect_rule_violations(params, runner.tree)
    assert [(c.kind, c.node) for c in cases] == [(kind, 1)]
    [v] = rep.verdict.violations
    assert (v.participant, v.evidence, v.node) == (3, Evidence.RULE_VIOLATION, 1)
    assert v.investigated == (2 if kind == BOTH_TRANSMIT else 1)
    big, small = max(msgs.values()), min(msgs.values())
    assert v.revealed == encode_message(params, big if kind == BOTH_TRANSMIT else small)


def test_honest_two_collision_not_investigated(params, keys5):
    runner = _runner(params, keys5)
    runner.run_epoch(0, {1: 20, 3: 30})
    assert runner.tree.transmitted_ids() == [1, 2]
    assert detect_rule_violations(params, runner.tree) == []


def test_investigation_rejects_wrong_case(params, keys5):
    runner = _runner(params, keys5)
    runner.run_epoch(0, {1: 20, 3: 30})
    a, b = encode_message(params, 20), encode_message(params, 30)
    view_hist = {}
    for case in (InvestigationCase(BOTH_TRANSMIT, 1, a, b), InvestigationCase(BOTH_SILENT, 1, a, b),
                 InvestigationCase(BOTH_SILENT, 1, a, a)):
        with pytest.raises(InvestigationError):
            investigate_rule_violation(params, case, runner.tree, view_hist, {}, {})


def test_always_collide_pair_skipped(params, keys5):
    runner = _runner(params, keys5, STANDARD,
                     strategies={2: StrategyTag.ALWAYS_COLLIDE, 3: StrategyTag.ALWAYS_COLLIDE})
    rep = runner.run_epoch(0, {2: 5, 3: 6})
    assert [(v.participant, v.evidence, v.node) for v in rep.verdict.violations] == \
        [(None, Evidence.BRANCH_SKIPPED, 32)]
    assert sorted(m for _, m in rep.requeued) == [5, 6]


def _three_collision_nonsplit_rate(trials, seed):
    nonsplit = 0
    ps = [ParticipantCrState(i, coin_stream(seed, i)) for i in range(3)]
    for t in range(trials):
        for p in ps:
            p.start_epoch(t * 3 + p.index)
        left = sum(p.honest_goes_left(1, None, False) for p in ps)
        nonsplit += left in (0, 3)
    return nonsplit / trials


def test_three_collision_nonsplit_quarter():
    assert _three_collision_nonsplit_rate(20_000, 1) == pytest.approx(0.25, abs=0.015)


def test_false_skip_rate_small():
    skips = 0
    trials = 20_000
    ps = [ParticipantCrState(i, coin_stream(9, i)) for i in range(3)]
    for t in range(trials):
        for p in ps:
            p.start_epoch(t * 3 + p.index)
        skips += bool(resolve_epoch_fast(ps, True, skip_threshold=5).skipped)
    assert skips / trials <= 0.002
