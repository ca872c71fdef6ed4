"""Acceptance criteria 1-9, one test each, one PASS/FAIL line each.

The lines are printed as the tests run (visible with -s) and repeated in the
terminal summary.
"""

import json
import random
import statistics
import time

import pytest

from dcsicta import analytics
from dcsicta.analytics import expected_rounds, mst_estimate
from dcsicta.group import Message, classify, encode_message
from dcsicta.pads import derive_bases, form_ciphertext, combine, keygen, round_nonce
from dcsicta.protocol import ProtocolRunner, StrategyTag
from dcsicta.sicta import (
    FIG1_SCRIPT,
    OPTIMIZED,
    STANDARD,
    ParticipantCrState,
    coin_stream,
    resolve_epoch_fast,
)
from dcsicta.sim import SimConfig, run_channel_sim, run_protocol_demo
from dcsicta.transcript import Transcript, replay_verify
from dcsicta.verification import Evidence
from dcsicta.zkp import (
    EqDlStatement,
    NeqDlStatement,
    OrStatement,
    Proof,
    build_retransmission_statement,
    eqdl_holds,
    prove_eqdl,
    prove_neqdl,
    prove_or2,
    verify_eqdl,
    verify_neqdl,
    verify_or2,
)

RESULTS = []


def report(n, title, ok, detail):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1, 2: analytic throughput


@pytest.mark.parametrize("n,variant,s2,s3,target", [
    (1, STANDARD, 3, (13, 3), 0.693),
    (2, OPTIMIZED, 2, (10, 3), 0.924),
])
def test_analytic_throughput(n, variant, s2, s3, target):
    analytics._table.cache_clear()
    t0 = time.perf_counter()
    S2, S3 = expected_rounds(2, variant), expected_rounds(3, variant)
    mst = mst_estimate(variant)
    dt = time.perf_counter() - t0
    ok = (S2 == s2 and (S3.numerator, S3.denominator) == s3
          and abs(mst - target) <= 0.005 and dt < 1.0)
    report(n, f"{variant} S_2={S2} S_3={S3} 64/S_64={mst:.6f}", ok,
           f"target {target} +- 0.005, {dt:.3f}s < 1s")


# 3: Monte Carlo against analytics


def test_simulation_matches_analytics():
    t0 = time.perf_counter()
    epochs = 100_000
    worst = 0.0
    rows = []
    ok = True
    for variant in (STANDARD, OPTIMIZED):
        for k in (2, 3, 5, 8):
            ps = [ParticipantCrState(i, coin_stream(1000 + k, i)) for i in range(k)]
            counts = []
            for e in range(epochs):
                for p in ps:
                    p.start_epoch(e * k + p.index + 2)
                counts.append(resolve_epoch_fast(ps, variant == OPTIMIZED).rounds)
            mean = statistics.fmean(counts)
            se = statistics.stdev(counts) / epochs ** 0.5
            S = float(expected_rounds(k, variant))
            z = abs(mean - S) / se if se else (0.0 if mean == S else float("inf"))
            worst = max(worst, z)
            ok &= z <= 3
            rows.append(f"{variant[0]}{k}:{mean:.4f}/{S:.4f}")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    report(3, "Monte Carlo mean rounds within 3 SE of S_k, k in {2,3,5,8}", ok,
           f"worst |z|={worst:.2f}, {epochs} epochs each, {dt:.1f}s < 60s; " + " ".join(rows))


# 4: stability bracket


def test_stability_bracket():
    t0 = time.perf_counter()
    cases = [(OPTIMIZED, 0.90, True), (OPTIMIZED, 0.95, False),
             (STANDARD, 0.65, True), (STANDARD, 0.75, False)]
    ok = True
    parts = []
    for variant, lam, want_stable in cases:
        m = run_channel_sim(SimConfig(n=8, lam=lam, rounds=100_000, variant=variant, seed=1))
        ok &= m.stable == want_stable
        parts.append(f"{variant} {lam}: ratio {m.backlog_ratio:.2f} "
                     f"{'stable' if m.stable else 'unstable'}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    report(4, "stability bracket, backlog ratio > 3 means unstable", ok,
           "; ".join(parts) + f"; {dt:.1f}s < 120s")


# 5: the five-message example tree


def _conservation_from_records(records, p):
    C = {}
    for r in records:
        if r["type"] in ("round", "infer") and r.get("C"):
            C[r["round"]] = int(r["C"], 16)
    checked = 0
    for j in C:
        if 2 * j in C and 2 * j + 1 in C:
            if C[2 * j] * C[2 * j + 1] % p != C[j]:
                return False, checked
            checked += 1
    return True, checked


def test_fig1_reproduction():
    ok = True
    details = []
    for variant in (STANDARD, OPTIMIZED):
        demo = run_protocol_demo(SimConfig(n=5, variant=variant), coin_script=FIG1_SCRIPT,
                                 messages={i: i for i in range(1, 6)})
        t = demo.transcript
        p = int(t.header["params"]["p"], 16)
        payloads = sorted(int.from_bytes(b, "big") for b in t.delivered(0))
        cons, checked = _conservation_from_records(t.records, p)
        ok &= (t.transmitted_rounds(0) == [1, 2, 4, 6, 14] and t.inferred_rounds(0) == [3, 5, 7, 15]
               and payloads == [1, 2, 3, 4, 5] and cons and checked == 4 and not t.verdicts())
        details.append(f"{variant}: tx {t.transmitted_rounds(0)} inf {t.inferred_rounds(0)} "
                       f"payloads {payloads} conservation at {checked} nodes")
    report(5, "five-message example tree", ok, "; ".join(details))


# 6: algebraic invariants


def test_algebraic_invariants(big):
    rng = random.Random(6)
    pad_ok = comb_ok = 0
    rounds = 1000
    for r in range(rounds):
        n = rng.randint(2, 8)
        keys = keygen(big, n, r.to_bytes(4, "big"))
        A = derive_bases(big, [k.public() for k in keys], round_nonce(r, rng.randrange(1, 99)), b"acc")
        pad_ok += big.prod(big.exp(a, k.x) for a, k in zip(A, keys)) == 1
        senders = rng.sample(range(n), rng.randint(0, n))
        msgs = {i: encode_message(big, rng.randrange(1, 1 << 128)) for i in senders}
        cts = [form_ciphertext(big, k, a, msgs.get(i), b"r") for i, (k, a) in enumerate(zip(keys, A))]
        comb_ok += combine(big, cts) == big.prod(msgs.values())
    payloads = [rng.randrange(1, 1 << 128) for _ in range(10_000)]
    dec_ok = sum(classify(big, encode_message(big, m)) == Message(m, m.to_bytes(16, "big"))
                 for m in payloads)
    ok = pad_ok == comb_ok == rounds and dec_ok == len(payloads)
    report(6, "pad product, combination and decoding identities", ok,
           f"pads {pad_ok}/{rounds}, combine {comb_ok}/{rounds}, decode {dec_ok}/{len(payloads)}")


# 7: proof systems


def _mutations(params, stmt, proof):
    """Statement and proof variants that must all be rejected."""
    g, p, q = params.g, params.p, params.q
    bump = lambda v: v * g % p
    out = []
    if isinstance(stmt, OrStatement):
        for side in ("left", "right"):
            b = getattr(stmt, side)
            for field in ("base", "value"):
                nb = EqDlStatement(**{**b.__dict__, field: bump(getattr(b, field))})
                out.append((OrStatement(**{**stmt.__dict__, side: nb}), proof))
        out.append((OrStatement(stmt.right, stmt.left), proof))
    else:
        for field in ("base", "value", "y"):
            out.append((type(stmt)(**{**stmt.__dict__, field: bump(getattr(stmt, field))}), proof))
    out.append((stmt, Proof(proof.kind, proof.commitments, proof.challenges,
                            ((proof.responses[0] + 1) % q,) + proof.responses[1:], proof.aux)))
    out.append((stmt, Proof(proof.kind, (bump(proof.commitments[0]),) + proof.commitments[1:],
                            proof.challenges, proof.responses, proof.aux)))
    return out


def test_proof_systems(big):
    rng = random.Random(7)
    q = big.q
    n = 1000
    accepted = {"eqdl": 0, "or": 0, "neqdl": 0}
    mut_total = mut_rejected = 0
    for i in range(n):
        x = rng.randrange(1, q)
        B = big.gexp(rng.randrange(1, q))
        eq = EqDlStatement(B, big.exp(B, x), big.gexp(x))
        other = EqDlStatement(big.gexp(rng.randrange(1, q)), big.gexp(rng.randrange(1, q)), eq.y)
        ctx = f"acc/{i}".encode()
        pe = prove_eqdl(big, eq, x, rng, ctx)
        accepted["eqdl"] += verify_eqdl(big, eq, pe, ctx)
        which = 1 + i % 2
        orst = OrStatement(eq, other) if which == 1 else OrStatement(other, eq)
        po = prove_or2(big, orst, which, x, rng, ctx)
        accepted["or"] += verify_or2(big, orst, po, ctx)
        neq = NeqDlStatement(B, big.exp(B, x + 1 + rng.randrange(q - 1)), eq.y)
        pn = prove_neqdl(big, neq, x, rng, ctx)
        accepted["neqdl"] += verify_neqdl(big, neq, pn, ctx)
        if i < 100:
            for verify, stmt, proof in ((verify_eqdl, eq, pe), (verify_or2, orst, po), (verify_neqdl, neq, pn)):
                for s, pr in _mutations(big, stmt, proof) + [(stmt, proof)]:
                    if s is stmt and pr is proof:
                        s, ctx2 = stmt, ctx + b"x"     # context is bound too
                    else:
                        ctx2 = ctx
                    mut_total += 1
                    mut_rejected += not verify(big, s, pr, ctx2)

    # the canceller: E in O_2, E^-1 in a later chained ciphertext, no message sent
    x = rng.randrange(1, q)
    y = big.gexp(x)
    E = big.gexp(rng.randrange(1, q))
    bases = {j: big.gexp(rng.randrange(1, q)) for j in (1, 2, 6, 14)}
    cts = {j: big.exp(bases[j], x) for j in bases}
    cts[2] = cts[2] * E % big.p
    cts[6] = cts[6] * big.inv(E) % big.p
    holds = {}
    for node in (2, 6, 14):
        st = build_retransmission_statement(big, node, None, bases, cts, y)
        holds[node] = eqdl_holds(big, st.left, x) or eqdl_holds(big, st.right, x)
    keys = keygen(big, 5, b"canceller")
    runner = ProtocolRunner(big, keys, variant=STANDARD, seed=3, setup_seed=b"c",
                            strategies={5: StrategyTag.CANCELLER})
    rep = runner.run_epoch(0, {1: 10, 2: 11})
    flagged = [(v.participant, v.evidence) for v in rep.verdict.violations]
    canceller_ok = (holds == {2: False, 6: True, 14: True}
                    and flagged == [(5, Evidence.INVALID_PROOF)])

    ok = all(v == n for v in accepted.values()) and mut_rejected == mut_total and canceller_ok
    report(7, "proof completeness, binding, canceller caught", ok,
           f"accepted eqdl {accepted['eqdl']}/{n} or {accepted['or']}/{n} neqdl {accepted['neqdl']}/{n}; "
           f"mutations rejected {mut_rejected}/{mut_total}; canceller statements {holds}, verdicts {flagged}")


# 8: disruptor catalogue


CATALOGUE = [
    ("injector", {3: StrategyTag.INJECTOR}, 3, STANDARD, [(3, Evidence.INVALID_PROOF)]),
    ("invalid-proof", {3: StrategyTag.INVALID_PROOF}, 3, OPTIMIZED, [(3, Evidence.INVALID_PROOF)]),
    ("canceller", {3: StrategyTag.CANCELLER}, 3, OPTIMIZED, [(3, Evidence.INVALID_PROOF)]),
    ("rule-violator-transmit", {3: StrategyTag.RULE_TRANSMIT}, 2, OPTIMIZED, [(3, Evidence.RULE_VIOLATION)]),
    ("rule-violator-silent", {3: StrategyTag.RULE_SILENT}, 2, OPTIMIZED, [(3, Evidence.RULE_VIOLATION)]),
    ("always-collide pair", {2: StrategyTag.ALWAYS_COLLIDE, 4: StrategyTag.ALWAYS_COLLIDE}, 2, STANDARD,
     [(None, Evidence.BRANCH_SKIPPED)]),
    ("always-collide alone", {3: StrategyTag.ALWAYS_COLLIDE}, 2, OPTIMIZED, [(3, Evidence.RULE_VIOLATION)]),
]


def test_disruptor_catalogue():
    ok = True
    parts = []
    for name, adv, senders, variant, want in CATALOGUE:
        for seed in range(3):
            demo = run_protocol_demo(SimConfig(n=5, variant=variant, adversaries=adv, seed=seed), senders=senders)
            got = [(v.participant, v.evidence) for v in demo.transcript.verdicts()]
            honest_named = [i for i, _ in got if i is not None and i not in adv]
            ok &= got == want and not honest_named
        parts.append(f"{name}: {[e.value for _, e in got]}")
    # skip fires after exactly five non-splits
    demo = run_protocol_demo(SimConfig(n=5, variant=STANDARD,
                                       adversaries={2: StrategyTag.ALWAYS_COLLIDE, 4: StrategyTag.ALWAYS_COLLIDE}),
                             senders=2)
    skip_node = demo.transcript.verdicts()[0].node
    ok &= skip_node == 32          # 1 -> 2 -> 4 -> 8 -> 16 -> 32: five non-splits

    trials = 100_000
    ps = [ParticipantCrState(i, coin_stream(81, i)) for i in range(3)]
    nonsplit = 0
    for t in range(trials):
        for p in ps:
            p.start_epoch(3 * t + p.index + 2)
        left = sum(p.honest_goes_left(1, None, True) for p in ps)
        nonsplit += left in (0, 3)
    freq = nonsplit / trials
    false_skips = 0
    for t in range(trials):
        for p in ps:
            p.start_epoch(3 * t + p.index + 2)
        false_skips += bool(resolve_epoch_fast(ps, True, skip_threshold=5).skipped)
    ok &= abs(freq - 0.25) <= 0.01 and false_skips / trials <= 0.002
    report(8, "disruptor catalogue and skip policy", ok,
           "; ".join(parts) + f"; skip at node {skip_node}; 3-collision non-split {freq:.4f}; "
           f"honest false skips {false_skips}/{trials}")


# 9: transcript determinism and integrity


def _mutate_ciphertext_bytes(text, rng, per_ciphertext):
    lines = text.splitlines(keepends=True)
    for li, line in enumerate(lines):
        rec = json.loads(line)
        if rec["type"] != "round":
            continue
        for _, _, o, _ in rec["entries"]:
            start = line.index(f'"{o}"') + 1
            for pos in rng.sample(range(0, len(o), 2), per_ciphertext):
                old = o[pos:pos + 2]
                new = format(int(old, 16) ^ rng.randrange(1, 256), "02x")
                yield "".join(lines[:li]) + line[:start + pos] + new + line[start + pos + 2:] + "".join(lines[li + 1:])


def test_transcript_determinism():
    rng = random.Random(9)
    honest = []
    identical = True
    for variant in (STANDARD, OPTIMIZED):
        for seed in range(3):
            cfg = SimConfig(n=5, variant=variant, seed=seed)
            a = run_protocol_demo(cfg, senders=5).transcript.dumps()
            b = run_protocol_demo(cfg, senders=5).transcript.dumps()
            identical &= a == b
            honest.append(a)
        cfg = SimConfig(n=4, lam=0.8, rounds=30, variant=variant, seed=5, crypto=True)
        a = Transcript(run_channel_sim(cfg).records).dumps()
        identical &= a == Transcript(run_channel_sim(cfg).records).dumps()
        honest.append(a)
    fig1 = run_protocol_demo(SimConfig(n=5), coin_script=FIG1_SCRIPT, messages={i: i for i in range(1, 6)})
    honest.append(fig1.transcript.dumps())
    accepted = sum(replay_verify(Transcript.loads(t)).accepted for t in honest)
    mutants = rejected = 0
    for text in honest[:3] + honest[-1:]:
        for bad in _mutate_ciphertext_bytes(text, rng, 4):
            mutants += 1
            rejected += not replay_verify(Transcript.loads(bad)).accepted
    ok = identical and accepted == len(honest) and rejected == mutants
    report(9, "byte-identical transcripts, honest replay, mutation rejection", ok,
           f"identical reruns {identical}; accepted {accepted}/{len(honest)}; "
           f"single-byte ciphertext mutations rejected {rejected}/{mutants}")
