"""Channel simulations and scripted protocol demos.

Time is counted in transmitted rounds; inferred rounds cost nothing.  Access
is gated: messages arriving while an epoch is being resolved wait for the
next epoch root.  Each participant sends at most one message per epoch and
queues the rest.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .group import GroupParams, make_params
from .pads import ParticipantKeys, keygen
from .protocol import ProtocolRunner, StrategyTag, canonical_strategy
from .sicta import (
    OPTIMIZED,
    VARIANTS,
    CoinScript,
    ParticipantCrState,
    coin_stream,
    resolve_epoch_fast,
)
from .transcript import Transcript

UNSTABLE_RATIO = 3.0


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    n: int = 8
    lam: float = 0.5
    rounds: int = 10_000
    variant: str = OPTIMIZED
    adversaries: Mapping[int, StrategyTag] = field(default_factory=dict)
    seed: int = 0
    crypto: bool = False
    skip_threshold: Optional[int] = 5
    modulus_bits: int = 256
    payload_bits: int = 128
    checksum_bits: int = 32

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not self.lam >= 0:
            raise ConfigError("lambda must be >= 0")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.skip_threshold is not None and self.skip_threshold < 1:
            raise ConfigError("skip threshold must be >= 1")
        for i, s in self.adversaries.items():
            if not 1 <= i <= self.n:
                raise ConfigError(f"adversary index {i} outside 1..{self.n}")
            if not isinstance(s, StrategyTag):
                raise ConfigError(f"unknown strategy {s!r}")

    @property
    def uses_crypto(self) -> bool:
        # adversaries only exist on the group-arithmetic path
        return self.crypto or bool(self.adversaries)


def parse_adversaries(specs) -> dict:
    """["3:rule-violator-transmit", ...] -> {3: StrategyTag.RULE_TRANSMIT}."""
    out = {}
    for spec in specs or ():
        idx, sep, name = spec.partition(":")
        if not sep:
            raise ConfigError(f"adversary spec {spec!r} is not INDEX:STRATEGY")
        try:
            out[int(idx)] = canonical_strategy(name)
        except ValueError:
            raise ConfigError(f"bad adversary spec {spec!r}") from None
    return out


@lru_cache(maxsize=8)
def default_params(modulus_bits: int = 256, payload_bits: int = 128,
                   checksum_bits: int = 32) -> GroupParams:
    return make_params(modulus_bits, payload_bits, checksum_bits, seed=b"dcsicta-default")


def _setup(config: SimConfig) -> tuple[GroupParams, list[ParticipantKeys], bytes]:
    try:
        params = default_params(config.modulus_bits, config.payload_bits, config.checksum_bits)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    keys = keygen(params, config.n, str(config.seed).encode())
    return params, keys, f"dcsicta/setup/{config.seed}".encode()


@dataclass
class SimMetrics:
    arrived: int = 0
    delivered: int = 0
    delays: list = field(default_factory=list, repr=False)
    backlog: list = field(default_factory=list, repr=False)  # (round, backlog) at epoch starts and the end
    transmitted: int = 0
    inferred: int = 0
    epochs: int = 0
    requeued: int = 0
    dropped: int = 0          # queued messages of excluded participants
    verdicts: list = field(default_factory=list)
    records: list = field(default_factory=list, repr=False)
    delivered_payloads: list = field(default_factory=list, repr=False)

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.delays)) if self.delays else 0.0

    @property
    def max_delay(self) -> int:
        return max(self.delays, default=0)

    @property
    def final_backlog(self) -> int:
        return self.backlog[-1][1] if self.backlog else 0

    @property
    def backlog_ratio(self) -> float:
        return backlog_ratio(self.backlog, self.transmitted)

    @property
    def stable(self) -> bool:
        return self.backlog_ratio <= UNSTABLE_RATIO

    def summary(self) -> str:
        lines = [
            f"arrived      {self.arrived}",
            f"delivered    {self.delivered}",
            f"backlog      {self.final_backlog} (ratio {self.backlog_ratio:.3f}, "
            f"{'stable' if self.stable else 'unstable'})",
            f"delay        mean {self.mean_delay:.2f} max {self.max_delay}",
            f"rounds       transmitted {self.transmitted} inferred {self.inferred} epochs {self.epochs}",
            f"throughput   {self.delivered / max(self.transmitted, 1):.4f}",
        ]
        for v in self.verdicts:
            who = "-" if v.participant is None else v.participant
            lines.append(f"verdict      epoch {v.epoch} round {v.node} participant {who} {v.evidence.value}")
        return "\n".join(lines)


def backlog_ratio(samples, horizon: int) -> float:
    """Mean backlog over the last quarter of the horizon over that of the first quarter."""
    first = [b for t, b in samples if t < horizon / 4]
    last = [b for t, b in samples if t >= 3 * horizon / 4]
    if not first or not last:
        return 1.0
    a, b = float(np.mean(first)), float(np.mean(last))
    if a == 0:
        return float("inf") if b > 0 else 1.0
    return b / a


def _delivery_times(transmitted: list[int], nodes) -> dict:
    """Rounds elapsed when each node resolves under ascending-id processing."""
    tx = sorted(transmitted)
    return {j: bisect_right(tx, j) for j in nodes}


def run_channel_sim(config: SimConfig) -> SimMetrics:
    config.validate()
    rng = np.random.default_rng(config.seed)
    queues = {i: deque() for i in range(1, config.n + 1)}
    m = SimMetrics()
    seq = 0
    now = 0

    if config.uses_crypto:
        params, keys, setup_seed = _setup(config)
        runner = ProtocolRunner(params, keys, variant=config.variant, seed=config.seed,
                                setup_seed=setup_seed, skip_threshold=config.skip_threshold,
                                strategies=config.adversaries)
    else:
        states = {i: ParticipantCrState(i, coin_stream(config.seed, i)) for i in queues}

    while now < config.rounds:
        m.backlog.append((now, sum(len(q) for q in queues.values())))
        starts = {i: q[0] for i, q in queues.items() if q}
        if config.uses_crypto:
            report = runner.run_epoch(m.epochs, {i: s[0] for i, s in starts.items()})
            used = report.rounds_used
            m.transmitted += used
            m.inferred += len(report.inferred)
            for i, payload, at in report.delivered:
                queues[i].popleft()
                m.delays.append(at - starts[i][1])
                m.delivered_payloads.append(payload)
            m.requeued += len(report.requeued)
            m.verdicts.extend(report.verdict.violations)
            for i in report.verdict.violators:
                m.dropped += len(queues.pop(i, ()))
        else:
            senders = []
            for i, (payload, _) in starts.items():
                states[i].start_epoch(payload)
                senders.append(states[i])
            shape = resolve_epoch_fast(senders, config.variant == OPTIMIZED, config.skip_threshold)
            used = shape.rounds
            m.transmitted += used
            m.inferred += len(shape.inferred)
            at = _delivery_times(shape.transmitted, [j for j, _ in shape.delivered])
            for j, i in shape.delivered:
                payload, arrival = queues[i].popleft()
                m.delays.append(now + at[j] - arrival)
                m.delivered_payloads.append(payload)
            m.requeued += sum(len(ids) for _, ids in shape.skipped)
        m.epochs += 1
        # arrivals during this epoch's rounds join the queues for the next one
        counts = rng.poisson(config.lam, size=used)
        total = int(counts.sum())
        if total:
            roster = sorted(queues)
            who = rng.integers(0, len(roster), size=total)
            stamps = np.repeat(np.arange(now, now + used), counts)
            for w, t in zip(who.tolist(), stamps.tolist()):
                seq += 1
                queues[roster[w]].append((seq + 1, t + 1))
            m.arrived += total
        now += used

    m.backlog.append((now, sum(len(q) for q in queues.values())))
    m.delivered = len(m.delays)
    if config.uses_crypto:
        m.records = runner.transcript_records()
    return m


# scripted demos


@dataclass
class DemoResult:
    transcript: Transcript
    keys: list
    reports: list
    messages: dict


def demo_messages(config: SimConfig, senders: int) -> dict:
    """Pick senders and payloads so that scripted rule violators meet the rule.

    Participants whose strategy needs a message send first, then the lowest
    honest indices.  Payloads are 1, 2, ... by rank: silent violators hold the
    smallest code word, transmitting violators the largest.
    """
    if not 1 <= senders <= config.n:
        raise ConfigError(f"senders must be in 1..{config.n}")
    adv = [i for i, s in sorted(config.adversaries.items()) if s.needs_message and s is not StrategyTag.HONEST]
    honest = [i for i in range(1, config.n + 1) if i not in config.adversaries]
    chosen = (adv + honest)[:senders]
    if len(chosen) < senders:
        chosen = (chosen + [i for i in range(1, config.n + 1) if i not in chosen])[:senders]
    rank = {StrategyTag.RULE_SILENT: 0, StrategyTag.RULE_TRANSMIT: 2}
    order = sorted(chosen, key=lambda i: (rank.get(config.adversaries.get(i), 1), i))
    return {i: r + 1 for r, i in enumerate(order)}


def run_protocol_demo(config: SimConfig, senders: int = 5,
                      coin_script: Optional[CoinScript] = None,
                      messages: Optional[Mapping[int, int]] = None) -> DemoResult:
    """One epoch on the full group-arithmetic path, returned as a transcript."""
    config.validate()
    if coin_script is not None:
        used = {i for left in coin_script.script.values() for i in left}
        if any(not 1 <= i <= config.n for i in used):
            raise ConfigError("coin script names participants outside the roster")
    if messages is None:
        messages = demo_messages(config, senders)
    params, keys, setup_seed = _setup(config)
    runner = ProtocolRunner(params, keys, variant=config.variant, seed=config.seed,
                            setup_seed=setup_seed, skip_threshold=config.skip_threshold,
                            strategies=config.adversaries, script=coin_script)
    report = runner.run_epoch(0, messages)
    return DemoResult(Transcript(runner.transcript_records()), keys, [report], dict(messages))
