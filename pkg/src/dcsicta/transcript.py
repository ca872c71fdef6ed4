"""Line-delimited JSON transcripts and their independent replay.

Every record is one JSON object per line, keys sorted, no whitespace, so
identical runs give byte-identical files.  All group elements are hex.

Replay feeds the recorded *inputs* (bases, ciphertexts, proofs) into a fresh
`EpochView` and requires that everything it recomputes (combined values,
outcomes, inferences, verdicts, skips, investigations) reproduces the
recorded records exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .group import GroupParams, ParameterError
from .pads import TRANSPARENT, PublicKey, RosterError
from .protocol import TRANSCRIPT_VERSION, EpochView, ProtocolError, end_record
from .sicta import EPOCH_DONE, PlanKind, VARIANTS
from .verification import InvestigationError, Violation
from .zkp import Proof


class TranscriptError(ValueError):
    """Structurally malformed transcript or unsupported version."""


def dump_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


@dataclass
class Transcript:
    records: list = field(default_factory=list)

    def dumps(self) -> str:
        return "".join(dump_record(r) + "\n" for r in self.records)

    @classmethod
    def loads(cls, text: str) -> Transcript:
        records = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TranscriptError(f"line {n}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise TranscriptError(f"line {n}: record without a type")
            records.append(rec)
        if not records or records[0].get("type") != "header":
            raise TranscriptError("transcript must start with a header record")
        return cls(records)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> Transcript:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise TranscriptError(f"not UTF-8: {e}") from None
        return cls.loads(text)

    # queries

    @property
    def header(self) -> dict:
        return self.records[0]

    def of_type(self, kind: str, epoch: Optional[int] = None) -> list[dict]:
        return [r for r in self.records
                if r["type"] == kind and (epoch is None or r.get("epoch") == epoch)]

    def epoch_ends(self) -> list[dict]:
        return self.of_type("epoch-end")

    def transmitted_rounds(self, epoch: int = 0) -> list[int]:
        return self.of_type("epoch-end", epoch)[0]["transmitted"]

    def inferred_rounds(self, epoch: int = 0) -> list[int]:
        return self.of_type("epoch-end", epoch)[0]["inferred"]

    def delivered(self, epoch: Optional[int] = None) -> list[bytes]:
        return [bytes.fromhex(h) for r in self.of_type("epoch-end", epoch) for h in r["delivered"]]

    def verdicts(self) -> list[Violation]:
        return [Violation.from_json(r) for r in self.of_type("verdict")]


@dataclass
class ReplayResult:
    accepted: bool
    verdicts: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    epochs: int = 0


def _keys_roster(header: dict, params: GroupParams, ybar: Optional[dict]) -> list[PublicKey]:
    roster = []
    for entry in header["roster"]:
        i, yhex = entry
        y = int(yhex, 16)
        xb = None
        if ybar is not None:
            if i not in ybar:
                raise TranscriptError(f"key file lacks participant {i}")
            xb = ybar[i]
            if params.gexp(xb) != y:
                raise TranscriptError(f"key file does not match public key of participant {i}")
        roster.append(PublicKey(int(i), y, xb))
    return roster


class _Cursor:
    def __init__(self, records: Sequence[dict]):
        self.records = records
        self.pos = 1

    def peek(self) -> Optional[dict]:
        return self.records[self.pos] if self.pos < len(self.records) else None

    def take(self, kind: str) -> dict:
        rec = self.peek()
        if rec is None:
            raise TranscriptError(f"unexpected end of transcript (expected {kind})")
        if rec["type"] != kind:
            raise TranscriptError(f"record {self.pos}: expected {kind}, found {rec['type']}")
        self.pos += 1
        return rec

    def expect(self, kind: str) -> dict:
        """The next record, left in place for comparison."""
        rec = self.peek()
        if rec is None:
            raise TranscriptError(f"unexpected end of transcript (expected {kind})")
        if rec["type"] != kind:
            raise _Mismatch(f"record {self.pos}: expected {kind}, found {rec['type']}")
        return rec


class _Mismatch(Exception):
    pass


def replay_verify(transcript: Transcript, ybar: Optional[dict] = None) -> ReplayResult:
    """Recompute a transcript from its recorded inputs.

    `ybar` optionally maps participant index to its transparent-backend
    source key; with it, every recorded pad base is re-derived and compared.
    """
    try:
        return _replay(transcript, ybar)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        if isinstance(e, TranscriptError):
            raise
        raise TranscriptError(f"malformed transcript: {e!r}") from None


def _replay(transcript: Transcript, ybar: Optional[dict]) -> ReplayResult:
    header = transcript.header
    if header.get("version") != TRANSCRIPT_VERSION:
        raise TranscriptError(f"unsupported transcript version {header.get('version')!r}")
    if header.get("backend") != TRANSPARENT.name:
        raise TranscriptError(f"unsupported pad backend {header.get('backend')!r}")
    try:
        params = GroupParams.from_header(header["params"])
    except ParameterError as e:
        raise TranscriptError(f"invalid group parameters: {e}") from None
    variant = header["variant"]
    if variant not in VARIANTS:
        raise TranscriptError(f"unknown variant {variant!r}")
    threshold = header["skip_threshold"]
    setup_seed = bytes.fromhex(header["setup_seed"])
    keys = _keys_roster(header, params, ybar)
    by_index = {k.index: k for k in keys}

    result = ReplayResult(True)
    cur = _Cursor(transcript.records)
    roster = list(keys)
    try:
        while True:
            nxt = cur.peek()
            if nxt is None:
                raise TranscriptError("unexpected end of transcript (no end record)")
            if nxt["type"] == "end":
                break
            start = cur.take("epoch-start")
            epoch = start["epoch"]
            view = EpochView(params, epoch, roster, variant=variant, skip_threshold=threshold,
                             setup_seed=setup_seed)
            emitted = 0

            def check_new() -> None:
                nonlocal emitted
                for rec in view.records[emitted:]:
                    got = cur.peek()
                    if got is None:
                        raise TranscriptError(f"unexpected end of transcript (expected {rec['type']})")
                    if dump_record(got) != dump_record(rec):
                        raise _Mismatch(
                            f"record {cur.pos} ({got['type']} epoch {got.get('epoch')} "
                            f"round {got.get('round')}) does not match recomputation")
                    cur.pos += 1
                emitted = len(view.records)

            # epoch-start was consumed already; compare it in place
            if dump_record(start) != dump_record(view.records[0]):
                raise _Mismatch(f"epoch {epoch}: roster does not match")
            emitted = 1

            while True:
                plan = view.next_plan()
                if plan is EPOCH_DONE:
                    break
                if plan.kind is PlanKind.INFER:
                    view.infer(plan.node)
                    check_new()
                    continue
                rec = cur.expect("round")
                if rec["round"] != plan.node:
                    raise _Mismatch(f"expected transmitted round {plan.node} in epoch {epoch}")
                bases, cts, proofs = {}, {}, {}
                for i, a, o, pr in rec["entries"]:
                    bases[i], cts[i] = int(a, 16), int(o, 16)
                    proofs[i] = None if pr is None else Proof.from_json(pr)
                if ybar is not None:
                    if bases != view.derive_bases(plan.node, rec["attempt"]):
                        raise _Mismatch(f"pad bases of round {plan.node} are not the derived ones")
                try:
                    view.submit_transmit(plan.node, rec["attempt"], bases, cts, proofs)
                except ProtocolError as e:
                    raise _Mismatch(str(e)) from None
                check_new()

            for case in view.cases():
                rec = cur.expect("investigation")
                if rec["round"] != case.node:
                    raise _Mismatch(f"missing investigation of round {case.node}")
                proofs = {i: (None if pr is None else Proof.from_json(pr)) for i, pr in rec["proofs"]}
                view.submit_investigation(case, proofs)
                check_new()

            view.finish()
            check_new()
            result.verdicts.extend(view.verdict.violations)
            result.epochs += 1
            roster = [by_index[i] for i in view.indices]
        end = cur.take("end")
        if dump_record(end) != dump_record(end_record(result.epochs)):
            raise _Mismatch("end record does not match the number of epochs")
        if cur.peek() is not None:
            raise _Mismatch("records after the end record")
    except (_Mismatch, InvestigationError, RosterError) as e:
        result.accepted = False
        result.errors.append(str(e))
    return result


def load_keyfile(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(i): int(x, 16) for i, x in data["ybar"]}


def write_keyfile(path, keys: Iterable) -> None:
    data = {"backend": TRANSPARENT.name, "note": "transparent backend source keys; test-grade",
            "ybar": [[k.index, format(k.ybar, "x")] for k in keys]}
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=1) + "\n", encoding="utf-8")
