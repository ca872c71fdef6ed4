"""Command-line entry point: analyze, simulate, demo, verify.

Exit codes: 0 success, 1 the protocol issued verdicts, 2 usage, configuration,
file or format errors (including transcripts that fail replay).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analytics import mst_spread, throughput_curve
from .group import ParameterError
from .protocol import ProtocolError
from .sicta import FIG1_SCRIPT, OPTIMIZED, STANDARD, VARIANTS
from .sim import ConfigError, SimConfig, parse_adversaries, run_channel_sim, run_protocol_demo
from .transcript import Transcript, TranscriptError, load_keyfile, replay_verify, write_keyfile

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2

TOY_BITS, TOY_PAYLOAD, TOY_CHECKSUM = 16, 5, 8


class UsageError(Exception):
    pass


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if v < 0:
            raise argparse.ArgumentTypeError("must be >= 0")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcsicta", description="Verifiable DC-net channel with SICTA collision resolution.")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="expected resolution lengths and throughput table")
    a.add_argument("--variant", choices=VARIANTS, default=STANDARD, help="splitting variant (default standard)")
    a.add_argument("--kmax", type=int, default=64, help="largest collision size, >= 2 (default 64)")
    a.add_argument("--out", help="write the CSV here instead of stdout")

    s = sub.add_parser("simulate", help="channel simulation with Poisson arrivals and gated access")
    s.add_argument("--n", type=int, default=8, help="participants, >= 2 (default 8)")
    s.add_argument("--lambda", dest="lam", type=_positive(float), default=0.5,
                   help="arrival rate in messages per round (default 0.5)")
    s.add_argument("--rounds", type=int, default=10_000, help="transmitted-round budget (default 10000)")
    s.add_argument("--variant", choices=VARIANTS, default=OPTIMIZED, help="(default optimized)")
    s.add_argument("--adversary", action="append", default=[], metavar="INDEX:STRATEGY",
                   help="scripted adversary, repeatable; implies --crypto on")
    s.add_argument("--seed", type=int, default=0, help="(default 0)")
    s.add_argument("--crypto", choices=("on", "off"), default="off",
                   help="full group arithmetic or id-only splitting (default off)")
    s.add_argument("--skip-threshold", type=int, default=5, help="non-splits before a branch is skipped (default 5)")
    s.add_argument("--out", help="write the transcript here (crypto path only)")

    d = sub.add_parser("demo", help="one scripted epoch on the full protocol path")
    d.add_argument("--n", type=int, default=5, help="participants (default 5)")
    d.add_argument("--senders", type=int, default=5, help="participants holding a message (default 5)")
    d.add_argument("--script", choices=("fig1", "random"), default="fig1",
                   help="fig1 forces the five-message example tree; random uses seeded coins (default fig1)")
    d.add_argument("--seed", type=int, default=0, help="(default 0)")
    d.add_argument("--variant", choices=VARIANTS, default=OPTIMIZED, help="(default optimized)")
    d.add_argument("--adversary", action="append", default=[], metavar="INDEX:STRATEGY",
                   help="scripted adversary, repeatable")
    d.add_argument("--toy", action="store_true", help="16-bit group for hand-checkable output")
    d.add_argument("--out", help="write the transcript here")
    d.add_argument("--keys-out", help="write the backend source keys here (default OUT.keys.json)")

    v = sub.add_parser("verify", help="replay a transcript and report its verdicts")
    v.add_argument("--in", dest="path", required=True, help="transcript file")
    v.add_argument("--keys", help="key file from demo; also re-derives every pad base")
    return ap


def cmd_analyze(args) -> int:
    if args.kmax < 2:
        raise UsageError("--kmax must be >= 2")
    table = throughput_curve(args.kmax, args.variant)
    csv_text = table.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    mst = table.row(args.kmax).throughput
    print(f"MST({args.variant}) = {mst:.6f}")
    print(f"spread k=48..{args.kmax}: {mst_spread(args.variant, args.kmax):.2e}")
    return EXIT_OK


def _print_verdicts(verdicts) -> None:
    for v in verdicts:
        who = "-" if v.participant is None else v.participant
        print(f"verdict: epoch {v.epoch} round {v.node} participant {who} {v.evidence.value}")


def cmd_simulate(args) -> int:
    cfg = SimConfig(n=args.n, lam=args.lam, rounds=args.rounds, variant=args.variant,
                    adversaries=parse_adversaries(args.adversary), seed=args.seed,
                    crypto=args.crypto == "on", skip_threshold=args.skip_threshold)
    if args.out and not cfg.uses_crypto:
        raise UsageError("--out needs --crypto on")
    cfg.validate()
    m = run_channel_sim(cfg)
    print(m.summary())
    if args.out:
        Transcript(m.records).write(args.out)
    return EXIT_VERDICT if m.verdicts else EXIT_OK


def cmd_demo(args) -> int:
    adversaries = parse_adversaries(args.adversary)
    if args.script == "fig1" and (args.senders != 5 or args.n < 5):
        raise UsageError("--script fig1 needs --senders 5 and --n >= 5")
    if args.senders > args.n:
        raise UsageError("--senders must be <= --n")
    cfg = SimConfig(n=args.n, variant=args.variant, adversaries=adversaries, seed=args.seed, crypto=True)
    if args.toy:
        cfg.modulus_bits, cfg.payload_bits, cfg.checksum_bits = TOY_BITS, TOY_PAYLOAD, TOY_CHECKSUM
    messages = None
    if args.script == "fig1":
        # participant i sends payload i, which fixes the two-collision order of the example
        messages = {i: i for i in range(1, 6)}
    demo = run_protocol_demo(cfg, args.senders, FIG1_SCRIPT if args.script == "fig1" else None,
                             messages)
    t = demo.transcript
    p = t.header["params"]
    print(f"group: p={p['p']} ({int(p['p'], 16).bit_length()} bits)")
    print("senders: " + " ".join(f"{i}:{m}" for i, m in sorted(demo.messages.items())))
    print("transmitted rounds: " + " ".join(map(str, t.transmitted_rounds(0))))
    print("inferred rounds: " + " ".join(map(str, t.inferred_rounds(0))))
    print("delivered payloads: " + " ".join(str(int.from_bytes(b, "big")) for b in t.delivered(0)))
    _print_verdicts(t.verdicts())
    if args.out:
        t.write(args.out)
        keys_out = args.keys_out or args.out + ".keys.json"
        write_keyfile(keys_out, demo.keys)
        print(f"transcript: {args.out}")
        print(f"keys: {keys_out}")
    return EXIT_VERDICT if t.verdicts() else EXIT_OK


def cmd_verify(args) -> int:
    try:
        t = Transcript.read(args.path)
        keys = load_keyfile(args.keys) if args.keys else None
    except OSError as e:
        raise UsageError(f"cannot read: {e}") from None
    except (KeyError, ValueError) as e:
        if isinstance(e, TranscriptError):
            raise
        raise UsageError(f"bad key file: {e}") from None
    res = replay_verify(t, keys)
    if not res.accepted:
        print("rejected")
        for err in res.errors:
            print(f"error: {err}")
        return EXIT_USAGE
    print(f"accepted ({res.epochs} epochs)")
    for end in t.epoch_ends():
        print(f"epoch {end['epoch']}: transmitted rounds " + " ".join(map(str, end["transmitted"])))
        print(f"epoch {end['epoch']}: inferred rounds " + " ".join(map(str, end["inferred"])))
    _print_verdicts(res.verdicts)
    return EXIT_VERDICT if res.verdicts else EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "demo": cmd_demo, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ParameterError, ProtocolError, TranscriptError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
