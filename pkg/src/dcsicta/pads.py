"""Key setup, per-round pad bases and ciphertext formation.

Each participant i holds a secret exponent x_i.  For a round with public
randomness R, its pad base is

    A^(i) = e( prod_{k<i} ybar_k * prod_{k>i} ybar_k^-1 , R )

so that prod_i (A^(i))^(x_i) = 1 and the pads vanish when all ciphertexts of a
round are multiplied together.

Only a transparent pairing backend ships here: source-group elements are
carried as their exponents, so e(h^a, h^b) = g^(ab) is directly computable.
It keeps every algebraic identity intact but gives no anonymity at all and
must be treated as test-grade.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from .group import Element, GroupParams


class RosterError(ValueError):
    """Invalid key material or participant roster."""


@dataclass(frozen=True)
class PublicKey:
    index: int
    y: Element
    # source-group key; under the transparent backend this is the exponent itself
    ybar: int


@dataclass(frozen=True)
class ParticipantKeys:
    index: int
    x: int
    y: Element
    ybar: int

    def public(self) -> PublicKey:
        return PublicKey(self.index, self.y, self.ybar)


@dataclass(frozen=True)
class Ciphertext:
    O: Element
    round_id: bytes
    index: int


def keygen(params: GroupParams, n: int, rng_seed: bytes) -> list[ParticipantKeys]:
    if n < 2:
        raise RosterError("need at least two participants")
    rng = random.Random(b"dcsicta/keygen/v1" + rng_seed)
    keys = []
    for i in range(1, n + 1):
        x = rng.randrange(1, params.q)
        keys.append(ParticipantKeys(i, x, params.gexp(x), x))
    return keys


def round_nonce(epoch: int, node: int, attempt: int = 0) -> bytes:
    """Global round identity; distinct per (epoch, node, attempt)."""
    h = hashlib.sha256(b"dcsicta/round/v1")
    h.update(epoch.to_bytes(8, "big"))
    h.update(node.to_bytes(8, "big"))
    h.update(attempt.to_bytes(4, "big"))
    return h.digest()


def round_scalar(params: GroupParams, setup_seed: bytes, round_id: bytes) -> int:
    """r_j = PRF(setup_seed, j) mod q, re-derived with a counter if it hits 0."""
    ctr = 0
    while True:
        h = hashlib.sha512(b"dcsicta/R/v1" + setup_seed + round_id + ctr.to_bytes(4, "big"))
        r = int.from_bytes(h.digest(), "big") % params.q
        if r:
            return r
        ctr += 1


class PadBackend(Protocol):
    name: str

    def bases(self, params: GroupParams, roster: Sequence[PublicKey], r: int) -> list[Element]:
        ...


class TransparentBackend:
    """Bilinear map over exponent-represented source elements. NOT secure."""

    name = "transparent"

    def pair(self, params: GroupParams, a: int, b: int) -> Element:
        return params.gexp(a * b)

    def bases(self, params, roster, r):
        q = params.q
        total = sum(k.ybar for k in roster) % q
        out = []
        before = 0
        for k in roster:
            after = (total - before - k.ybar) % q
            # prod_{k<i} ybar_k * prod_{k>i} 1/ybar_k, written additively in the exponent
            out.append(self.pair(params, (before - after) % q, r))
            before = (before + k.ybar) % q
        return out


TRANSPARENT = TransparentBackend()


def _check_roster(params: GroupParams, roster: Sequence[PublicKey]) -> None:
    if len(roster) < 2:
        raise RosterError("roster must contain at least two participants")
    seen = set()
    for k in roster:
        if k.index in seen:
            raise RosterError(f"duplicate participant index {k.index}")
        seen.add(k.index)


def bases_for_scalar(params: GroupParams, roster: Sequence[PublicKey], r: int,
                     backend: PadBackend = TRANSPARENT) -> list[Element]:
    _check_roster(params, roster)
    if r % params.q == 0:
        raise RosterError("round scalar must be non-zero mod q")
    return backend.bases(params, roster, r)


def derive_bases(params: GroupParams, roster: Sequence[PublicKey], round_id: bytes,
                 setup_seed: bytes, backend: PadBackend = TRANSPARENT) -> list[Element]:
    """Pad bases for every roster member, in roster order."""
    r = round_scalar(params, setup_seed, round_id)
    return bases_for_scalar(params, roster, r, backend)


def form_ciphertext(params: GroupParams, keys: ParticipantKeys, A: Element,
                    msg: Optional[Element] = None, round_id: bytes = b"") -> Ciphertext:
    O = params.exp(A, keys.x)
    if msg is not None:
        O = O * msg % params.p
    return Ciphertext(O, round_id, keys.index)


def combine(params: GroupParams, ciphertexts: Sequence[Ciphertext]) -> Element:
    seen = set()
    rounds = set()
    for ct in ciphertexts:
        if ct.index in seen:
            raise RosterError(f"duplicate ciphertext from participant {ct.index}")
        seen.add(ct.index)
        rounds.add(ct.round_id)
    if len(rounds) > 1:
        raise RosterError("ciphertexts belong to different rounds")
    return params.prod(ct.O for ct in ciphertexts)


def combine_for_roster(params: GroupParams, ciphertexts: Sequence[Ciphertext],
                       roster: Sequence[int]) -> Element:
    """combine() plus the check that exactly the roster contributed."""
    got = sorted(ct.index for ct in ciphertexts)
    if got != sorted(roster):
        missing = sorted(set(roster) - set(got))
        raise RosterError(f"missing or unexpected ciphertexts (missing {missing})")
    return combine(params, ciphertexts)
