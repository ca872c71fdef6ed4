"""Prime-order group arithmetic and the message encoding used on the channel.

Elements are plain Python ints living in the quadratic-residue subgroup of
Z_p^* for a safe prime p = 2q + 1.  Because p = 3 (mod 4), square roots are a
single exponentiation, which is what makes the encoding below decodable.

A payload m (an integer of at most L bits) is mapped to

    u = (m << c) | checksum(m),     E = u^2 mod p

and a combined slot value C is classified by taking the smaller square root
of C and checking range and checksum.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Union

import gmpy2

Element = int

_CHECKSUM_TAG = b"dcsicta/checksum/v1"


def powmod(a: int, e: int, m: int) -> int:
    return int(gmpy2.powmod(a, e, m))


class ParameterError(ValueError):
    """Group parameters are out of range or inconsistent."""


class PayloadError(ValueError):
    """A payload cannot be encoded under the given parameters."""


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    payload_bits: int
    checksum_bits: int

    def __post_init__(self):
        validate_params(self)

    @property
    def code_bits(self) -> int:
        return self.payload_bits + self.checksum_bits

    @property
    def element_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def payload_bytes(self) -> int:
        return max(1, (self.payload_bits + 7) // 8)

    # group operations

    def mul(self, a: Element, b: Element) -> Element:
        return a * b % self.p

    def inv(self, a: Element) -> Element:
        return int(gmpy2.invert(a, self.p))

    def div(self, a: Element, b: Element) -> Element:
        return a * int(gmpy2.invert(b, self.p)) % self.p

    def exp(self, a: Element, e: int) -> Element:
        return powmod(a, e % self.q, self.p)

    def gexp(self, e: int) -> Element:
        return powmod(self.g, e % self.q, self.p)

    def prod(self, values) -> Element:
        acc = 1
        for v in values:
            acc = acc * v % self.p
        return acc

    def is_element(self, a: int) -> bool:
        # the order-q subgroup of a safe-prime group is exactly the quadratic residues
        return isinstance(a, int) and 0 < a < self.p and gmpy2.jacobi(a, self.p) == 1

    # serialization

    def to_bytes(self, a: Element) -> bytes:
        return a.to_bytes(self.element_bytes, "big")

    def to_hex(self, a: Element) -> str:
        return self.to_bytes(a).hex()

    def from_hex(self, s: str) -> Element:
        return int(s, 16)

    def header(self) -> dict:
        """Serialized form in the fixed field order (p, q, g, L, c)."""
        return {
            "p": format(self.p, "x"),
            "q": format(self.q, "x"),
            "g": format(self.g, "x"),
            "L": format(self.payload_bits, "x"),
            "c": format(self.checksum_bits, "x"),
        }

    @classmethod
    def from_header(cls, d: dict) -> GroupParams:
        return cls(
            p=int(d["p"], 16),
            q=int(d["q"], 16),
            g=int(d["g"], 16),
            payload_bits=int(d["L"], 16),
            checksum_bits=int(d["c"], 16),
        )


def validate_params(params: GroupParams) -> None:
    p, q, g = params.p, params.q, params.g
    if params.payload_bits < 1 or params.checksum_bits < 0:
        raise ParameterError("payload_bits must be >= 1 and checksum_bits >= 0")
    if p != 2 * q + 1:
        raise ParameterError("p must equal 2q + 1")
    if not (gmpy2.is_prime(q, 40) and gmpy2.is_prime(p, 40)):
        raise ParameterError("p and q must both be prime")
    if q < 3:
        raise ParameterError("q too small")
    if not (1 < g < p) or pow(g, q, p) != 1:
        raise ParameterError("g must have order q modulo p")
    if params.code_bits > q.bit_length() - 2:
        raise ParameterError(
            f"payload_bits + checksum_bits = {params.code_bits} exceeds "
            f"bitlength(q) - 2 = {q.bit_length() - 2}"
        )


def make_params(modulus_bits: int, payload_bits: int, checksum_bits: int,
                seed: bytes) -> GroupParams:
    """Deterministically search for a safe prime of exactly `modulus_bits` bits."""
    if modulus_bits < 16:
        raise ParameterError("modulus_bits must be >= 16")
    if payload_bits < 1 or checksum_bits < 0:
        raise ParameterError("payload_bits must be >= 1 and checksum_bits >= 0")
    if payload_bits + checksum_bits > modulus_bits - 3:
        raise ParameterError(
            f"payload_bits + checksum_bits must be <= modulus_bits - 3 = {modulus_bits - 3}"
        )
    qbits = modulus_bits - 1
    lo, hi = 1 << (qbits - 1), 1 << qbits
    stream = hashlib.shake_256(b"dcsicta/params/v1" + seed)
    start = int.from_bytes(stream.digest(qbits // 8 + 8), "big")
    q = lo + start % (hi - lo)
    # q = 5 mod 6 keeps both q and 2q+1 clear of the factors 2 and 3
    q += (5 - q % 6) % 6
    while True:
        if q >= hi:
            q = lo + (5 - lo % 6) % 6
        if gmpy2.is_prime(q, 40) and gmpy2.is_prime(2 * q + 1, 40):
            break
        q += 6
    # 4 = 2^2 is a non-trivial quadratic residue, hence a generator of the order-q subgroup
    return GroupParams(2 * q + 1, q, 4, payload_bits, checksum_bits)


# outcomes of a slot


@dataclass(frozen=True)
class Idle:
    tag = "idle"


@dataclass(frozen=True)
class Message:
    value: int
    payload: bytes

    tag = "message"


@dataclass(frozen=True)
class Collision:
    tag = "collision"


SlotOutcome = Union[Idle, Message, Collision]


def checksum(params: GroupParams, value: int) -> int:
    c = params.checksum_bits
    if c == 0:
        return 0
    data = _CHECKSUM_TAG + value.to_bytes(params.payload_bytes, "big")
    digest = hashlib.sha256(data).digest()
    while len(digest) * 8 < c:
        digest += hashlib.sha256(digest).digest()
    return int.from_bytes(digest, "big") >> (len(digest) * 8 - c)


def payload_value(payload: Union[bytes, int]) -> int:
    if isinstance(payload, (bytes, bytearray)):
        return int.from_bytes(payload, "big")
    if isinstance(payload, int) and payload >= 0:
        return payload
    raise PayloadError("payload must be bytes or a non-negative int")


def code_word(params: GroupParams, payload: Union[bytes, int]) -> int:
    """The integer u whose square encodes `payload`."""
    m = payload_value(payload)
    if m.bit_length() > params.payload_bits:
        raise PayloadError(
            f"payload has {m.bit_length()} bits, limit is {params.payload_bits}"
        )
    u = (m << params.checksum_bits) | checksum(params, m)
    if u < 2:
        raise PayloadError("payload maps to a reserved code word (u < 2)")
    return u


def encode_message(params: GroupParams, payload: Union[bytes, int]) -> Element:
    u = code_word(params, payload)
    return u * u % params.p


def make_message(params: GroupParams, value: int) -> Message:
    return Message(value, value.to_bytes(params.payload_bytes, "big"))


def classify(params: GroupParams, C: Element) -> SlotOutcome:
    if C == 1:
        return Idle()
    p = params.p
    r = powmod(C, (p + 1) // 4, p)
    u = min(r, p - r)
    if u < 2 or u >> params.code_bits:
        return Collision()
    mask = (1 << params.checksum_bits) - 1
    m = u >> params.checksum_bits
    if checksum(params, m) != (u & mask):
        return Collision()
    return make_message(params, m)


def decode_code_word(params: GroupParams, E: Element) -> int:
    """Smaller square root of an encoded message, used to order messages."""
    p = params.p
    r = powmod(E, (p + 1) // 4, p)
    return min(r, p - r)


def outcome_to_json(outcome: SlotOutcome) -> dict:
    if isinstance(outcome, Message):
        return {"tag": "message", "payload": outcome.payload.hex()}
    return {"tag": outcome.tag}
