"""Non-interactive sigma protocols over the channel group.

Three proof systems, all made non-interactive with a domain-separated
Fiat-Shamir hash:

* discrete-log equality, log_B V = log_g y (Chaum-Pedersen);
* a two-branch OR of such equalities (one branch simulated);
* discrete-log inequality, log_B V != log_g y, via an auxiliary element
  Caux = (B^x / V)^s which is 1 exactly when the logs agree.

The module also builds the retransmission statements a participant has to
prove for every transmitted non-root node of the resolution tree.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from .group import Element, GroupParams, powmod

EQDL = "eqdl"
OR2 = "or2"
NEQDL = "neqdl"


class ProofError(ValueError):
    """The prover's witness does not satisfy the statement."""


@dataclass(frozen=True)
class EqDlStatement:
    """Claim: log_base(value) == log_g(y)."""
    base: Element
    value: Element
    y: Element


@dataclass(frozen=True)
class OrStatement:
    left: EqDlStatement
    right: EqDlStatement

    def __post_init__(self):
        if self.left.y != self.right.y:
            raise ValueError("both branches must refer to the same public key")

    def branch(self, which: int) -> EqDlStatement:
        if which == 1:
            return self.left
        if which == 2:
            return self.right
        raise ValueError("branch must be 1 or 2")


@dataclass(frozen=True)
class NeqDlStatement:
    """Claim: log_base(value) != log_g(y)."""
    base: Element
    value: Element
    y: Element


@dataclass(frozen=True)
class Proof:
    kind: str
    commitments: tuple
    challenges: tuple
    responses: tuple
    aux: Optional[int] = None

    def to_json(self) -> dict:
        d = {
            "kind": self.kind,
            "t": [format(v, "x") for v in self.commitments],
            "c": [format(v, "x") for v in self.challenges],
            "s": [format(v, "x") for v in self.responses],
        }
        if self.aux is not None:
            d["aux"] = format(self.aux, "x")
        return d

    @classmethod
    def from_json(cls, d: dict) -> Proof:
        aux = d.get("aux")
        return cls(
            kind=d["kind"],
            commitments=tuple(int(v, 16) for v in d["t"]),
            challenges=tuple(int(v, 16) for v in d["c"]),
            responses=tuple(int(v, 16) for v in d["s"]),
            aux=None if aux is None else int(aux, 16),
        )


def _default_rng():
    return random.SystemRandom()


def _absorb(h, value: int) -> None:
    b = value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")
    h.update(len(b).to_bytes(4, "big"))
    h.update(b)


def challenge(params: GroupParams, kind: str, elements, context: bytes = b"") -> int:
    h = hashlib.sha512()
    tag = b"dcsicta/fs/v1/" + kind.encode()
    h.update(len(tag).to_bytes(4, "big") + tag)
    h.update(len(context).to_bytes(4, "big") + context)
    for v in (params.p, params.q, params.g, *elements):
        _absorb(h, v)
    return int.from_bytes(h.digest(), "big") % params.q


def _members(params: GroupParams, *values) -> bool:
    return all(params.is_element(v) for v in values)


# equality of discrete logs


def eqdl_holds(params: GroupParams, stmt: EqDlStatement, x: int) -> bool:
    return params.gexp(x) == stmt.y and params.exp(stmt.base, x) == stmt.value


def _eqdl_elements(stmt: EqDlStatement):
    return (stmt.base, stmt.value, stmt.y)


def check_eqdl(params: GroupParams, stmt: EqDlStatement, t1: int, t2: int, c: int, s: int) -> bool:
    """Verification equations of one Chaum-Pedersen transcript."""
    p = params.p
    return (params.gexp(s) == t1 * powmod(stmt.y, c, p) % p
            and params.exp(stmt.base, s) == t2 * powmod(stmt.value, c, p) % p)


def simulate_eqdl(params: GroupParams, stmt: EqDlStatement, c: int, rng=None):
    """Transcript (t1, t2, s) accepted for challenge c, produced without a witness."""
    rng = rng or _default_rng()
    s = rng.randrange(params.q)
    t1 = params.gexp(s) * params.exp(stmt.y, -c) % params.p
    t2 = params.exp(stmt.base, s) * params.exp(stmt.value, -c) % params.p
    return t1, t2, s


def prove_eqdl(params: GroupParams, stmt: EqDlStatement, x: int, rng=None,
               context: bytes = b"") -> Proof:
    if not eqdl_holds(params, stmt, x):
        raise ProofError("witness does not satisfy the equality statement")
    rng = rng or _default_rng()
    w = rng.randrange(params.q)
    t1, t2 = params.gexp(w), params.exp(stmt.base, w)
    c = challenge(params, EQDL, (*_eqdl_elements(stmt), t1, t2), context)
    s = (w + c * x) % params.q
    return Proof(EQDL, (t1, t2), (c,), (s,))


def verify_eqdl(params: GroupParams, stmt: EqDlStatement, proof: Proof,
                context: bytes = b"") -> bool:
    try:
        if proof.kind != EQDL:
            return False
        (t1, t2), (c,), (s,) = proof.commitments, proof.challenges, proof.responses
    except (ValueError, TypeError):
        return False
    if not _members(params, t1, t2, *_eqdl_elements(stmt)):
        return False
    if c != challenge(params, EQDL, (*_eqdl_elements(stmt), t1, t2), context):
        return False
    return check_eqdl(params, stmt, t1, t2, c, s)


# OR of two equalities


def _or_elements(stmt: OrStatement):
    return (*_eqdl_elements(stmt.left), *_eqdl_elements(stmt.right))


def satisfied_branch(params: GroupParams, stmt: OrStatement, x: int) -> Optional[int]:
    """First branch the witness satisfies, or None."""
    for which in (1, 2):
        if eqdl_holds(params, stmt.branch(which), x):
            return which
    return None


def prove_or2(params: GroupParams, stmt: OrStatement, which: int, x: int, rng=None,
              context: bytes = b"") -> Proof:
    real = stmt.branch(which)
    if not eqdl_holds(params, real, x):
        raise ProofError(f"witness does not satisfy branch {which}")
    rng = rng or _default_rng()
    q = params.q
    other = 2 if which == 1 else 1
    c_sim = rng.randrange(q)
    sim = simulate_eqdl(params, stmt.branch(other), c_sim, rng)
    w = rng.randrange(q)
    mine = (params.gexp(w), params.exp(real.base, w))

    commits = {which: mine, other: sim[:2]}
    t = (*commits[1], *commits[2])
    c = challenge(params, OR2, (*_or_elements(stmt), *t), context)
    c_real = (c - c_sim) % q
    s_real = (w + c_real * x) % q
    ch = {which: c_real, other: c_sim}
    rs = {which: s_real, other: sim[2]}
    return Proof(OR2, t, (ch[1], ch[2]), (rs[1], rs[2]))


def verify_or2(params: GroupParams, stmt: OrStatement, proof: Proof,
               context: bytes = b"") -> bool:
    try:
        if proof.kind != OR2:
            return False
        t1a, t2a, t1b, t2b = proof.commitments
        c1, c2 = proof.challenges
        s1, s2 = proof.responses
    except (ValueError, TypeError):
        return False
    if not _members(params, t1a, t2a, t1b, t2b, *_or_elements(stmt)):
        return False
    c = challenge(params, OR2, (*_or_elements(stmt), t1a, t2a, t1b, t2b), context)
    if (c1 + c2) % params.q != c:
        return False
    return (check_eqdl(params, stmt.left, t1a, t2a, c1, s1)
            and check_eqdl(params, stmt.right, t1b, t2b, c2, s2))


# inequality of discrete logs


def _neq_elements(stmt: NeqDlStatement):
    return (stmt.base, stmt.value, stmt.y)


def check_neqdl(params: GroupParams, stmt: NeqDlStatement, caux: int, T1: int, T2: int,
                c: int, za: int, zb: int) -> bool:
    if caux == 1:
        return False
    p = params.p
    lhs1 = params.exp(stmt.base, za) * params.exp(stmt.value, -zb) % p
    lhs2 = params.gexp(za) * params.exp(stmt.y, -zb) % p
    return lhs1 == T1 * powmod(caux, c, p) % p and lhs2 == T2


def prove_neqdl(params: GroupParams, stmt: NeqDlStatement, x: int, rng=None,
                context: bytes = b"") -> Proof:
    q = params.q
    if params.gexp(x) != stmt.y:
        raise ProofError("x is not the discrete log of y")
    if params.exp(stmt.base, x) == stmt.value:
        raise ProofError("statement is false: the logarithms are equal")
    rng = rng or _default_rng()
    s = rng.randrange(1, q)
    caux = params.exp(params.div(params.exp(stmt.base, x), stmt.value), s)
    alpha, beta = x * s % q, s
    wa, wb = rng.randrange(q), rng.randrange(q)
    T1 = params.exp(stmt.base, wa) * params.exp(stmt.value, -wb) % params.p
    T2 = params.gexp(wa) * params.exp(stmt.y, -wb) % params.p
    c = challenge(params, NEQDL, (*_neq_elements(stmt), caux, T1, T2), context)
    return Proof(NEQDL, (T1, T2), (c,), ((wa + c * alpha) % q, (wb + c * beta) % q), aux=caux)


def verify_neqdl(params: GroupParams, stmt: NeqDlStatement, proof: Proof,
                 context: bytes = b"") -> bool:
    try:
        if proof.kind != NEQDL or proof.aux is None:
            return False
        (T1, T2), (c,), (za, zb) = proof.commitments, proof.challenges, proof.responses
    except (ValueError, TypeError):
        return False
    caux = proof.aux
    if not _members(params, caux, T1, T2, *_neq_elements(stmt)):
        return False
    if c != challenge(params, NEQDL, (*_neq_elements(stmt), caux, T1, T2), context):
        return False
    return check_neqdl(params, stmt, caux, T1, T2, c, za, zb)


def simulate_neqdl(params: GroupParams, stmt: NeqDlStatement, c: int, rng=None):
    """Accepted (caux, T1, T2, za, zb) for challenge c, produced without a witness."""
    rng = rng or _default_rng()
    q, p = params.q, params.p
    caux = params.gexp(rng.randrange(1, q))
    za, zb = rng.randrange(q), rng.randrange(q)
    T1 = (params.exp(stmt.base, za) * params.exp(stmt.value, -zb)
          * params.exp(caux, -c)) % p
    T2 = params.gexp(za) * params.exp(stmt.y, -zb) % p
    return caux, T1, T2, za, zb


# retransmission statements


@dataclass
class CiphertextHistory:
    """One participant's pad bases and ciphertexts per transmitted node of an epoch."""
    bases: dict = field(default_factory=dict)
    ciphertexts: dict = field(default_factory=dict)


def _is_transmitted(tree, node: int) -> bool:
    if tree is None:
        return node == 1 or node % 2 == 0
    return tree.is_transmitted(node)


def retransmission_chain(node: int, transmitted: Callable[[int], bool]) -> tuple[int, list[int]]:
    """(anchor, [j_1, ..., j_t]) for a transmitted left child `node` = 2j.

    j_1 = 2j, j_k = j_{k-1}/2 - 1, stopping once j_t/2 is transmitted; the
    anchor is j_t/2, the nearest transmitted ancestor.
    """
    chain = [node]
    cur = node
    while not transmitted(cur // 2):
        cur = cur // 2 - 1
        chain.append(cur)
    return cur // 2, chain


def build_retransmission_statement(params: GroupParams, node: int, tree,
                                   bases: Mapping[int, Element],
                                   ciphertexts: Mapping[int, Element],
                                   y: Element) -> OrStatement:
    """OR statement a participant proves for its ciphertext at `node`.

    `bases`/`ciphertexts` map transmitted node ids of the current epoch to
    this participant's A and O.  `tree` supplies transmission status
    (anything with ``is_transmitted(node)``; ``None`` uses the id rule).
    """
    if node <= 1 or node % 2:
        raise ValueError(f"no retransmission statement is due for node {node}")
    if tree is not None and not tree.is_transmitted(node):
        raise ValueError(f"node {node} is not transmitted")
    anchor, chain = retransmission_chain(node, lambda j: _is_transmitted(tree, j))
    left_base = params.div(bases[anchor], params.prod(bases[j] for j in chain))
    left_value = params.div(ciphertexts[anchor], params.prod(ciphertexts[j] for j in chain))
    return OrStatement(
        EqDlStatement(left_base, left_value, y),
        EqDlStatement(bases[node], ciphertexts[node], y),
    )


def virtual_ciphertext(params: GroupParams, node: int, tree,
                       bases: Mapping[int, Element],
                       ciphertexts: Mapping[int, Element]) -> tuple[Element, Element]:
    """(base, value) pair standing in for a participant's ciphertext at any node.

    Transmitted nodes use the real pair; an inferred node 2j+1 uses the
    quotient of its parent's pair by its sibling's pair, recursively.
    """
    if _is_transmitted(tree, node):
        return bases[node], ciphertexts[node]
    parent, sibling = node // 2, node - 1
    pb, pv = virtual_ciphertext(params, parent, tree, bases, ciphertexts)
    return params.div(pb, bases[sibling]), params.div(pv, ciphertexts[sibling])
