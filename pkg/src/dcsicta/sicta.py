"""SICTA collision resolution with inference cancellation and blocked access.

Node j's collision is resolved in nodes 2j (transmitted) and 2j+1 (inferred
as C_j / C_2j).  Nodes are processed in ascending id order, which reproduces
the row order of the usual textbook tree drawing.

The tree is generic over an *algebra*: `GroupAlgebra` works on combined group
elements, `SetAlgebra` on plain sets of message ids for crypto-free runs.
Both feed the same participant decision code so the two modes produce the
same tree for the same coins.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from . import group
from .group import Collision, Element, GroupParams, Idle, Message, SlotOutcome
from .verification import BranchMonitor, Decision, monitor_and_skip

STANDARD = "standard"
OPTIMIZED = "optimized"
VARIANTS = (STANDARD, OPTIMIZED)


class TreeError(RuntimeError):
    pass


class Status(str, Enum):
    TRANSMITTED = "transmitted"
    INFERRED = "inferred"
    PENDING = "pending"
    SKIPPED = "skipped"


class PlanKind(str, Enum):
    TRANSMIT = "transmit"
    INFER = "infer"


@dataclass(frozen=True)
class RoundPlan:
    node: int
    kind: PlanKind
    bases: Optional[Mapping[int, Element]] = None


class EpochDone:
    def __repr__(self):
        return "EpochDone"


EPOCH_DONE = EpochDone()


def is_transmitted_id(node: int) -> bool:
    return node == 1 or node % 2 == 0


# algebras


class GroupAlgebra:
    def __init__(self, params: GroupParams):
        self.params = params

    def div(self, a, b):
        return self.params.div(a, b)

    def classify(self, value) -> SlotOutcome:
        return group.classify(self.params, value)

    def render(self, value) -> str:
        return self.params.to_hex(value)


class SetAlgebra:
    """Combined values as frozensets of distinct message ids."""

    def div(self, a, b):
        if not b <= a:
            raise TreeError("inference of a set that is not contained in its parent")
        return a - b

    def classify(self, value) -> SlotOutcome:
        if not value:
            return Idle()
        if len(value) == 1:
            (v,) = value
            return Message(v, v.to_bytes(max(1, (v.bit_length() + 7) // 8), "big"))
        return Collision()

    def render(self, value) -> str:
        return ",".join(str(v) for v in sorted(value)) or "-"


@dataclass
class Node:
    id: int
    C: object = None
    status: Status = Status.PENDING
    outcome: Optional[SlotOutcome] = None
    monitor: Optional[BranchMonitor] = None

    @property
    def transmitted(self) -> bool:
        return is_transmitted_id(self.id)

    @property
    def resolved(self) -> bool:
        return self.status is not Status.PENDING


class ResolutionTree:
    def __init__(self, algebra: Union[GroupAlgebra, SetAlgebra], epoch: int = 0,
                 skip_threshold: Optional[int] = None):
        self.algebra = algebra
        self.epoch = epoch
        self.skip_threshold = skip_threshold
        self.nodes: dict[int, Node] = {1: Node(1)}
        self._pending = [1]
        self.skipped: list[int] = []

    def node(self, j: int) -> Node:
        return self.nodes[j]

    def is_transmitted(self, j: int) -> bool:
        return is_transmitted_id(j)

    def schedule_next(self) -> Union[RoundPlan, EpochDone]:
        if not self._pending:
            return EPOCH_DONE
        j = self._pending[0]
        return RoundPlan(j, PlanKind.TRANSMIT if is_transmitted_id(j) else PlanKind.INFER)

    def _pop(self, j: int) -> None:
        if not self._pending or self._pending[0] != j:
            raise TreeError(f"node {j} is not the next node to resolve")
        heapq.heappop(self._pending)

    def apply_round(self, j: int, C) -> SlotOutcome:
        if not is_transmitted_id(j):
            raise TreeError(f"node {j} is inferred, not transmitted")
        self._pop(j)
        return self._resolve(j, C, Status.TRANSMITTED)

    def infer(self, j: int) -> SlotOutcome:
        if is_transmitted_id(j):
            raise TreeError(f"node {j} is transmitted, not inferred")
        parent, sibling = self.nodes.get(j // 2), self.nodes.get(j - 1)
        if parent is None or sibling is None or not sibling.resolved or parent.C is None:
            raise TreeError(f"cannot infer node {j} before its parent and sibling are resolved")
        self._pop(j)
        return self._resolve(j, self.algebra.div(parent.C, sibling.C), Status.INFERRED)

    def _resolve(self, j: int, C, status: Status) -> SlotOutcome:
        node = self.nodes.setdefault(j, Node(j))
        node.C = C
        node.status = status
        node.outcome = self.algebra.classify(C)
        if not isinstance(node.outcome, Collision):
            return node.outcome
        if self.skip_threshold is not None:
            if j == 1:
                node.monitor = BranchMonitor(j, 0, self.skip_threshold)
            else:
                parent = self.nodes[j // 2]
                node.monitor = BranchMonitor(j, parent.monitor.count, self.skip_threshold)
                split = C != parent.C
                if monitor_and_skip(node.monitor, split) is Decision.SKIP:
                    node.status = Status.SKIPPED
                    self.skipped.append(j)
                    return node.outcome
        for child in (2 * j, 2 * j + 1):
            self.nodes[child] = Node(child)
            heapq.heappush(self._pending, child)
        return node.outcome

    @property
    def done(self) -> bool:
        return not self._pending

    def transmitted_ids(self) -> list[int]:
        return sorted(j for j, n in self.nodes.items()
                      if n.resolved and is_transmitted_id(j))

    def inferred_ids(self) -> list[int]:
        return sorted(j for j, n in self.nodes.items()
                      if n.resolved and not is_transmitted_id(j))

    def messages(self) -> list[tuple[int, Message]]:
        return sorted((j, n.outcome) for j, n in self.nodes.items()
                      if isinstance(n.outcome, Message))

    def conservation_holds(self) -> bool:
        """C_2j * C_2j+1 == C_j at every internal node with both children resolved."""
        for j, n in self.nodes.items():
            a, b = self.nodes.get(2 * j), self.nodes.get(2 * j + 1)
            if a is None or b is None or not (a.resolved and b.resolved):
                continue
            if self.algebra.div(n.C, a.C) != b.C:
                return False
        return True

    def subtree_message_nodes(self, j: int) -> Optional[list[int]]:
        """Nodes below j that resolved as messages, or None if part of the subtree
        is unresolved or skipped."""
        n = self.nodes.get(j)
        if n is None or not n.resolved or n.status is Status.SKIPPED:
            return None
        if isinstance(n.outcome, Message):
            return [j]
        if isinstance(n.outcome, Idle):
            return []
        left = self.subtree_message_nodes(2 * j)
        right = self.subtree_message_nodes(2 * j + 1)
        if left is None or right is None:
            return None
        return left + right

    def dump(self) -> str:
        lines = []
        for j in sorted(self.nodes):
            n = self.nodes[j]
            tag = n.outcome.tag if n.outcome is not None else "-"
            c = self.algebra.render(n.C) if n.C is not None else "-"
            lines.append(f"{j} {n.status.value} {tag} {c}")
        return "\n".join(lines)


def recover_sibling(params: GroupParams, C_j: Element, own: Element) -> Optional[Element]:
    """The other message of a two-message collision, or None if there were more."""
    other = params.div(C_j, own)
    if other == 1:
        return None
    if isinstance(group.classify(params, other), Message):
        return other
    return None


# participants


class CoinScript:
    """Forced split decisions: node -> set of participant indices that go left."""

    def __init__(self, script: Mapping[int, Iterable[int]]):
        self.script = {int(k): frozenset(v) for k, v in script.items()}

    def get(self, node: int, index: int) -> Optional[bool]:
        left = self.script.get(node)
        if left is None:
            return None
        return index in left


FIG1_SCRIPT = CoinScript({1: {2, 4}, 2: {2}, 3: {3}, 7: {1}})


def coin_stream(seed: int, index: int) -> random.Random:
    return random.Random(f"dcsicta/coins/{seed}/{index}")


@dataclass
class ParticipantCrState:
    """Collision-resolution state of one participant within the current epoch."""
    index: int
    coins: random.Random
    script: Optional[CoinScript] = None
    message: Optional[int] = None        # payload value in flight this epoch
    code: Optional[int] = None           # value compared by the two-collision rule
    element: Optional[Element] = None    # encoded message (crypto mode only)
    node: Optional[int] = None           # node currently holding the message
    two_nodes: dict = field(default_factory=dict)  # node -> sibling code of a known 2-collision
    arrivals: list = field(default_factory=list)   # queued (payload, arrival_round) pairs

    def start_epoch(self, message: Optional[int], code: Optional[int] = None,
                    element: Optional[Element] = None) -> None:
        self.message = message
        self.code = message if code is None else code
        self.element = element
        self.node = 1 if message is not None else None
        self.two_nodes = {}

    def coin(self, node: int) -> bool:
        if self.script is not None:
            forced = self.script.get(node, self.index)
            if forced is not None:
                return forced
        return bool(self.coins.getrandbits(1))

    def rule_applies(self, node: int, sibling_code: Optional[int], optimized: bool) -> bool:
        if sibling_code is None:
            return False
        self.two_nodes[node] = sibling_code
        # a known 2-collision directly above means the rule was already broken there
        return optimized and (node == 1 or node // 2 not in self.two_nodes)

    def honest_goes_left(self, node: int, sibling_code: Optional[int], optimized: bool) -> bool:
        """Retransmit at 2*node?  Only called while the message sits in collision `node`."""
        if self.rule_applies(node, sibling_code, optimized):
            return self.code < sibling_code
        return self.coin(node)

    def moved(self, node: int, went_left: bool) -> None:
        self.node = 2 * node if went_left else 2 * node + 1


# crypto-free epoch resolution


@dataclass
class EpochShape:
    transmitted: list = field(default_factory=list)
    inferred: list = field(default_factory=list)
    delivered: list = field(default_factory=list)   # (node, participant index)
    skipped: list = field(default_factory=list)     # (node, [participant indices])
    collisions: list = field(default_factory=list)  # (node, size), in resolution order

    @property
    def rounds(self) -> int:
        return len(self.transmitted)


def resolve_epoch_fast(participants: list[ParticipantCrState], optimized: bool,
                       skip_threshold: Optional[int] = None) -> EpochShape:
    """Resolve one epoch over message ids only.

    `participants` are those holding a message (``start_epoch`` already
    called).  Uses the same decisions as the group-based engine; node order
    inside this function does not matter because every participant consumes
    coins along its own root-to-leaf path only.
    """
    shape = EpochShape()
    # (node, members, nonsplit run)
    stack = [(1, participants, 0)]
    while stack:
        j, members, run = stack.pop()
        if j == 1 or not j & 1:
            shape.transmitted.append(j)
        else:
            shape.inferred.append(j)
        k = len(members)
        if k == 1:
            shape.delivered.append((j, members[0].index))
            members[0].node = j
            continue
        if k == 0:
            continue
        shape.collisions.append((j, k))
        if skip_threshold is not None and run >= skip_threshold:
            shape.skipped.append((j, [m.index for m in members]))
            continue
        left, right = [], []
        for m in members:
            sib = None
            if k == 2:
                other = members[1] if members[0] is m else members[0]
                sib = other.code
            if m.honest_goes_left(j, sib, optimized):
                left.append(m)
            else:
                right.append(m)
        lrun = run + 1 if not right else 0
        rrun = run + 1 if not left else 0
        stack.append((2 * j + 1, right, rrun))
        stack.append((2 * j, left, lrun))
    shape.transmitted.sort()
    shape.inferred.sort()
    return shape


def count_rounds_fast(participants: list[ParticipantCrState], optimized: bool) -> int:
    """Transmitted rounds needed for one epoch (statistics only)."""
    return resolve_epoch_fast(participants, optimized).rounds
