"""ScalerNode catalog: registration, activation, suspension, retirement.

The registry also keeps the per-(node, resource type) allocation tally that the
composition layer writes through :meth:`Registry.allocate` and
:meth:`Registry.release`; capability maps and retirement checks read it.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional

from . import errors
from .ledger import Ledger
from .units import (
    Capacity,
    ResourceType,
    capacity_to_json,
    check_amount,
    fraction_str,
    parse_capacity,
    parse_fraction,
    parse_int,
)

logger = logging.getLogger(__name__)


class NodeStatus(str, enum.Enum):
    REGISTERED = "Registered"
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    RETIRED = "Retired"


_EDGES = {
    (NodeStatus.REGISTERED, NodeStatus.ACTIVE),
    (NodeStatus.ACTIVE, NodeStatus.SUSPENDED),
    (NodeStatus.SUSPENDED, NodeStatus.ACTIVE),
    (NodeStatus.ACTIVE, NodeStatus.RETIRED),
    (NodeStatus.SUSPENDED, NodeStatus.RETIRED),
}


@dataclass
class HardwareClass:
    id: str
    capacity_template: Capacity
    performance_profile: Dict[str, int]
    challenge_set: List[str]

    def __post_init__(self):
        if not self.challenge_set:
            raise errors.InvalidParameters(f"class {self.id}: challenge_set must be non-empty")
        if not any(q > 0 for q in self.capacity_template.values()):
            raise errors.MalformedCapacity(f"class {self.id}: empty capacity template")


@dataclass
class Region:
    """Region catalog entry; ``collateral_rates`` are tokens per canonical unit."""

    id: str
    collateral_rates: Dict[ResourceType, int] = field(default_factory=dict)

    def rate(self, rtype: ResourceType) -> int:
        if rtype in self.collateral_rates:
            return self.collateral_rates[rtype]
        return self.collateral_rates.get(ResourceType(rtype.kind), 0)


@dataclass
class ScalerNode:
    id: str
    provider: str
    hw_class: str
    region: str
    capacity: Capacity
    rewards_share: Fraction
    reservation_price: int
    max_booking_duration: int
    commitment_end: int
    registered_at: int
    profile: Dict[str, int]
    status: NodeStatus = NodeStatus.REGISTERED


class Registry:
    def __init__(self, ledger: Ledger, regions: Iterable[Region] = (), classes: Iterable[HardwareClass] = ()):
        self.ledger = ledger
        self.regions: Dict[str, Region] = {r.id: r for r in regions}
        self.classes: Dict[str, HardwareClass] = {c.id: c for c in classes}
        self.nodes: Dict[str, ScalerNode] = {}
        self.allocated: Dict[str, Dict[ResourceType, int]] = {}
        self._seq = 0

    def add_region(self, region: Region) -> None:
        self.regions[region.id] = region

    def add_class(self, hw_class: HardwareClass) -> None:
        self.classes[hw_class.id] = hw_class

    def node(self, node_id: str) -> ScalerNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise errors.UnknownNode(node_id) from None

    def register_node(
        self,
        provider: str,
        hw_class: str,
        region: str,
        capacity: Optional[Mapping[ResourceType, int]],
        rewards_share,
        reservation_price: int,
        max_booking_duration: int,
        commitment_end: int,
        node_id: Optional[str] = None,
        profile: Optional[Mapping[str, int]] = None,
    ) -> str:
        cls = self.classes.get(hw_class)
        if cls is None:
            raise errors.UnknownClass(hw_class)
        if region not in self.regions:
            raise errors.UnknownRegion(region)
        capacity = dict(cls.capacity_template if capacity is None else capacity)
        _check_conforms(capacity, cls.capacity_template)
        share = parse_fraction(rewards_share)
        if not 0 <= share <= 1:
            raise errors.InvalidParameters(f"rewards_share {share} outside [0, 1]")
        check_amount(reservation_price)
        if max_booking_duration <= 0:
            raise errors.InvalidParameters("max_booking_duration must be positive")
        if commitment_end <= self.ledger.epoch:
            raise errors.InvalidCommitment(f"commitment_end {commitment_end} not after epoch {self.ledger.epoch}")
        if node_id is None:
            self._seq += 1
            node_id = f"node-{self._seq:04d}"
        if node_id in self.nodes:
            raise errors.DuplicateId(node_id)
        prof = dict(cls.performance_profile)
        if profile:
            unknown = set(profile) - set(prof)
            if unknown:
                raise errors.InvalidParameters(f"profile KPIs not in class: {sorted(unknown)}")
            prof.update(profile)
        self.nodes[node_id] = ScalerNode(
            node_id, provider, hw_class, region, capacity, share, reservation_price,
            max_booking_duration, commitment_end, self.ledger.epoch, prof,
        )
        self.allocated[node_id] = {}
        self.ledger.open_account(provider)
        return node_id

    def min_collateral(self, node_id: str) -> int:
        node = self.node(node_id)
        region = self.regions[node.region]
        return sum(q * region.rate(t) for t, q in node.capacity.items())

    def _transition(self, node: ScalerNode, new: NodeStatus) -> None:
        if (node.status, new) not in _EDGES:
            raise errors.InvalidTransition(f"{node.id}: {node.status.value} -> {new.value}")
        logger.debug("%s: %s -> %s", node.id, node.status.value, new.value)
        node.status = new

    def activate(self, node_id: str) -> NodeStatus:
        node = self.node(node_id)
        if node.status is NodeStatus.ACTIVE:
            return node.status
        need, have = self.min_collateral(node_id), self.ledger.collateral(node_id)
        if node.status in (NodeStatus.REGISTERED, NodeStatus.SUSPENDED) and have < need:
            raise errors.InsufficientCollateral(f"{node_id}: locked {have} < required {need}")
        self._transition(node, NodeStatus.ACTIVE)
        return node.status

    def retire(self, node_id: str) -> NodeStatus:
        node = self.node(node_id)
        if self.ledger.epoch < node.commitment_end:
            raise errors.CommitmentActive(f"{node_id} committed until {node.commitment_end}")
        if any(self.allocated[node_id].values()):
            raise errors.AllocationsOutstanding(node_id)
        self._transition(node, NodeStatus.RETIRED)
        return node.status

    def enforce_collateral(self) -> List[str]:
        """Suspend Active nodes whose locked collateral fell below the minimum."""
        suspended = []
        for node in self.active_nodes():
            if self.ledger.collateral(node.id) < self.min_collateral(node.id):
                self._transition(node, NodeStatus.SUSPENDED)
                suspended.append(node.id)
        if suspended:
            logger.info("suspended for collateral shortfall: %s", suspended)
        return suspended

    def is_active(self, node_id: str) -> bool:
        n = self.nodes.get(node_id)
        return n is not None and n.status is NodeStatus.ACTIVE

    def active_nodes(self, region: Optional[str] = None) -> List[ScalerNode]:
        return [
            n for _, n in sorted(self.nodes.items())
            if n.status is NodeStatus.ACTIVE and (region is None or n.region == region)
        ]

    def free(self, node_id: str, rtype: ResourceType) -> int:
        node = self.node(node_id)
        return node.capacity.get(rtype, 0) - self.allocated[node_id].get(rtype, 0)

    def allocate(self, node_id: str, rtype: ResourceType, qty: int) -> None:
        if qty <= 0:
            raise errors.InvalidAmount(f"allocation quantity {qty}")
        if self.free(node_id, rtype) < qty:
            raise errors.InsufficientCapacity(f"{node_id} lacks {qty} {rtype}")
        alloc = self.allocated[node_id]
        alloc[rtype] = alloc.get(rtype, 0) + qty

    def release(self, node_id: str, rtype: ResourceType, qty: int) -> None:
        alloc = self.allocated[node_id]
        have = alloc.get(rtype, 0)
        if qty <= 0 or qty > have:
            raise errors.InvalidAmount(f"cannot free {qty} {rtype} from {node_id} (allocated {have})")
        if have == qty:
            del alloc[rtype]
        else:
            alloc[rtype] = have - qty

    def capability_map(self, region: str) -> Capacity:
        """Residual free capacity of Active nodes in ``region``."""
        if region not in self.regions:
            raise errors.UnknownRegion(region)
        out: Capacity = {}
        for node in self.active_nodes(region):
            for t, q in node.capacity.items():
                out[t] = out.get(t, 0) + q - self.allocated[node.id].get(t, 0)
        return out

    # snapshot ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seq": str(self._seq),
            "regions": {
                r.id: {"collateral_rates": capacity_to_json(r.collateral_rates)} for r in self.regions.values()
            },
            "classes": {
                c.id: {
                    "capacity_template": capacity_to_json(c.capacity_template),
                    "performance_profile": {k: str(v) for k, v in c.performance_profile.items()},
                    "challenge_set": list(c.challenge_set),
                }
                for c in self.classes.values()
            },
            "nodes": {
                n.id: {
                    "provider": n.provider,
                    "class": n.hw_class,
                    "region": n.region,
                    "capacity": capacity_to_json(n.capacity),
                    "rewards_share": fraction_str(n.rewards_share),
                    "reservation_price": str(n.reservation_price),
                    "max_booking_duration": str(n.max_booking_duration),
                    "commitment_end": str(n.commitment_end),
                    "registered_at": str(n.registered_at),
                    "profile": {k: str(v) for k, v in n.profile.items()},
                    "status": n.status.value,
                    "allocated": capacity_to_json(self.allocated[n.id]),
                }
                for n in self.nodes.values()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping, ledger: Ledger) -> "Registry":
        reg = cls(ledger)
        reg._seq = parse_int(d.get("seq", "0"))
        for rid, r in sorted(d["regions"].items()):
            reg.add_region(Region(rid, parse_capacity(r["collateral_rates"])))
        for cid, c in sorted(d["classes"].items()):
            reg.add_class(HardwareClass(
                cid,
                parse_capacity(c["capacity_template"]),
                {k: parse_int(v) for k, v in c["performance_profile"].items()},
                list(c["challenge_set"]),
            ))
        for nid, n in sorted(d["nodes"].items()):
            reg.nodes[nid] = ScalerNode(
                nid, n["provider"], n["class"], n["region"], parse_capacity(n["capacity"]),
                parse_fraction(n["rewards_share"]), parse_int(n["reservation_price"]),
                parse_int(n["max_booking_duration"]), parse_int(n["commitment_end"]),
                parse_int(n["registered_at"]), {k: parse_int(v) for k, v in n["profile"].items()},
                NodeStatus(n["status"]),
            )
            reg.allocated[nid] = parse_capacity(n["allocated"])
        return reg


def _check_conforms(capacity: Mapping[ResourceType, int], template: Mapping[ResourceType, int]) -> None:
    if set(capacity) != set(template):
        missing = sorted(map(str, set(template) - set(capacity)))
        extra = sorted(map(str, set(capacity) - set(template)))
        raise errors.MalformedCapacity(f"capacity keys differ from template (missing {missing}, extra {extra})")
    for t, q in capacity.items():
        base = template[t]
        if base == 0:
            if q != 0:
                raise errors.MalformedCapacity(f"{t}: template is 0, got {q}")
            continue
        if q < base or q % base:
            raise errors.MalformedCapacity(f"{t}: {q} is not a multiple >= 1 of {base}")
