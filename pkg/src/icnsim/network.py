"""Wires ledger, registry, composition, enforcement and economics into one protocol state.

:class:`Network` owns every subsystem, applies scripted actions, runs the
phases of an epoch, checks cross-module invariants, and round-trips through a
canonical JSON snapshot.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple

from . import errors
from .composition import Composer, Elastic, InstanceBlueprint, Requirement, Weights
from .economics import Economics, RegionEconomy, Settlement
from .enforcement import (
    AggregateRecord,
    ChallengeSpec,
    Enforcement,
    FaultEvent,
    MisbehaviorEvent,
    PerformanceReport,
    Service,
)
from .ledger import Ledger, SlashOutcome
from .registry import HardwareClass, NodeStatus, Region, Registry
from .units import parse_capacity, parse_fraction, parse_int

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
# service bonds stay locked for the life of the service
BOND_HORIZON = 2**62


@dataclass
class ChallengeOutcome:
    epoch: int
    reports: List[PerformanceReport] = field(default_factory=list)
    aggregates: List[AggregateRecord] = field(default_factory=list)
    faults: List[FaultEvent] = field(default_factory=list)
    fault_slashes: List[SlashOutcome] = field(default_factory=list)
    misbehaviors: List[MisbehaviorEvent] = field(default_factory=list)
    misbehavior_slashes: List[SlashOutcome] = field(default_factory=list)
    incomplete: List[str] = field(default_factory=list)

    @property
    def failed(self) -> List[str]:
        return sorted({f.subject for f in self.faults})


class Network:
    def __init__(self, ledger: Ledger, registry: Registry, composer: Composer, enforcement: Enforcement,
                 economics: Economics):
        self.ledger = ledger
        self.registry = registry
        self.composer = composer
        self.enforcement = enforcement
        self.economics = economics
        composer.kpi_source = lambda node_id: enforcement.latest.get(node_id)

    @classmethod
    def empty(cls, balances: Optional[Mapping[str, int]] = None, *, seed: int = 0, replication: int = 3,
              weights: Weights = Weights(), noise_amplitude=Fraction(0), retention_epochs: int = 16,
              misbehavior_slash_rate=Fraction(0)) -> "Network":
        ledger = Ledger(balances or {})
        registry = Registry(ledger)
        composer = Composer(registry, ledger, weights)
        enforcement = Enforcement(ledger, registry, seed, replication, noise_amplitude, retention_epochs,
                                  misbehavior_slash_rate)
        economics = Economics(ledger, registry, composer)
        return cls(ledger, registry, composer, enforcement, economics)

    @classmethod
    def from_scenario(cls, doc: Mapping, seed: Optional[int] = None) -> "Network":
        """Build genesis state from an already validated scenario document."""
        w = doc.get("weights", {})
        weights = Weights(*(parse_fraction(w.get(k, "1/3")) for k in ("perf", "price", "avail")))
        net = cls.empty(
            {a: parse_int(b) for a, b in doc["genesis"]["balances"].items()},
            seed=parse_int(doc["seed"]) if seed is None else seed,
            replication=parse_int(doc["replication_factor"]),
            weights=weights,
            noise_amplitude=parse_fraction(doc.get("noise_amplitude", 0)),
            retention_epochs=parse_int(doc.get("retention_epochs", 16)),
            misbehavior_slash_rate=parse_fraction(doc.get("misbehavior_slash_rate", 0)),
        )
        for r in doc["regions"]:
            net.add_region(RegionEconomy(
                r["id"], parse_capacity(r["target_capacity"]), parse_int(r["bootstrap_end"]),
                parse_int(r["bootstrap_emission_per_epoch"]), parse_capacity(r.get("collateral_rates", {})),
            ))
        for hc in doc["hardware_classes"]:
            net.registry.add_class(HardwareClass(
                hc["id"], parse_capacity(hc["capacity_template"]),
                {k: parse_int(v) for k, v in hc["performance_profile"].items()}, list(hc["challenge_set"]),
            ))
        for s in doc.get("services", []):
            net.register_service(s["id"], s["builder"], parse_int(s["bond"]),
                                 {k: parse_int(v) for k, v in s["profile"].items()})
        for sp in doc["challenge_specs"]:
            net.enforcement.register_challenge_spec(ChallengeSpec(
                sp["kind"], sp["subject"], tuple(sp["kpis"]),
                {k: parse_fraction(v) for k, v in sp["pass_thresholds"].items()},
            ))
        for bp in doc.get("blueprints", []):
            net.composer.add_blueprint(InstanceBlueprint(
                bp["id"], tuple(Requirement.from_dict(r) for r in bp["requirements"]),
                _elastic(bp.get("elastic")), tuple(bp.get("services", ())),
            ))
        for h in doc["hypernodes"]:
            net.enforcement.register_hypernode(h["id"], h["operator"])
            stake = parse_int(h.get("stake", 0))
            if stake:
                net.ledger.stake(h["operator"], h["id"], stake)
            if "nft" in h:
                p = net.ledger.mint_nft(h["operator"], parse_int(h["nft"]["initial_sink"]),
                                        parse_int(h["nft"]["timelock_epochs"]), f"pass-{h['id']}")
                net.ledger.stake_nft(p.id, h["id"])
        return net

    # catalog -------------------------------------------------------------

    def add_region(self, economy: RegionEconomy) -> None:
        self.registry.add_region(Region(economy.region, dict(economy.per_unit_collateral_rates)))
        self.economics.add_economy(economy)

    def register_service(self, service_id: str, builder: str, bond: int, profile: Mapping[str, int]) -> None:
        """Register a service subject; the builder's bond is its slashable security."""
        if service_id in self.registry.classes or service_id in self.registry.nodes:
            raise errors.DuplicateId(service_id)
        self.enforcement.register_service(Service(service_id, builder, dict(profile)))
        self.composer.services.add(service_id)
        self.ledger.lock_collateral(builder, service_id, bond, BOND_HORIZON)

    # actions -------------------------------------------------------------

    def stake(self, staker: str, node: str, amount: int):
        if node not in self.enforcement.hypernodes and not self.registry.is_active(node):
            raise errors.NodeInactive(f"cannot stake on inactive node {node}")
        return self.ledger.stake(staker, node, amount)

    def stake_nft(self, pass_id: str, node: str):
        if node not in self.enforcement.hypernodes and not self.registry.is_active(node):
            raise errors.NodeInactive(f"cannot stake on inactive node {node}")
        return self.ledger.stake_nft(pass_id, node)

    def release_collateral(self, node: str) -> int:
        if self.registry.node(node).status is not NodeStatus.RETIRED:
            raise errors.StillLocked(f"{node} is not retired")
        return sum(self.ledger.release_collateral(l.id) for l in self.ledger.locks_on(node))

    def apply(self, action: str, args: Mapping):
        """Apply one scripted action; protocol rejections propagate as ``ProtocolError``."""
        a = args
        if action == "register_node":
            node = self.registry.register_node(
                a["provider"], a["class"], a["region"],
                parse_capacity(a["capacity"]) if "capacity" in a else None,
                parse_fraction(a["rewards_share"]), parse_int(a["reservation_price"]),
                parse_int(a["max_booking_duration"]), parse_int(a["commitment_end"]), a["id"],
                {k: parse_int(v) for k, v in a["profile"].items()} if "profile" in a else None,
            )
            collateral = parse_int(a.get("collateral", 0))
            if collateral:
                self.ledger.lock_collateral(a["provider"], node, collateral, self.registry.nodes[node].commitment_end)
            return node
        if action == "lock_collateral":
            until = parse_int(a["until"]) if "until" in a else self.registry.node(a["node"]).commitment_end
            return self.ledger.lock_collateral(a["owner"], a["node"], parse_int(a["amount"]), until)
        if action == "activate":
            return self.registry.activate(a["node"])
        if action == "deploy":
            spec = a["blueprint"] if "blueprint" in a else [Requirement.from_dict(r) for r in a["requirements"]]
            return self.composer.deploy(a["owner"], spec, parse_int(a["duration"]), a["id"],
                                        _elastic(a.get("elastic")), tuple(a.get("services", ())))
        if action == "scale":
            return self.composer.scale(a["instance"], a["type"], parse_int(a["delta"]))
        if action == "release":
            return self.composer.release(a["instance"])
        if action == "extend":
            declines = set(a.get("declines", ()))
            inst = self.composer.instance(a["instance"])
            accepts = {n: n not in declines for n in inst.nodes()}
            return self.composer.extend_reservation(a["instance"], parse_int(a["extra"]), accepts)
        if action == "stake":
            return self.stake(a["staker"], a["node"], parse_int(a["amount"]))
        if action == "mint_nft":
            return self.ledger.mint_nft(a["owner"], parse_int(a["initial_sink"]), parse_int(a["timelock_epochs"]), a["id"])
        if action == "stake_nft":
            return self.stake_nft(a["pass"], a["node"])
        if action == "inject_fault":
            return self.enforcement.inject_fault(a["node"], parse_fraction(a["multiplier"]), parse_int(a["duration"]))
        if action == "retire":
            return self.registry.retire(a["node"])
        if action == "set_price":
            price = parse_int(a["reservation_price"])
            self.registry.node(a["node"]).reservation_price = price
            return price
        if action == "release_collateral":
            return self.release_collateral(a["node"])
        if action == "corrupt_hypernode":
            return self.enforcement.corrupt_hypernode(a["hypernode"], parse_fraction(a["multiplier"]),
                                                      parse_int(a["duration"]))
        if action == "transfer":
            return self.ledger.transfer(a["from"], a["to"], parse_int(a["amount"]))
        raise errors.InvalidParameters(f"unknown action {action!r}")

    # epoch phases --------------------------------------------------------

    def begin_epoch(self) -> Dict[str, List[str]]:
        """Start-of-epoch billing for live instances."""
        return self.composer.bill_epoch()

    def challenge_phase(self) -> ChallengeOutcome:
        epoch = self.ledger.epoch
        enf = self.enforcement
        out = ChallengeOutcome(epoch)
        try:
            schedule = enf.schedule_challenges(epoch)
        except errors.NoEligibleHyperNodes:
            logger.warning("epoch %d: no eligible hypernodes, skipping challenges", epoch)
            enf.schedule, enf.schedule_eligible = [], 0
            return out
        out.reports = enf.run_challenges(schedule)
        out.incomplete = enf.check_completeness(epoch)
        for subject in sorted({a.subject for a in schedule}):
            record, _, fault, misbehaviors = enf.aggregate_and_commit(epoch, subject)
            out.aggregates.append(record)
            if fault is not None:
                out.faults.append(fault)
                out.fault_slashes.append(self._slash(subject, fault.severity))
            for m in misbehaviors:
                out.misbehaviors.append(m)
                if enf.misbehavior_slash_rate > 0 and self.ledger.security(m.hypernode) > 0:
                    out.misbehavior_slashes.append(self._slash(m.hypernode, enf.misbehavior_slash_rate))
        return out

    def _slash(self, subject: str, severity: Fraction) -> SlashOutcome:
        try:
            return self.ledger.slash(subject, severity)
        except errors.UnknownNode:
            # nothing at stake (zero collateral rates): the slash is a no-op
            return SlashOutcome(subject, severity)

    def settle(self, failed=()) -> Settlement:
        return self.economics.settle_epoch(self.ledger.epoch, failed)

    def end_epoch(self):
        """Advance the clock: NFT decay, retention eviction, collateral-shortfall suspension."""
        summary = self.ledger.advance_epoch()
        self.enforcement.advance()
        suspended = self.registry.enforce_collateral()
        return summary, suspended

    # checks --------------------------------------------------------------

    def check_collateral(self) -> List[str]:
        return [
            f"{n.id}: collateral {self.ledger.collateral(n.id)} < {self.registry.min_collateral(n.id)}"
            for n in self.registry.active_nodes()
            if self.ledger.collateral(n.id) < self.registry.min_collateral(n.id)
        ]

    def recompute_capability_map(self, region: str) -> Dict:
        """Capability map rebuilt from raw node and instance records (independent of the tally)."""
        out: Dict = {}
        active = {n.id for n in self.registry.active_nodes(region)}
        for nid in sorted(active):
            for t, q in self.registry.nodes[nid].capacity.items():
                out[t] = out.get(t, 0) + q
        for inst in self.composer.instances.values():
            for u in inst.allocations:
                if u.node in active:
                    out[u.type] = out.get(u.type, 0) - u.quantity
        return out

    # snapshot ------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "version": str(SNAPSHOT_VERSION),
            "ledger": self.ledger.to_dict(),
            "registry": self.registry.to_dict(),
            "composition": self.composer.to_dict(),
            "enforcement": self.enforcement.to_dict(),
            "economics": self.economics.to_dict(),
        }

    @classmethod
    def from_snapshot(cls, d: Mapping) -> "Network":
        if parse_int(d.get("version", "0")) != SNAPSHOT_VERSION:
            raise errors.InvalidParameters(f"unsupported snapshot version {d.get('version')!r}")
        ledger = Ledger.from_dict(d["ledger"])
        registry = Registry.from_dict(d["registry"], ledger)
        composer = Composer.from_dict(d["composition"], registry, ledger)
        enforcement = Enforcement.from_dict(d["enforcement"], ledger, registry)
        economics = Economics.from_dict(d["economics"], ledger, registry, composer)
        return cls(ledger, registry, composer, enforcement, economics)


def _elastic(d) -> Optional[Elastic]:
    if not d:
        return None
    return Elastic(parse_fraction(d["min_factor"]), parse_fraction(d["max_factor"]))
