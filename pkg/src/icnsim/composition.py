"""Resource composition: typed resource units, blueprints and instance lifecycle.

Deploy requests are filled by a greedy, score-ordered policy. Each candidate
node gets one score per requirement::

    score = w_perf * kpi_score + w_price * (min_price / price) + w_avail * (free / capacity)

where every term lies in [0, 1]. Nodes are drained in descending score order,
ties broken by ascending node id, splitting a requirement across nodes when one
node cannot hold it. Because a composition's value is the unit-weighted sum of
node scores, draining the best node first is optimal for a single requirement.

Fees are frozen per resource type at booking time and charged per whole
epoch into the ledger's escrow account; settlement routes them to nodes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from . import errors
from .ledger import Ledger
from .registry import Registry, ScalerNode
from .units import ResourceType, capacity_to_json, fraction_str, parse_capacity, parse_fraction, parse_int

logger = logging.getLogger(__name__)

ESCROW = "__escrow__"

KpiSource = Callable[[str], Optional[Mapping[str, int]]]


@dataclass(frozen=True)
class Requirement:
    type: ResourceType
    quantity: int
    locality: Optional[FrozenSet[str]] = None
    min_kpi: Optional[Tuple[Tuple[str, int], ...]] = None

    def __post_init__(self):
        if self.quantity <= 0:
            raise errors.InvalidParameters(f"requirement quantity must be positive, got {self.quantity}")
        if self.locality is not None and not self.locality:
            raise errors.InvalidParameters("locality, if given, must be non-empty")

    @classmethod
    def make(cls, type, quantity: int, locality: Optional[Iterable[str]] = None,
             min_kpi: Optional[Mapping[str, int]] = None) -> "Requirement":
        return cls(
            ResourceType.parse(type),
            int(quantity),
            frozenset(locality) if locality is not None else None,
            tuple(sorted(min_kpi.items())) if min_kpi else None,
        )

    def to_dict(self) -> dict:
        d = {"type": str(self.type), "quantity": str(self.quantity)}
        if self.locality is not None:
            d["locality"] = sorted(self.locality)
        if self.min_kpi:
            d["min_kpi"] = {k: str(v) for k, v in self.min_kpi}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Requirement":
        return cls.make(
            d["type"],
            parse_int(d["quantity"]),
            d.get("locality"),
            {k: parse_int(v) for k, v in d["min_kpi"].items()} if d.get("min_kpi") else None,
        )


@dataclass(frozen=True)
class Elastic:
    min_factor: Fraction
    max_factor: Fraction

    def __post_init__(self):
        if not (0 < self.min_factor <= 1 <= self.max_factor):
            raise errors.InvalidParameters(f"elastic bounds need 0 < min <= 1 <= max, got {self.min_factor}, {self.max_factor}")


@dataclass(frozen=True)
class InstanceBlueprint:
    id: str
    requirements: Tuple[Requirement, ...]
    elastic: Optional[Elastic] = None
    services: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.requirements:
            raise errors.InvalidParameters(f"blueprint {self.id} has no requirements")


@dataclass
class ResourceUnit:
    node: str
    type: ResourceType
    quantity: int
    region: str
    requirement: int  # index into the instance's requirements


@dataclass
class Instance:
    id: str
    owner: str
    blueprint: str
    requirements: Tuple[Requirement, ...]
    allocations: List[ResourceUnit]
    booked_at: int
    booked_until: int
    fixed_unit_prices: Dict[ResourceType, int]
    elastic: Optional[Elastic] = None
    services: Tuple[str, ...] = ()
    paid_through: int = -1

    def quantity(self, rtype: ResourceType) -> int:
        return sum(u.quantity for u in self.allocations if u.type == rtype)

    def base_quantity(self, rtype: ResourceType) -> int:
        return sum(r.quantity for r in self.requirements if r.type == rtype)

    def nodes(self) -> List[str]:
        return sorted({u.node for u in self.allocations})

    def epoch_fee(self) -> int:
        return sum(self.quantity(t) * p for t, p in self.fixed_unit_prices.items())


@dataclass
class Plan:
    """Tentative allocation produced by the selection policy."""

    units: List[ResourceUnit]
    fixed_unit_prices: Dict[ResourceType, int]
    scores: Dict[Tuple[int, str], Fraction] = field(default_factory=dict)

    @property
    def epoch_fee(self) -> int:
        totals: Dict[ResourceType, int] = {}
        for u in self.units:
            totals[u.type] = totals.get(u.type, 0) + u.quantity
        return sum(q * self.fixed_unit_prices[t] for t, q in totals.items())


@dataclass(frozen=True)
class Weights:
    perf: Fraction = Fraction(1, 3)
    price: Fraction = Fraction(1, 3)
    avail: Fraction = Fraction(1, 3)


def kpi_score(node: ScalerNode, nominal: Mapping[str, int], medians: Optional[Mapping[str, int]]) -> Fraction:
    """Mean over the class's KPIs of median/nominal, each clamped to [0, 1]."""
    if not medians or not nominal:
        return Fraction(0)
    total = Fraction(0)
    for kpi, nom in sorted(nominal.items()):
        m = medians.get(kpi)
        if m is None:
            continue
        total += Fraction(1) if nom <= 0 else min(Fraction(1), max(Fraction(0), Fraction(m, nom)))
    return total / len(nominal)


def fixed_price(pairs: Iterable[Tuple[int, int]]) -> int:
    """Unit-weighted mean of (price, units) pairs, rounded up."""
    num = den = 0
    for price, units in pairs:
        num += price * units
        den += units
    return -(-num // den) if den else 0


class Composer:
    def __init__(self, registry: Registry, ledger: Ledger, weights: Weights = Weights(),
                 kpi_source: Optional[KpiSource] = None):
        self.registry = registry
        self.ledger = ledger
        self.weights = weights
        self.kpi_source: KpiSource = kpi_source or (lambda node_id: None)
        self.blueprints: Dict[str, InstanceBlueprint] = {}
        self.services: set = set()
        self.instances: Dict[str, Instance] = {}
        # fees charged this epoch, keyed by node, awaiting settlement
        self.pending_fees: Dict[str, int] = {}
        self.charged_this_epoch = 0
        self._seq = 0
        ledger.open_account(ESCROW)

    def add_blueprint(self, bp: InstanceBlueprint) -> None:
        unknown = set(bp.services) - self.services
        if unknown:
            raise errors.InvalidParameters(f"blueprint {bp.id}: unknown services {sorted(unknown)}")
        self.blueprints[bp.id] = bp

    def instance(self, instance_id: str) -> Instance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise errors.UnknownInstance(instance_id) from None

    # selection -----------------------------------------------------------

    def _kpi_ok(self, node: ScalerNode, req: Requirement) -> bool:
        if not req.min_kpi:
            return True
        medians = self.kpi_source(node.id)
        if not medians:
            return False
        return all(medians.get(k, -1) >= v for k, v in req.min_kpi)

    def candidates(self, req: Requirement, booked_until: int, duration: int,
                   free: Callable[[str, ResourceType], int]) -> List[ScalerNode]:
        """Active nodes eligible for ``req``; raises the most specific infeasibility error."""
        with_type = [
            n for n in self.registry.active_nodes()
            if free(n.id, req.type) > 0
            and n.max_booking_duration >= duration
            and n.commitment_end >= booked_until
        ]
        if not with_type:
            raise errors.InsufficientCapacity(f"no free {req.type} in the pool")
        local = [n for n in with_type if req.locality is None or n.region in req.locality]
        if not local:
            raise errors.LocalityUnsatisfiable(f"no {req.type} within {sorted(req.locality)}")
        ok = [n for n in local if self._kpi_ok(n, req)]
        if not ok:
            raise errors.KpiUnsatisfiable(f"no {req.type} node meets {dict(req.min_kpi)}")
        return ok

    def score(self, nodes: Sequence[ScalerNode], rtype: ResourceType,
              free: Callable[[str, ResourceType], int]) -> Dict[str, Fraction]:
        w = self.weights
        prices = [n.reservation_price for n in nodes]
        pmin = min(prices) if prices else 0
        out = {}
        for n in nodes:
            cls = self.registry.classes[n.hw_class]
            perf = kpi_score(n, cls.performance_profile, self.kpi_source(n.id))
            price = Fraction(1) if n.reservation_price == 0 else Fraction(pmin, n.reservation_price)
            cap = n.capacity.get(rtype, 0)
            avail = Fraction(free(n.id, rtype), cap) if cap else Fraction(0)
            out[n.id] = w.perf * perf + w.price * price + w.avail * avail
        return out

    def plan(self, requirements: Sequence[Requirement], duration: int) -> Plan:
        if duration <= 0:
            raise errors.InvalidDuration("duration must be positive")
        booked_until = self.ledger.epoch + duration
        taken: Dict[Tuple[str, ResourceType], int] = {}

        def free(node_id: str, rtype: ResourceType) -> int:
            return self.registry.free(node_id, rtype) - taken.get((node_id, rtype), 0)

        units: List[ResourceUnit] = []
        scores: Dict[Tuple[int, str], Fraction] = {}
        for idx, req in enumerate(requirements):
            nodes = self.candidates(req, booked_until, duration, free)
            avail = sum(free(n.id, req.type) for n in nodes)
            if avail < req.quantity:
                raise errors.InsufficientCapacity(f"need {req.quantity} {req.type}, eligible free {avail}")
            s = self.score(nodes, req.type, free)
            order = sorted(nodes, key=lambda n: (-s[n.id], n.id))
            remaining = req.quantity
            for n in order:
                if remaining == 0:
                    break
                take = min(remaining, free(n.id, req.type))
                units.append(ResourceUnit(n.id, req.type, take, n.region, idx))
                taken[(n.id, req.type)] = taken.get((n.id, req.type), 0) + take
                scores[(idx, n.id)] = s[n.id]
                remaining -= take
        by_type: Dict[ResourceType, List[Tuple[int, int]]] = {}
        for u in units:
            by_type.setdefault(u.type, []).append((self.registry.nodes[u.node].reservation_price, u.quantity))
        prices = {t: fixed_price(pairs) for t, pairs in by_type.items()}
        return Plan(units, prices, scores)

    def resolve(self, spec: Union[str, Sequence[Requirement]]) -> Tuple[str, Tuple[Requirement, ...], Optional[Elastic], Tuple[str, ...]]:
        if isinstance(spec, str):
            bp = self.blueprints.get(spec)
            if bp is None:
                raise errors.UnknownBlueprint(spec)
            return bp.id, bp.requirements, bp.elastic, bp.services
        reqs = tuple(spec)
        if not reqs:
            raise errors.InvalidParameters("custom spec needs at least one requirement")
        return "custom", reqs, None, ()

    def quote(self, spec: Union[str, Sequence[Requirement]], region: Optional[str] = None, duration: int = 1) -> int:
        """Per-epoch fee the policy would lock in for ``spec`` deployed now, restricted to ``region``."""
        _, reqs, _, _ = self.resolve(spec)
        if region is not None:
            if region not in self.registry.regions:
                raise errors.UnknownRegion(region)
            reqs = tuple(_restrict(r, region) for r in reqs)
            try:
                return self.plan(reqs, duration).epoch_fee
            except errors.LocalityUnsatisfiable as exc:
                # the quote's pool is the region itself, so an empty region is plain lack of capacity
                raise errors.InsufficientCapacity(str(exc)) from None
        return self.plan(reqs, duration).epoch_fee

    # lifecycle -----------------------------------------------------------

    def deploy(self, owner: str, spec: Union[str, Sequence[Requirement]], duration: int,
               instance_id: Optional[str] = None, elastic: Optional[Elastic] = None,
               services: Sequence[str] = ()) -> Instance:
        bp_id, reqs, bp_elastic, bp_services = self.resolve(spec)
        elastic = elastic or bp_elastic
        services = tuple(dict.fromkeys([*bp_services, *services]))
        unknown = set(services) - self.services
        if unknown:
            raise errors.InvalidParameters(f"unknown services {sorted(unknown)}")
        if instance_id is None:
            self._seq += 1
            instance_id = f"inst-{self._seq:06d}"
        if instance_id in self.instances:
            raise errors.DuplicateId(instance_id)
        plan = self.plan(reqs, duration)
        fee = plan.epoch_fee
        if self.ledger.balance(owner) < fee:
            raise errors.InsufficientBalance(f"{owner} cannot pay first-epoch fee {fee}")
        for u in plan.units:
            self.registry.allocate(u.node, u.type, u.quantity)
        epoch = self.ledger.epoch
        inst = Instance(instance_id, owner, bp_id, reqs, plan.units, epoch, epoch + duration,
                        dict(plan.fixed_unit_prices), elastic, services)
        self.instances[instance_id] = inst
        self._charge(inst)
        logger.debug("deployed %s for %s on %s, fee %d/epoch", instance_id, owner, inst.nodes(), fee)
        return inst

    def scale(self, instance_id: str, rtype, delta: int) -> Instance:
        inst = self.instance(instance_id)
        rtype = ResourceType.parse(rtype)
        if inst.elastic is None:
            raise errors.NotElastic(instance_id)
        base = inst.base_quantity(rtype)
        if base == 0:
            raise errors.InvalidParameters(f"{instance_id} has no {rtype} requirement")
        new_total = inst.quantity(rtype) + delta
        if not inst.elastic.min_factor * base <= new_total <= inst.elastic.max_factor * base:
            raise errors.BoundsExceeded(
                f"{rtype} {new_total} outside [{inst.elastic.min_factor * base}, {inst.elastic.max_factor * base}]")
        if delta > 0:
            idx = next(i for i, r in enumerate(inst.requirements) if r.type == rtype)
            req = inst.requirements[idx]
            grow = Requirement(rtype, delta, req.locality, req.min_kpi)
            remaining = inst.booked_until - self.ledger.epoch
            plan = self.plan([grow], max(1, remaining))
            for u in plan.units:
                self.registry.allocate(u.node, u.type, u.quantity)
                inst.allocations.append(ResourceUnit(u.node, u.type, u.quantity, u.region, idx))
            if rtype not in inst.fixed_unit_prices:
                inst.fixed_unit_prices[rtype] = plan.fixed_unit_prices[rtype]
        elif delta < 0:
            shrink = -delta
            for u in reversed([u for u in inst.allocations if u.type == rtype]):
                if shrink == 0:
                    break
                take = min(shrink, u.quantity)
                self.registry.release(u.node, rtype, take)
                u.quantity -= take
                shrink -= take
            inst.allocations = [u for u in inst.allocations if u.quantity > 0]
        return inst

    def release(self, instance_id: str) -> Dict[ResourceType, int]:
        inst = self.instances.pop(instance_id, None)
        if inst is None:
            raise errors.UnknownInstance(instance_id)
        freed: Dict[ResourceType, int] = {}
        for u in inst.allocations:
            self.registry.release(u.node, u.type, u.quantity)
            freed[u.type] = freed.get(u.type, 0) + u.quantity
        return freed

    def extend_reservation(self, instance_id: str, extra: int,
                           provider_accepts: Optional[Mapping[str, bool]] = None) -> int:
        """Extend the booking at the original prices; all backing providers must accept."""
        inst = self.instance(instance_id)
        if extra <= 0:
            raise errors.InvalidDuration("extension must be positive")
        new_until = inst.booked_until + extra
        nodes = inst.nodes()
        if provider_accepts is not None:
            declined = [n for n in nodes if not provider_accepts.get(n, False)]
            if declined:
                raise errors.ProviderDeclined(f"declined by {declined}")
        short = [n for n in nodes if self.registry.nodes[n].commitment_end < new_until]
        if short:
            raise errors.CommitmentTooShort(f"{short} committed for less than {new_until}")
        inst.booked_until = new_until
        return new_until

    # billing -------------------------------------------------------------

    def _charge(self, inst: Instance) -> int:
        fee = inst.epoch_fee()
        self.ledger.transfer(inst.owner, ESCROW, fee)
        inst.paid_through = self.ledger.epoch
        self.charged_this_epoch += fee
        for node, amount in route_fee(inst).items():
            self.pending_fees[node] = self.pending_fees.get(node, 0) + amount
        return fee

    def bill_epoch(self) -> Dict[str, List[str]]:
        """Start-of-epoch billing: expire finished bookings, charge the rest, evict non-payers."""
        epoch = self.ledger.epoch
        expired, evicted, charged = [], [], []
        for iid in sorted(self.instances):
            inst = self.instances[iid]
            if inst.booked_until <= epoch:
                self.release(iid)
                expired.append(iid)
            elif inst.paid_through < epoch:
                if self.ledger.balance(inst.owner) < inst.epoch_fee():
                    self.release(iid)
                    evicted.append(iid)
                else:
                    self._charge(inst)
                    charged.append(iid)
        if evicted:
            logger.info("evicted for non-payment at epoch %d: %s", epoch, evicted)
        return {"expired": expired, "evicted": evicted, "charged": charged}

    def take_pending_fees(self) -> Tuple[Dict[str, int], int]:
        fees, total = self.pending_fees, self.charged_this_epoch
        self.pending_fees, self.charged_this_epoch = {}, 0
        return fees, total

    # checks --------------------------------------------------------------

    def check_no_double_allocation(self) -> List[str]:
        """Recompute per-(node, type) totals from live instances and compare with capacity."""
        totals: Dict[Tuple[str, ResourceType], int] = {}
        for inst in self.instances.values():
            for u in inst.allocations:
                totals[(u.node, u.type)] = totals.get((u.node, u.type), 0) + u.quantity
        problems = []
        for (node, t), q in sorted(totals.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            cap = self.registry.nodes[node].capacity.get(t, 0)
            if q > cap:
                problems.append(f"{node}/{t}: allocated {q} > capacity {cap}")
            if self.registry.allocated[node].get(t, 0) != q:
                problems.append(f"{node}/{t}: tally {self.registry.allocated[node].get(t, 0)} != instances {q}")
        for node, alloc in self.registry.allocated.items():
            for t, q in alloc.items():
                if q and (node, t) not in totals:
                    problems.append(f"{node}/{t}: tally {q} with no backing instance")
        return problems

    def check_locality(self) -> List[str]:
        problems = []
        for inst in self.instances.values():
            for u in inst.allocations:
                loc = inst.requirements[u.requirement].locality
                if loc is not None and u.region not in loc:
                    problems.append(f"{inst.id}: unit on {u.node} in {u.region} outside {sorted(loc)}")
        return problems

    # snapshot ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seq": str(self._seq),
            "weights": {k: fraction_str(getattr(self.weights, k)) for k in ("perf", "price", "avail")},
            "services": sorted(self.services),
            "blueprints": {bp.id: blueprint_to_dict(bp) for bp in self.blueprints.values()},
            "pending_fees": {k: str(v) for k, v in self.pending_fees.items()},
            "charged_this_epoch": str(self.charged_this_epoch),
            "instances": {
                i.id: {
                    "owner": i.owner,
                    "blueprint": i.blueprint,
                    "requirements": [r.to_dict() for r in i.requirements],
                    "allocations": [
                        {"node": u.node, "type": str(u.type), "quantity": str(u.quantity), "region": u.region,
                         "requirement": str(u.requirement)}
                        for u in i.allocations
                    ],
                    "booked_at": str(i.booked_at),
                    "booked_until": str(i.booked_until),
                    "fixed_unit_prices": capacity_to_json(i.fixed_unit_prices),
                    "elastic": _elastic_to_dict(i.elastic),
                    "services": list(i.services),
                    "paid_through": str(i.paid_through),
                }
                for i in self.instances.values()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping, registry: Registry, ledger: Ledger,
                  kpi_source: Optional[KpiSource] = None) -> "Composer":
        w = d["weights"]
        comp = cls(registry, ledger, Weights(*(parse_fraction(w[k]) for k in ("perf", "price", "avail"))), kpi_source)
        comp._seq = parse_int(d["seq"])
        comp.services = set(d["services"])
        for bid, b in sorted(d["blueprints"].items()):
            comp.blueprints[bid] = blueprint_from_dict(bid, b)
        comp.pending_fees = {k: parse_int(v) for k, v in sorted(d["pending_fees"].items())}
        comp.charged_this_epoch = parse_int(d["charged_this_epoch"])
        for iid, i in sorted(d["instances"].items()):
            comp.instances[iid] = Instance(
                iid, i["owner"], i["blueprint"], tuple(Requirement.from_dict(r) for r in i["requirements"]),
                [ResourceUnit(u["node"], ResourceType.parse(u["type"]), parse_int(u["quantity"]), u["region"],
                              parse_int(u["requirement"])) for u in i["allocations"]],
                parse_int(i["booked_at"]), parse_int(i["booked_until"]), parse_capacity(i["fixed_unit_prices"]),
                _elastic_from_dict(i["elastic"]), tuple(i["services"]), parse_int(i["paid_through"]),
            )
        return comp


def route_fee(inst: Instance) -> Dict[str, int]:
    """Split one epoch's fee across backing nodes in proportion to units supplied.

    Per type, each node gets floor(amount * units / total); the rounding
    remainder goes to the node supplying the most units (smallest id on ties).
    """
    out: Dict[str, int] = {}
    for rtype, price in sorted(inst.fixed_unit_prices.items(), key=lambda kv: str(kv[0])):
        per_node: Dict[str, int] = {}
        for u in inst.allocations:
            if u.type == rtype:
                per_node[u.node] = per_node.get(u.node, 0) + u.quantity
        total_units = sum(per_node.values())
        if not total_units:
            continue
        amount = total_units * price
        paid = 0
        for node, q in sorted(per_node.items()):
            share = amount * q // total_units
            out[node] = out.get(node, 0) + share
            paid += share
        top = min(per_node, key=lambda n: (-per_node[n], n))
        out[top] += amount - paid
    return out


def _restrict(req: Requirement, region: str) -> Requirement:
    if req.locality is not None and region not in req.locality:
        raise errors.LocalityUnsatisfiable(f"{region} outside requirement locality {sorted(req.locality)}")
    return Requirement(req.type, req.quantity, frozenset([region]), req.min_kpi)


def _elastic_to_dict(e: Optional[Elastic]):
    if e is None:
        return None
    return {"min_factor": fraction_str(e.min_factor), "max_factor": fraction_str(e.max_factor)}


def _elastic_from_dict(d) -> Optional[Elastic]:
    if not d:
        return None
    return Elastic(parse_fraction(d["min_factor"]), parse_fraction(d["max_factor"]))


def blueprint_to_dict(bp: InstanceBlueprint) -> dict:
    return {
        "requirements": [r.to_dict() for r in bp.requirements],
        "elastic": _elastic_to_dict(bp.elastic),
        "services": list(bp.services),
    }


def blueprint_from_dict(bp_id: str, d: Mapping) -> InstanceBlueprint:
    return InstanceBlueprint(
        bp_id,
        tuple(Requirement.from_dict(r) for r in d["requirements"]),
        _elastic_from_dict(d.get("elastic")),
        tuple(d.get("services", ())),
    )
