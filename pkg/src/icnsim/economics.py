"""Regional emission and access-fee settlement.

Per epoch and region, while ``epoch < bootstrap_end`` the region emits
``bootstrap_emission_per_epoch`` split equally over the resource types named in
its ``target_capacity``. Within a type, Active nodes are credited their
committed capacity, scaled down proportionally when the regional total exceeds
the target, and each node earns ``type_emission * credited / target``
(floored). Emission not earned is never minted.

Each node's gross reward is split: the provider takes
``floor(rewards_share * gross)``; stakers share the remainder pro rata by
stake, a staked NFT pass weighing its current sink value; rounding dust goes
to the provider.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import errors
from .composition import ESCROW, Composer
from .ledger import Ledger
from .registry import Registry, ScalerNode
from .units import Capacity, ResourceType, capacity_to_json, parse_capacity, parse_int

logger = logging.getLogger(__name__)

BOOTSTRAP = "Bootstrap"
ACCESS_FEE = "AccessFee"


@dataclass
class RegionEconomy:
    region: str
    target_capacity: Capacity
    bootstrap_end: int
    bootstrap_emission_per_epoch: int
    per_unit_collateral_rates: Capacity = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target_capacity": capacity_to_json(self.target_capacity),
            "bootstrap_end": str(self.bootstrap_end),
            "bootstrap_emission_per_epoch": str(self.bootstrap_emission_per_epoch),
            "per_unit_collateral_rates": capacity_to_json(self.per_unit_collateral_rates),
        }

    @classmethod
    def from_dict(cls, region: str, d: Mapping) -> "RegionEconomy":
        return cls(
            region,
            parse_capacity(d["target_capacity"]),
            parse_int(d["bootstrap_end"]),
            parse_int(d["bootstrap_emission_per_epoch"]),
            parse_capacity(d.get("per_unit_collateral_rates", {})),
        )


@dataclass(frozen=True)
class RewardStatement:
    epoch: int
    node: str
    source: str
    gross: int
    provider_cut: int
    staker_cuts: Mapping[str, int]

    @property
    def staker_total(self) -> int:
        return sum(self.staker_cuts.values())


@dataclass
class Settlement:
    epoch: int
    statements: List[RewardStatement] = field(default_factory=list)
    charged: int = 0
    burned_fees: int = 0
    emitted: int = 0

    def total(self, source: str) -> int:
        return sum(s.gross for s in self.statements if s.source == source)


def split_reward(gross: int, rewards_share: Fraction, weights: Mapping[str, int]) -> Tuple[int, Dict[str, int]]:
    """Return (provider_cut, staker_cuts) with provider_cut + sum(staker_cuts) == gross."""
    provider = int(rewards_share * gross)
    rest = gross - provider
    total_w = sum(w for w in weights.values() if w > 0)
    cuts: Dict[str, int] = {}
    if rest and total_w:
        for who, w in sorted(weights.items()):
            if w > 0:
                cut = rest * w // total_w
                if cut:
                    cuts[who] = cut
    return gross - sum(cuts.values()), cuts


def _type_capacity(node: ScalerNode, rtype: ResourceType) -> int:
    if rtype.subclass is not None:
        return node.capacity.get(rtype, 0)
    return sum(q for t, q in node.capacity.items() if t.kind == rtype.kind)


def bootstrap_payouts(economy: RegionEconomy, nodes: Sequence[ScalerNode]) -> Dict[str, int]:
    """Gross bootstrap emission owed to each node of the region for one epoch."""
    types = sorted((t for t, q in economy.target_capacity.items() if q > 0), key=str)
    if not types or economy.bootstrap_emission_per_epoch <= 0:
        return {}
    base, extra = divmod(economy.bootstrap_emission_per_epoch, len(types))
    out: Dict[str, int] = {}
    for i, rtype in enumerate(types):
        emission = base + (1 if i < extra else 0)
        target = economy.target_capacity[rtype]
        committed = {n.id: _type_capacity(n, rtype) for n in nodes}
        committed = {k: v for k, v in committed.items() if v > 0}
        total = sum(committed.values())
        if not total:
            continue
        scale = min(Fraction(1), Fraction(target, total))
        for node_id, c in sorted(committed.items()):
            pay = int(emission * c * scale / target)
            if pay:
                out[node_id] = out.get(node_id, 0) + pay
    return out


class Economics:
    def __init__(self, ledger: Ledger, registry: Registry, composer: Composer,
                 economies: Iterable[RegionEconomy] = ()):
        self.ledger = ledger
        self.registry = registry
        self.composer = composer
        self.economies: Dict[str, RegionEconomy] = {e.region: e for e in economies}
        self.last_settled: Optional[int] = None
        self.totals: Dict[str, int] = {BOOTSTRAP: 0, ACCESS_FEE: 0}

    def add_economy(self, economy: RegionEconomy) -> None:
        self.economies[economy.region] = economy

    def staker_weights(self, node_id: str) -> Dict[str, int]:
        weights: Dict[str, int] = {}
        for s in self.ledger.stakes_on(node_id):
            weights[s.staker] = weights.get(s.staker, 0) + s.amount
        nft = self.ledger.nft_on(node_id)
        if nft is not None and nft.sink_value > 0:
            weights[nft.owner] = weights.get(nft.owner, 0) + nft.sink_value
        return weights

    def _pay(self, epoch: int, node: ScalerNode, source: str, gross: int) -> RewardStatement:
        provider_cut, cuts = split_reward(gross, node.rewards_share, self.staker_weights(node.id))
        for who, amt in [(node.provider, provider_cut), *sorted(cuts.items())]:
            if not amt:
                continue
            if source == BOOTSTRAP:
                self.ledger.emit(who, amt)
            else:
                self.ledger.open_account(who)
                self.ledger.transfer(ESCROW, who, amt)
        self.totals[source] += gross
        return RewardStatement(epoch, node.id, source, gross, provider_cut, cuts)

    def settle_epoch(self, epoch: int, failed: Iterable[str] = ()) -> Settlement:
        """Route this epoch's escrowed fees and bootstrap emission to nodes and stakers."""
        expected = self.ledger.epoch if self.last_settled is None else self.last_settled + 1
        if epoch != expected or epoch != self.ledger.epoch:
            raise errors.SettlementOutOfOrder(f"asked to settle {epoch}, expected {expected}")
        failed = set(failed)
        out = Settlement(epoch)
        fees, out.charged = self.composer.take_pending_fees()
        for node_id, amount in sorted(fees.items()):
            if not amount:
                continue
            if node_id in failed:
                self.ledger.burn(ESCROW, amount)
                out.burned_fees += amount
            else:
                out.statements.append(self._pay(epoch, self.registry.nodes[node_id], ACCESS_FEE, amount))
        for region, econ in sorted(self.economies.items()):
            if epoch >= econ.bootstrap_end:
                continue
            for node_id, gross in sorted(bootstrap_payouts(econ, self.registry.active_nodes(region)).items()):
                if node_id in failed:
                    continue
                out.statements.append(self._pay(epoch, self.registry.nodes[node_id], BOOTSTRAP, gross))
                out.emitted += gross
        self.last_settled = epoch
        return out

    def quote_price(self, spec, region: str, duration: int = 1) -> int:
        return self.composer.quote(spec, region, duration)

    def to_dict(self) -> dict:
        return {
            "economies": {r: e.to_dict() for r, e in self.economies.items()},
            "last_settled": None if self.last_settled is None else str(self.last_settled),
            "totals": {k: str(v) for k, v in self.totals.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping, ledger: Ledger, registry: Registry, composer: Composer) -> "Economics":
        econ = cls(ledger, registry, composer,
                   [RegionEconomy.from_dict(r, e) for r, e in sorted(d["economies"].items())])
        econ.last_settled = None if d["last_settled"] is None else parse_int(d["last_settled"])
        econ.totals = {k: parse_int(v) for k, v in d["totals"].items()}
        return econ
