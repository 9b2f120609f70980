"""In-memory coordination ledger: balances, collateral, stakes, NFT passes, proof anchors.

The ledger is a single-writer state machine. Supply only changes through
:meth:`Ledger.emit` (reward emission) and burns (slashing, forfeited fees),
both of which are tallied so that::

    balances + locks + stakes + nft sinks + burned_total - emitted_total == genesis_supply

holds after every operation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional

from . import errors
from .units import check_amount, checked_add, fraction_str, parse_fraction, parse_int

logger = logging.getLogger(__name__)


@dataclass
class CollateralLock:
    id: str
    owner: str
    node: str
    amount: int
    locked_until: int


@dataclass
class StakePosition:
    id: str
    staker: str
    node: str
    amount: int


@dataclass
class NftPass:
    id: str
    owner: str
    sink_value: int
    initial_sink: int
    timelock_epochs: int
    staked_to: Optional[str] = None
    decay_multiplier: Fraction = Fraction(1)
    # staked epochs elapsed, each weighted by the multiplier in force; the pass
    # exhausts once the clock, rounded up to whole epochs, reaches the timelock
    decay_clock: Fraction = Fraction(0)
    paid_out: int = 0

    @property
    def security(self) -> int:
        return self.sink_value if self.staked_to is not None else 0

    def decay_step(self) -> int:
        if self.staked_to is None or self.sink_value == 0:
            return 0
        if math.ceil(self.decay_clock + self.decay_multiplier) >= self.timelock_epochs:
            return self.sink_value
        base = self.decay_multiplier * self.initial_sink / self.timelock_epochs
        # a slashed pass never drains slower than ceil(multiplier) per epoch
        return min(self.sink_value, max(math.ceil(self.decay_multiplier), int(base)))


@dataclass(frozen=True)
class ProofAnchor:
    id: int
    epoch: int
    subject: str
    root: bytes
    submitter: str


@dataclass
class SlashOutcome:
    node: str
    severity: Fraction
    burned: Dict[str, int] = field(default_factory=dict)
    nft: Optional[str] = None
    nft_multiplier: Optional[Fraction] = None

    @property
    def total(self) -> int:
        return sum(self.burned.values())


@dataclass
class EpochSummary:
    epoch: int
    decay_payouts: Dict[str, int] = field(default_factory=dict)
    expired_locks: List[str] = field(default_factory=list)


class Ledger:
    """Token ledger standing in for the coordination chain."""

    def __init__(self, balances: Optional[Mapping[str, int]] = None, epoch: int = 0):
        self.epoch = epoch
        self.accounts: Dict[str, int] = {}
        for acct, bal in sorted((balances or {}).items()):
            self.accounts[acct] = check_amount(bal)
        self.genesis_supply = sum(self.accounts.values())
        self.locks: Dict[str, CollateralLock] = {}
        self.stakes: Dict[str, StakePosition] = {}
        self.nfts: Dict[str, NftPass] = {}
        self.anchors: List[ProofAnchor] = []
        self._anchor_keys: set = set()
        self.submitters: set = set()
        self.burned_total = 0
        self.emitted_total = 0
        self._seq = 0

    def _next_id(self, prefix: str) -> str:
        self._seq += 1
        return f"{prefix}-{self._seq:06d}"

    # accounts ------------------------------------------------------------

    def open_account(self, account: str) -> None:
        """Create an empty account; a no-op if it exists already."""
        self.accounts.setdefault(account, 0)

    def balance(self, account: str) -> int:
        try:
            return self.accounts[account]
        except KeyError:
            raise errors.UnknownAccount(account) from None

    def _debit(self, account: str, amount: int) -> None:
        bal = self.balance(account)
        if bal < amount:
            raise errors.InsufficientBalance(f"{account} has {bal}, needs {amount}")
        self.accounts[account] = bal - amount

    def _credit(self, account: str, amount: int) -> None:
        self.accounts[account] = checked_add(self.accounts.get(account, 0), amount)

    def transfer(self, src: str, dst: str, amount: int) -> None:
        check_amount(amount)
        self.balance(dst)
        self._debit(src, amount)
        self._credit(dst, amount)

    def emit(self, account: str, amount: int) -> None:
        """Mint ``amount`` new tokens into ``account`` (reward emission only)."""
        check_amount(amount)
        self.emitted_total = checked_add(self.emitted_total, amount)
        self._credit(account, amount)

    def burn(self, account: str, amount: int) -> None:
        check_amount(amount)
        self._debit(account, amount)
        self.burned_total += amount

    # collateral and stake ------------------------------------------------

    def lock_collateral(self, owner: str, node: str, amount: int, until: int) -> CollateralLock:
        check_amount(amount, positive=True)
        if until <= self.epoch:
            raise errors.InvalidDuration(f"lock end {until} not after epoch {self.epoch}")
        self._debit(owner, amount)
        lock = CollateralLock(self._next_id("lock"), owner, node, amount, until)
        self.locks[lock.id] = lock
        return lock

    def release_collateral(self, lock_id: str) -> int:
        lock = self.locks.get(lock_id)
        if lock is None:
            raise errors.InvalidParameters(f"unknown lock {lock_id}")
        if self.epoch < lock.locked_until:
            raise errors.StillLocked(f"{lock_id} locked until {lock.locked_until}")
        del self.locks[lock_id]
        self._credit(lock.owner, lock.amount)
        return lock.amount

    def stake(self, staker: str, node: str, amount: int) -> StakePosition:
        """Stake tokens on ``node``. Callers check the node is active."""
        check_amount(amount, positive=True)
        self._debit(staker, amount)
        pos = StakePosition(self._next_id("stake"), staker, node, amount)
        self.stakes[pos.id] = pos
        return pos

    def locks_on(self, node: str) -> List[CollateralLock]:
        return [l for l in self.locks.values() if l.node == node]

    def stakes_on(self, node: str) -> List[StakePosition]:
        return [s for s in self.stakes.values() if s.node == node]

    def collateral(self, node: str) -> int:
        return sum(l.amount for l in self.locks.values() if l.node == node)

    def nft_on(self, node: str) -> Optional[NftPass]:
        for p in self.nfts.values():
            if p.staked_to == node:
                return p
        return None

    def security(self, node: str) -> int:
        """Slashable value backing ``node``: locks, stakes and a staked pass's sink."""
        total = self.collateral(node) + sum(s.amount for s in self.stakes_on(node))
        nft = self.nft_on(node)
        return total + (nft.security if nft else 0)

    def slash(self, node: str, severity) -> SlashOutcome:
        severity = parse_fraction(severity)
        if not 0 <= severity <= 1:
            raise errors.SeverityOutOfRange(str(severity))
        locks, stakes, nft = self.locks_on(node), self.stakes_on(node), self.nft_on(node)
        if not locks and not stakes and nft is None:
            raise errors.UnknownNode(f"nothing at stake on {node}")
        out = SlashOutcome(node, severity)
        for pos in [*locks, *stakes]:
            cut = int(severity * pos.amount)
            pos.amount -= cut
            out.burned[pos.id] = cut
            self.burned_total += cut
        if nft is not None:
            nft.decay_multiplier *= 1 + severity
            out.nft, out.nft_multiplier = nft.id, nft.decay_multiplier
        if out.total:
            logger.info("slashed %s at %s: burned %d", node, severity, out.total)
        return out

    # NFT passes ----------------------------------------------------------

    def mint_nft(self, owner: str, initial_sink: int, timelock_epochs: int, nft_id: Optional[str] = None) -> NftPass:
        """Mint a pass whose sink is funded from ``owner``'s balance."""
        if isinstance(initial_sink, bool) or not isinstance(initial_sink, int) or initial_sink <= 0:
            raise errors.InvalidParameters("initial_sink must be a positive integer")
        if isinstance(timelock_epochs, bool) or not isinstance(timelock_epochs, int) or timelock_epochs <= 0:
            raise errors.InvalidParameters("timelock_epochs must be a positive integer")
        nft_id = nft_id or self._next_id("nft")
        if nft_id in self.nfts:
            raise errors.DuplicateId(nft_id)
        self._debit(owner, initial_sink)
        p = NftPass(nft_id, owner, initial_sink, initial_sink, timelock_epochs)
        self.nfts[nft_id] = p
        return p

    def stake_nft(self, pass_id: str, node: str) -> NftPass:
        p = self.nfts.get(pass_id)
        if p is None:
            raise errors.UnknownNft(pass_id)
        if p.staked_to is not None:
            raise errors.AlreadyStaked(f"{pass_id} staked to {p.staked_to}")
        if p.sink_value == 0:
            raise errors.FullyDecayed(pass_id)
        if self.nft_on(node) is not None:
            raise errors.NodeOccupied(node)
        p.staked_to = node
        return p

    # epochs --------------------------------------------------------------

    def advance_epoch(self) -> EpochSummary:
        self.epoch += 1
        summary = EpochSummary(self.epoch)
        for p in sorted(self.nfts.values(), key=lambda p: p.id):
            step = p.decay_step()
            if p.staked_to is not None and p.sink_value > 0:
                p.decay_clock += p.decay_multiplier
            if step:
                p.sink_value -= step
                p.paid_out += step
                self._credit(p.owner, step)
                summary.decay_payouts[p.id] = step
        summary.expired_locks = sorted(l.id for l in self.locks.values() if l.locked_until == self.epoch)
        return summary

    # proof anchors -------------------------------------------------------

    def authorize_submitter(self, account: str) -> None:
        self.submitters.add(account)

    def record_proof_anchor(self, submitter: str, subject: str, epoch: int, root: bytes) -> int:
        if submitter not in self.submitters:
            raise errors.UnauthorizedSubmitter(submitter)
        key = (epoch, subject, submitter)
        if key in self._anchor_keys:
            raise errors.DuplicateAnchor(str(key))
        if len(root) != 32:
            raise errors.InvalidParameters("anchor root must be a 32-byte digest")
        anchor = ProofAnchor(len(self.anchors), epoch, subject, bytes(root), submitter)
        self.anchors.append(anchor)
        self._anchor_keys.add(key)
        return anchor.id

    def anchor(self, anchor_id: int) -> ProofAnchor:
        if not 0 <= anchor_id < len(self.anchors):
            raise errors.UnknownAnchor(str(anchor_id))
        return self.anchors[anchor_id]

    # accounting ----------------------------------------------------------

    def circulating(self) -> int:
        return (
            sum(self.accounts.values())
            + sum(l.amount for l in self.locks.values())
            + sum(s.amount for s in self.stakes.values())
            + sum(p.sink_value for p in self.nfts.values())
        )

    def conservation_residual(self) -> int:
        """Zero when the supply identity holds."""
        return self.circulating() + self.burned_total - self.emitted_total - self.genesis_supply

    # snapshot ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "epoch": str(self.epoch),
            "genesis_supply": str(self.genesis_supply),
            "burned_total": str(self.burned_total),
            "emitted_total": str(self.emitted_total),
            "seq": str(self._seq),
            "accounts": {a: str(b) for a, b in self.accounts.items()},
            "locks": {
                l.id: {"owner": l.owner, "node": l.node, "amount": str(l.amount), "locked_until": str(l.locked_until)}
                for l in self.locks.values()
            },
            "stakes": {s.id: {"staker": s.staker, "node": s.node, "amount": str(s.amount)} for s in self.stakes.values()},
            "nfts": {
                p.id: {
                    "owner": p.owner,
                    "sink_value": str(p.sink_value),
                    "initial_sink": str(p.initial_sink),
                    "timelock_epochs": str(p.timelock_epochs),
                    "staked_to": p.staked_to,
                    "decay_multiplier": fraction_str(p.decay_multiplier),
                    "decay_clock": fraction_str(p.decay_clock),
                    "paid_out": str(p.paid_out),
                }
                for p in self.nfts.values()
            },
            "anchors": [
                {"id": str(a.id), "epoch": str(a.epoch), "subject": a.subject, "root": a.root.hex(), "submitter": a.submitter}
                for a in self.anchors
            ],
            "submitters": sorted(self.submitters),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Ledger":
        led = cls()
        led.epoch = parse_int(d["epoch"])
        led.genesis_supply = parse_int(d["genesis_supply"])
        led.burned_total = parse_int(d["burned_total"])
        led.emitted_total = parse_int(d["emitted_total"])
        led._seq = parse_int(d.get("seq", "0"))
        led.accounts = {a: parse_int(b) for a, b in sorted(d["accounts"].items())}
        for lid, l in sorted(d["locks"].items()):
            led.locks[lid] = CollateralLock(lid, l["owner"], l["node"], parse_int(l["amount"]), parse_int(l["locked_until"]))
        for sid, s in sorted(d["stakes"].items()):
            led.stakes[sid] = StakePosition(sid, s["staker"], s["node"], parse_int(s["amount"]))
        for nid, p in sorted(d["nfts"].items()):
            led.nfts[nid] = NftPass(
                nid,
                p["owner"],
                parse_int(p["sink_value"]),
                parse_int(p["initial_sink"]),
                parse_int(p["timelock_epochs"]),
                p["staked_to"],
                parse_fraction(p["decay_multiplier"]),
                parse_fraction(p["decay_clock"]),
                parse_int(p["paid_out"]),
            )
        for a in d["anchors"]:
            anchor = ProofAnchor(parse_int(a["id"]), parse_int(a["epoch"]), a["subject"], bytes.fromhex(a["root"]), a["submitter"])
            led.anchors.append(anchor)
            led._anchor_keys.add((anchor.epoch, anchor.subject, anchor.submitter))
        led.submitters = set(d["submitters"])
        return led
