"""Deterministic epoch loop over a scenario.

Each epoch runs, in this order: start-of-epoch billing, scripted events,
challenge scheduling and execution, aggregation and anchoring (with fault and
misbehavior slashing), settlement, ledger advance, the invariant suite, and
finally one metrics frame. A run is a pure function of (scenario, seed): no
wall clock, no unordered iteration, no floats.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from . import canonical, errors, scenario as scenario_mod
from .economics import ACCESS_FEE, BOOTSTRAP, RewardStatement, Settlement
from .network import ChallengeOutcome, Network
from .units import ResourceType, parse_int

logger = logging.getLogger(__name__)

SOURCES = (BOOTSTRAP, ACCESS_FEE)


@dataclass
class EventRecord:
    epoch: int
    index: int
    action: str
    ok: bool
    error: str = ""


@dataclass
class MetricsFrame:
    epoch: int
    residual: Dict[Tuple[str, ResourceType], int]
    live_instances: int
    rewards: Dict[str, int]
    burned_total: int
    emitted_total: int
    faults: int
    misbehaviors: int
    rejected_events: int
    conservation: str


@dataclass
class RunResult:
    network: Network
    frames: List[MetricsFrame] = field(default_factory=list)
    statements: List[RewardStatement] = field(default_factory=list)
    events: List[EventRecord] = field(default_factory=list)
    residual_columns: List[Tuple[str, ResourceType]] = field(default_factory=list)
    violation: Optional[errors.InvariantViolation] = None

    @property
    def exit_status(self) -> int:
        return 0 if self.violation is None else 1

    @property
    def final_state(self) -> dict:
        return self.network.snapshot()

    def metrics_csv(self) -> str:
        return metrics_csv(self.frames, self.statements, self.residual_columns)

    def summary(self) -> dict:
        net = self.network
        totals = {s: sum(st.gross for st in self.statements if st.source == s) for s in SOURCES}
        return {
            "epochs_run": len(self.frames),
            "final_epoch": net.ledger.epoch,
            "exit_status": self.exit_status,
            "violation": None if self.violation is None else {
                "invariant": self.violation.invariant, "epoch": self.violation.epoch,
                "detail": self.violation.detail,
            },
            "genesis_supply": net.ledger.genesis_supply,
            "emitted_total": net.ledger.emitted_total,
            "burned_total": net.ledger.burned_total,
            "conservation_residual": net.ledger.conservation_residual(),
            "rewards_by_source": totals,
            "reward_statements": len(self.statements),
            "faults_detected": sum(f.faults for f in self.frames),
            "misbehaviors_detected": sum(f.misbehaviors for f in self.frames),
            "events_applied": sum(1 for e in self.events if e.ok),
            "events_rejected": [
                {"index": e.index, "epoch": e.epoch, "action": e.action, "error": e.error}
                for e in self.events if not e.ok
            ],
            "live_instances": len(net.composer.instances),
            "active_nodes": len(net.registry.active_nodes()),
        }


class InvariantTracker:
    """Carries cross-epoch state for the append-only and monotonicity checks."""

    def __init__(self, net: Network):
        self.net = net
        self.anchors = list(net.ledger.anchors)
        self.nfts = {p.id: (p.sink_value, p.paid_out) for p in net.ledger.nfts.values()}

    def check(self, epoch: int, challenges: ChallengeOutcome, settlement: Settlement) -> None:
        net = self.net
        ledger = net.ledger

        def fail(name: str, detail) -> None:
            raise errors.InvariantViolation(name, epoch, detail if isinstance(detail, str) else "; ".join(detail))

        residual = ledger.conservation_residual()
        if residual:
            fail("conservation", f"residual {residual}")
        problems = net.composer.check_no_double_allocation()
        if problems:
            fail("no-double-allocation", problems)
        problems = net.composer.check_locality()
        if problems:
            fail("locality", problems)
        problems = net.check_collateral()
        if problems:
            fail("active-collateral", problems)
        for region in sorted(net.registry.regions):
            if net.registry.capability_map(region) != net.recompute_capability_map(region):
                fail("capability-map", f"region {region} tally differs from recomputation")
        if challenges.incomplete:
            fail("report-completeness", challenges.incomplete)

        if ledger.anchors[: len(self.anchors)] != self.anchors:
            fail("anchor-append-only", "an existing anchor was altered or removed")
        self.anchors = list(ledger.anchors)

        for pid, (sink, paid) in sorted(self.nfts.items()):
            p = ledger.nfts.get(pid)
            if p is None:
                fail("nft-monotonicity", f"{pid} disappeared")
            if p.sink_value > sink or p.paid_out < paid:
                fail("nft-monotonicity", f"{pid}: sink {sink}->{p.sink_value}, paid {paid}->{p.paid_out}")
        self.nfts = {p.id: (p.sink_value, p.paid_out) for p in ledger.nfts.values()}

        for st in settlement.statements:
            if st.provider_cut + st.staker_total != st.gross or st.provider_cut < 0:
                fail("split-exactness", f"{st.node} {st.source}: {st.provider_cut}+{st.staker_total}!={st.gross}")
        if settlement.charged != settlement.total(ACCESS_FEE) + settlement.burned_fees:
            fail("billing-conservation",
                 f"charged {settlement.charged} != paid {settlement.total(ACCESS_FEE)} + burned {settlement.burned_fees}")
        configured = sum(e.bootstrap_emission_per_epoch for e in net.economics.economies.values()
                         if epoch < e.bootstrap_end)
        if settlement.emitted > configured:
            fail("emission-accounting", f"emitted {settlement.emitted} > configured {configured}")

        slashed = {s.node: s.severity for s in challenges.fault_slashes}
        for f in challenges.faults:
            if not 0 <= f.severity <= 1:
                fail("severity-bounds", f"{f.subject}: {f.severity}")
            if slashed.get(f.subject) != f.severity:
                fail("fault-slash-coupling", f"{f.subject} faulted without a matching slash")


def residual_columns(net: Network) -> List[Tuple[str, ResourceType]]:
    """Every (region, type) a node of any declared class could offer, in a fixed order."""
    types = sorted({t for hc in net.registry.classes.values() for t in hc.capacity_template}, key=str)
    return [(r, t) for r in sorted(net.registry.regions) for t in types]


def frame_header(columns) -> List[str]:
    return (["record", "epoch", "live_instances"] + [f"rewards:{s}" for s in SOURCES]
            + ["burned_total", "emitted_total", "faults", "misbehaviors", "rejected_events", "conservation"]
            + [f"residual:{r}:{t}" for r, t in columns]
            + ["node", "source", "gross", "provider_cut", "staker_total"])


def metrics_csv(frames: List[MetricsFrame], statements: List[RewardStatement], columns) -> str:
    """One ``frame`` row per epoch, each followed by that epoch's ``reward`` rows."""
    header = frame_header(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    by_epoch: Dict[int, List[RewardStatement]] = {}
    for st in statements:
        by_epoch.setdefault(st.epoch, []).append(st)
    blank_reward = [""] * 5
    n_frame = len(header) - 5
    for f in frames:
        w.writerow(["frame", f.epoch, f.live_instances] + [f.rewards.get(s, 0) for s in SOURCES]
                   + [f.burned_total, f.emitted_total, f.faults, f.misbehaviors, f.rejected_events, f.conservation]
                   + [f.residual.get(c, 0) for c in columns] + blank_reward)
        for st in by_epoch.get(f.epoch, []):
            w.writerow(["reward", st.epoch] + [""] * (n_frame - 2)
                       + [st.node, st.source, st.gross, st.provider_cut, st.staker_total])
    return buf.getvalue()


def read_metrics(path) -> Tuple[List[dict], List[dict]]:
    """Parse a metrics CSV back into (frame rows, reward rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [r for r in rows if r["record"] == "frame"], [r for r in rows if r["record"] == "reward"]


def run(doc: Mapping, seed: Optional[int] = None, epochs: Optional[int] = None,
        out_dir=None) -> RunResult:
    """Run a scenario document; ``seed`` and ``epochs`` override the scenario's values.

    Raises ``ScenarioInvalid`` for an invalid scenario. An invariant violation
    stops the loop and is reported on the result (``exit_status == 1``).
    """
    diagnostics = scenario_mod.validate(doc)
    if diagnostics:
        raise errors.ScenarioInvalid(diagnostics)
    n_epochs = parse_int(doc["epochs"]) if epochs is None else epochs
    if n_epochs < 1:
        raise errors.ScenarioInvalid([("/epochs", "epochs must be positive")])
    try:
        net = Network.from_scenario(doc, seed)
    except errors.ProtocolError as exc:
        raise errors.ScenarioInvalid([("", f"genesis rejected: {type(exc).__name__}: {exc}")]) from exc
    result = RunResult(net, residual_columns=residual_columns(net))
    tracker = InvariantTracker(net)
    events = list(enumerate(doc["events"]))
    cursor = 0
    for epoch in range(n_epochs):
        net.begin_epoch()
        rejected = 0
        while cursor < len(events) and parse_int(events[cursor][1]["epoch"]) <= epoch:
            idx, ev = events[cursor]
            cursor += 1
            rec = EventRecord(epoch, idx, ev["action"], True)
            try:
                net.apply(ev["action"], ev.get("args", {}))
            except errors.ProtocolError as exc:
                rec.ok, rec.error = False, f"{type(exc).__name__}: {exc}"
                rejected += 1
                logger.info("epoch %d: event %d (%s) rejected: %s", epoch, idx, ev["action"], rec.error)
            result.events.append(rec)
        challenges = net.challenge_phase()
        settlement = net.settle(challenges.failed)
        result.statements.extend(settlement.statements)
        net.end_epoch()
        try:
            tracker.check(epoch, challenges, settlement)
        except errors.InvariantViolation as exc:
            logger.error("%s", exc)
            result.violation = exc
            result.frames.append(_frame(net, result.residual_columns, epoch, challenges, settlement, rejected,
                                        "violated"))
            break
        result.frames.append(_frame(net, result.residual_columns, epoch, challenges, settlement, rejected, "ok"))
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _frame(net: Network, columns, epoch: int, challenges: ChallengeOutcome, settlement: Settlement,
           rejected: int, conservation: str) -> MetricsFrame:
    residual = {}
    for region in sorted({r for r, _ in columns}):
        for t, q in net.registry.capability_map(region).items():
            residual[(region, t)] = q
    if net.ledger.conservation_residual() != 0:
        conservation = "violated"
    return MetricsFrame(
        epoch=epoch,
        residual=residual,
        live_instances=len(net.composer.instances),
        rewards={s: settlement.total(s) for s in SOURCES},
        burned_total=net.ledger.burned_total,
        emitted_total=net.ledger.emitted_total,
        faults=len(challenges.faults),
        misbehaviors=len(challenges.misbehaviors),
        rejected_events=rejected,
        conservation=conservation,
    )


def write_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(result.metrics_csv(), encoding="utf-8")
    (out / "summary.json").write_text(canonical.dumps_pretty(result.summary()), encoding="utf-8")
    (out / "final_state.json").write_bytes(canonical.dumps(result.final_state) + b"\n")
