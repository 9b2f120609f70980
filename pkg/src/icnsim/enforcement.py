"""HyperNode challenges, KPI aggregation, satellite retention and on-ledger commitments.

KPI values are integers in milli-units. A challenge measurement is::

    measured = floor(true_value * fault_multiplier * (1e6 + noise_ppm) / 1e6)

with ``noise_ppm`` drawn uniformly from [-A, A], A = floor(noise_amplitude * 1e6),
keyed by (seed, epoch, hypernode, subject, kpi) so replays agree draw for draw.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple, Union

from . import canonical, errors, merkle
from .ledger import Ledger
from .merkle import MerkleProof, MerkleTree
from .registry import Registry
from .units import fraction_str, parse_fraction, parse_int

logger = logging.getLogger(__name__)

PPM = 1_000_000


@dataclass(frozen=True)
class ChallengeSpec:
    kind: str
    subject: str
    kpis: Tuple[str, ...]
    pass_thresholds: Mapping[str, Fraction]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "subject": self.subject,
            "kpis": list(self.kpis),
            "pass_thresholds": {k: fraction_str(v) for k, v in self.pass_thresholds.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChallengeSpec":
        return cls(
            d["kind"], d["subject"], tuple(d["kpis"]),
            {k: parse_fraction(v) for k, v in sorted(d["pass_thresholds"].items())},
        )


@dataclass(frozen=True)
class HyperNode:
    id: str
    operator: str


@dataclass(frozen=True)
class Service:
    """Service-level challenge subject; ``profile`` holds nominal KPIs in milli-units."""

    id: str
    builder: str
    profile: Mapping[str, int]


@dataclass(frozen=True, order=True)
class Assignment:
    hypernode: str
    subject: str
    kind: str
    epoch: int


@dataclass(frozen=True)
class PerformanceReport:
    epoch: int
    subject: str
    challenger: str
    kind: str
    kpis: Mapping[str, int]
    verdict: Mapping[str, bool]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "subject": self.subject,
            "challenger": self.challenger,
            "kind": self.kind,
            "kpis": dict(self.kpis),
            "verdict": dict(self.verdict),
        }

    def canonical(self) -> bytes:
        return canonical.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "PerformanceReport":
        kpis = {str(k): parse_int(v) for k, v in d["kpis"].items()}
        verdict = {}
        for k, v in d["verdict"].items():
            if not isinstance(v, bool):
                raise ValueError(f"verdict for {k} must be boolean")
            verdict[str(k)] = v
        return cls(parse_int(d["epoch"]), str(d["subject"]), str(d["challenger"]), str(d["kind"]), kpis, verdict)


@dataclass(frozen=True)
class AggregateRecord:
    epoch: int
    subject: str
    kind: str
    challengers: Tuple[str, ...]
    medians: Mapping[str, int]
    passed: bool
    severity: Fraction

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "subject": self.subject,
            "kind": self.kind,
            "challengers": list(self.challengers),
            "medians": dict(self.medians),
            "passed": self.passed,
            "severity": fraction_str(self.severity),
        }

    def canonical(self) -> bytes:
        return canonical.dumps({"aggregate": self.to_dict()})

    @classmethod
    def from_dict(cls, d: Mapping) -> "AggregateRecord":
        return cls(
            parse_int(d["epoch"]), d["subject"], d["kind"], tuple(d["challengers"]),
            {k: parse_int(v) for k, v in d["medians"].items()}, bool(d["passed"]), parse_fraction(d["severity"]),
        )


@dataclass(frozen=True)
class FaultEvent:
    epoch: int
    subject: str
    severity: Fraction
    anchor: int


@dataclass(frozen=True)
class MisbehaviorEvent:
    epoch: int
    hypernode: str
    subject: str
    kpi: str
    deviation: int


class SatelliteStore:
    """Retention-limited report store; entries are immutable while retained."""

    def __init__(self, retention_epochs: int):
        if retention_epochs <= 0:
            raise errors.InvalidParameters("retention_epochs must be positive")
        self.retention_epochs = retention_epochs
        self.reports: Dict[Tuple[int, str, str], PerformanceReport] = {}
        self.aggregates: Dict[Tuple[int, str], AggregateRecord] = {}

    def put(self, report: PerformanceReport) -> None:
        key = (report.epoch, report.subject, report.challenger)
        if key in self.reports:
            raise errors.DuplicateReport(str(key))
        self.reports[key] = report

    def put_aggregate(self, agg: AggregateRecord) -> None:
        key = (agg.epoch, agg.subject)
        if key in self.aggregates:
            raise errors.DuplicateReport(str(key))
        self.aggregates[key] = agg

    def get(self, epoch: int, subject: str, challenger: str) -> Optional[PerformanceReport]:
        return self.reports.get((epoch, subject, challenger))

    def reports_for(self, epoch: int, subject: str) -> List[PerformanceReport]:
        return [r for (e, s, _), r in sorted(self.reports.items()) if e == epoch and s == subject]

    def evict(self, current_epoch: int) -> int:
        cutoff = current_epoch - self.retention_epochs
        old = [k for k in self.reports if k[0] <= cutoff]
        for k in old:
            del self.reports[k]
        for k in [k for k in self.aggregates if k[0] <= cutoff]:
            del self.aggregates[k]
        return len(old)


def median(values: List[int]) -> int:
    """Integer median; for an even count, the floor of the two middle values' mean."""
    s = sorted(values)
    n = len(s)
    if n == 0:
        raise ValueError("median of empty list")
    if n % 2:
        return s[n // 2]
    return (s[n // 2 - 1] + s[n // 2]) // 2


def fault_severity(medians: Mapping[str, int], nominal: Mapping[str, int],
                   thresholds: Mapping[str, Fraction]) -> Fraction:
    """Relative shortfall of the worst failing KPI, clamped to [0, 1]."""
    worst = Fraction(0)
    for kpi, thr in thresholds.items():
        bar = thr * nominal[kpi]
        if bar > 0 and medians[kpi] < bar:
            worst = max(worst, (bar - medians[kpi]) / bar)
    return min(Fraction(1), max(Fraction(0), worst))


class Enforcement:
    def __init__(self, ledger: Ledger, registry: Registry, seed: int = 0, replication: int = 3,
                 noise_amplitude=Fraction(0), retention_epochs: int = 16, misbehavior_slash_rate=Fraction(0)):
        self.ledger = ledger
        self.registry = registry
        self.seed = seed
        self.replication = replication
        self.noise_amplitude = parse_fraction(noise_amplitude)
        if not 0 <= self.noise_amplitude < 1:
            raise errors.InvalidParameters("noise amplitude must be in [0, 1)")
        self.misbehavior_slash_rate = parse_fraction(misbehavior_slash_rate)
        self.store = SatelliteStore(retention_epochs)
        self.hypernodes: Dict[str, HyperNode] = {}
        self.specs: Dict[str, ChallengeSpec] = {}
        self.services: Dict[str, Service] = {}
        # subject -> (multiplier, until epoch exclusive)
        self.faults: Dict[str, Tuple[Fraction, int]] = {}
        self.corruptions: Dict[str, Tuple[Fraction, int]] = {}
        self.latest: Dict[str, Dict[str, int]] = {}
        self.commitments: Dict[Tuple[int, str], int] = {}
        self.schedule: List[Assignment] = []
        self.schedule_eligible = 0

    # registration --------------------------------------------------------

    def register_hypernode(self, hn_id: str, operator: str) -> HyperNode:
        if hn_id in self.hypernodes or hn_id in self.registry.nodes:
            raise errors.DuplicateId(hn_id)
        hn = HyperNode(hn_id, operator)
        self.hypernodes[hn_id] = hn
        self.ledger.open_account(operator)
        self.ledger.authorize_submitter(operator)
        return hn

    def register_service(self, service: Service) -> None:
        if service.id in self.services:
            raise errors.DuplicateId(service.id)
        self.services[service.id] = service

    def _subject_profile(self, subject: str) -> Optional[Mapping[str, int]]:
        if subject in self.registry.classes:
            return self.registry.classes[subject].performance_profile
        if subject in self.services:
            return self.services[subject].profile
        return None

    def register_challenge_spec(self, spec: ChallengeSpec) -> str:
        profile = self._subject_profile(spec.subject)
        if profile is None:
            raise errors.UnknownSubject(spec.subject)
        if not spec.kpis:
            raise errors.MalformedSpec(f"{spec.kind}: no KPIs")
        if spec.kind in self.specs:
            raise errors.MalformedSpec(f"{spec.kind}: already registered")
        for kpi in spec.kpis:
            if kpi not in profile:
                raise errors.MalformedSpec(f"{spec.kind}: KPI {kpi} not in {spec.subject} profile")
            thr = spec.pass_thresholds.get(kpi)
            if thr is None or not 0 < thr <= 1:
                raise errors.MalformedSpec(f"{spec.kind}: threshold for {kpi} must be in (0, 1]")
        if set(spec.pass_thresholds) - set(spec.kpis):
            raise errors.MalformedSpec(f"{spec.kind}: thresholds for KPIs not in the spec")
        self.specs[spec.kind] = spec
        return spec.kind

    def applicable_kinds(self, subject: str) -> List[str]:
        node = self.registry.nodes.get(subject)
        key = node.hw_class if node is not None else subject
        return sorted(k for k, s in self.specs.items() if s.subject == key)

    def inject_fault(self, subject: str, multiplier, duration: int) -> None:
        m = parse_fraction(multiplier)
        if not 0 <= m <= 1 or duration <= 0:
            raise errors.InvalidParameters("fault multiplier must be in [0, 1] and duration positive")
        if subject not in self.registry.nodes and subject not in self.services:
            raise errors.UnknownSubject(subject)
        self.faults[subject] = (m, self.ledger.epoch + duration)

    def corrupt_hypernode(self, hn_id: str, multiplier, duration: int) -> None:
        if hn_id not in self.hypernodes:
            raise errors.UnknownSubject(hn_id)
        self.corruptions[hn_id] = (parse_fraction(multiplier), self.ledger.epoch + duration)

    def _multiplier(self, table, key: str, epoch: int) -> Fraction:
        entry = table.get(key)
        if entry is None or epoch >= entry[1]:
            return Fraction(1)
        return entry[0]

    # challenge cycle -----------------------------------------------------

    def eligible_hypernodes(self) -> List[str]:
        return [h for h in sorted(self.hypernodes) if self.ledger.security(h) > 0]

    def subjects(self) -> List[str]:
        nodes = [n.id for n in self.registry.active_nodes() if self.applicable_kinds(n.id)]
        services = [s for s in sorted(self.services) if self.applicable_kinds(s)]
        return nodes + services

    def schedule_challenges(self, epoch: int) -> List[Assignment]:
        eligible = self.eligible_hypernodes()
        if not eligible:
            raise errors.NoEligibleHyperNodes(f"epoch {epoch}")
        k = min(self.replication, len(eligible))
        out = []
        for subject in self.subjects():
            kinds = self.applicable_kinds(subject)
            kind = kinds[epoch % len(kinds)]
            ranked = sorted(eligible, key=lambda h: (canonical.draw(self.seed, "schedule", epoch, subject, h), h))
            out.extend(Assignment(h, subject, kind, epoch) for h in ranked[:k])
        out.sort()
        self.schedule = out
        self.schedule_eligible = len(eligible)
        return out

    def _nominal(self, subject: str) -> Tuple[Mapping[str, int], Mapping[str, int]]:
        """(true profile, class nominal profile) for a subject."""
        node = self.registry.nodes.get(subject)
        if node is not None:
            return node.profile, self.registry.classes[node.hw_class].performance_profile
        svc = self.services[subject]
        return svc.profile, svc.profile

    def noise_ppm(self, epoch: int, hypernode: str, subject: str, kpi: str) -> int:
        amp = int(self.noise_amplitude * PPM)
        if amp == 0:
            return 0
        return canonical.draw(self.seed, "noise", epoch, hypernode, subject, kpi) % (2 * amp + 1) - amp

    def execute_challenge(self, a: Assignment) -> PerformanceReport:
        if a.subject in self.registry.nodes:
            if not self.registry.is_active(a.subject):
                raise errors.SubjectInactive(a.subject)
        elif a.subject not in self.services:
            raise errors.UnknownSubject(a.subject)
        spec = self.specs[a.kind]
        true, nominal = self._nominal(a.subject)
        mult = self._multiplier(self.faults, a.subject, a.epoch)
        lie = self._multiplier(self.corruptions, a.hypernode, a.epoch)
        kpis, verdict = {}, {}
        for kpi in spec.kpis:
            noise = self.noise_ppm(a.epoch, a.hypernode, a.subject, kpi)
            measured = int(true[kpi] * mult * lie * Fraction(PPM + noise, PPM))
            kpis[kpi] = measured
            verdict[kpi] = measured >= spec.pass_thresholds[kpi] * nominal[kpi]
        return PerformanceReport(a.epoch, a.subject, a.hypernode, a.kind, kpis, verdict)

    def run_challenges(self, assignments: List[Assignment]) -> List[PerformanceReport]:
        reports = [self.execute_challenge(a) for a in sorted(assignments)]
        for r in reports:
            self.store.put(r)
        return reports

    def aggregate_and_commit(self, epoch: int, subject: str):
        """Median-aggregate the subject's reports, anchor the Merkle root, detect faults.

        Returns ``(record, anchor_id, fault, misbehaviors)``; ``fault`` is None
        when the aggregated verdict passes.
        """
        assigned = sorted(a.hypernode for a in self.schedule if a.epoch == epoch and a.subject == subject)
        if not assigned:
            raise errors.ReportsMissing(f"no assignment for {subject} at epoch {epoch}")
        reports = []
        for h in assigned:
            r = self.store.get(epoch, subject, h)
            if r is None:
                raise errors.ReportsMissing(f"{subject}@{epoch} from {h}")
            reports.append(r)
        kind = reports[0].kind
        spec = self.specs[kind]
        _, nominal = self._nominal(subject)
        medians = {kpi: median([r.kpis[kpi] for r in reports]) for kpi in spec.kpis}
        passed = all(medians[k] >= spec.pass_thresholds[k] * nominal[k] for k in spec.kpis)
        severity = Fraction(0) if passed else fault_severity(medians, nominal, spec.pass_thresholds)
        record = AggregateRecord(epoch, subject, kind, tuple(assigned), medians, passed, severity)
        self.store.put_aggregate(record)
        tree = MerkleTree([r.canonical() for r in reports] + [record.canonical()])
        submitter = self.hypernodes[assigned[0]].operator
        anchor_id = self.ledger.record_proof_anchor(submitter, subject, epoch, tree.root)
        self.commitments[(epoch, subject)] = anchor_id
        self.latest[subject] = dict(medians)
        fault = None if passed else FaultEvent(epoch, subject, severity, anchor_id)
        return record, anchor_id, fault, self._misbehaviors(reports, medians, subject)

    def _misbehaviors(self, reports, medians, subject) -> List[MisbehaviorEvent]:
        # a single deviating replica is only identifiable against an honest majority
        if len(reports) < 3:
            return []
        true, _ = self._nominal(subject)
        out = []
        for r in reports:
            for kpi, v in sorted(r.kpis.items()):
                envelope = math.ceil(2 * self.noise_amplitude * true[kpi]) + 1
                dev = abs(v - medians[kpi])
                if dev > envelope:
                    out.append(MisbehaviorEvent(r.epoch, r.challenger, subject, kpi, dev))
                    break
        return out

    def check_completeness(self, epoch: int) -> List[str]:
        expected = min(self.replication, self.schedule_eligible)
        problems = []
        per_subject: Dict[str, int] = {}
        for a in self.schedule:
            if a.epoch == epoch:
                per_subject[a.subject] = per_subject.get(a.subject, 0) + 1
        for subject, n in per_subject.items():
            have = len(self.store.reports_for(epoch, subject))
            if n != expected or have != n:
                problems.append(f"{subject}: {have} reports, {n} assigned, {expected} expected")
        return problems

    # proofs --------------------------------------------------------------

    def proof_for(self, epoch: int, subject: str, challenger: str) -> Tuple[PerformanceReport, MerkleProof, int]:
        """Inclusion proof for a retained report; raises ReportsMissing once evicted."""
        agg = self.store.aggregates.get((epoch, subject))
        if agg is None:
            raise errors.ReportsMissing(f"no retained aggregate for {subject}@{epoch}")
        reports = []
        for h in agg.challengers:
            r = self.store.get(epoch, subject, h)
            if r is None:
                raise errors.ReportsMissing(f"{subject}@{epoch} from {h}")
            reports.append(r)
        if challenger not in agg.challengers:
            raise errors.ReportsMissing(f"{challenger} did not report on {subject}@{epoch}")
        tree = MerkleTree([r.canonical() for r in reports] + [agg.canonical()])
        idx = agg.challengers.index(challenger)
        return reports[idx], tree.proof(idx), self.commitments[(epoch, subject)]

    def verify_report(self, report: Union[PerformanceReport, bytes], proof: MerkleProof, anchor_id: int) -> bool:
        anchor = self.ledger.anchor(anchor_id)
        data = report if isinstance(report, (bytes, bytearray)) else report.canonical()
        return merkle.verify(bytes(data), proof, anchor.root)

    def advance(self) -> int:
        """Drop expired fault windows and evict reports past retention."""
        epoch = self.ledger.epoch
        self.faults = {s: f for s, f in self.faults.items() if f[1] > epoch}
        self.corruptions = {s: f for s, f in self.corruptions.items() if f[1] > epoch}
        return self.store.evict(epoch)

    # snapshot ------------------------------------------------------------

    def to_dict(self) -> dict:
        def window(t):
            return {k: {"multiplier": fraction_str(m), "until": str(u)} for k, (m, u) in t.items()}

        return {
            "seed": str(self.seed),
            "replication": str(self.replication),
            "noise_amplitude": fraction_str(self.noise_amplitude),
            "retention_epochs": str(self.store.retention_epochs),
            "misbehavior_slash_rate": fraction_str(self.misbehavior_slash_rate),
            "hypernodes": {h.id: {"operator": h.operator} for h in self.hypernodes.values()},
            "specs": {s.kind: s.to_dict() for s in self.specs.values()},
            "services": {
                s.id: {"builder": s.builder, "profile": {k: str(v) for k, v in s.profile.items()}}
                for s in self.services.values()
            },
            "faults": window(self.faults),
            "corruptions": window(self.corruptions),
            "latest": {s: {k: str(v) for k, v in m.items()} for s, m in self.latest.items()},
            "commitments": [
                {"epoch": str(e), "subject": s, "anchor": str(a)} for (e, s), a in sorted(self.commitments.items())
            ],
            "reports": [r.to_dict() for _, r in sorted(self.store.reports.items())],
            "aggregates": [a.to_dict() for _, a in sorted(self.store.aggregates.items())],
        }

    @classmethod
    def from_dict(cls, d: Mapping, ledger: Ledger, registry: Registry) -> "Enforcement":
        enf = cls(
            ledger, registry, parse_int(d["seed"]), parse_int(d["replication"]), parse_fraction(d["noise_amplitude"]),
            parse_int(d["retention_epochs"]), parse_fraction(d["misbehavior_slash_rate"]),
        )
        for hid, h in sorted(d["hypernodes"].items()):
            enf.hypernodes[hid] = HyperNode(hid, h["operator"])
        for sid, s in sorted(d["services"].items()):
            enf.services[sid] = Service(sid, s["builder"], {k: parse_int(v) for k, v in s["profile"].items()})
        for kind, s in sorted(d["specs"].items()):
            enf.specs[kind] = ChallengeSpec.from_dict(s)
        enf.faults = {k: (parse_fraction(v["multiplier"]), parse_int(v["until"])) for k, v in sorted(d["faults"].items())}
        enf.corruptions = {
            k: (parse_fraction(v["multiplier"]), parse_int(v["until"])) for k, v in sorted(d["corruptions"].items())
        }
        enf.latest = {s: {k: parse_int(v) for k, v in m.items()} for s, m in sorted(d["latest"].items())}
        for c in d["commitments"]:
            enf.commitments[(parse_int(c["epoch"]), c["subject"])] = parse_int(c["anchor"])
        for r in d["reports"]:
            enf.store.put(PerformanceReport.from_dict(r))
        for a in d["aggregates"]:
            enf.store.put_aggregate(AggregateRecord.from_dict(a))
        return enf
