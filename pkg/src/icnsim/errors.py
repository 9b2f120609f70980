"""Exception hierarchy for protocol operations.

Every protocol error derives from :class:`ProtocolError` so callers driving
scripted events can catch rejections in one place.
"""


class ProtocolError(Exception):
    """Base class for rejected protocol operations."""


# ledger
class UnknownAccount(ProtocolError):
    pass


class InsufficientBalance(ProtocolError):
    pass


class InvalidAmount(ProtocolError):
    pass


class InvalidDuration(ProtocolError):
    pass


class StillLocked(ProtocolError):
    pass


class UnknownNode(ProtocolError):
    pass


class SeverityOutOfRange(ProtocolError):
    pass


class InvalidParameters(ProtocolError):
    pass


class AlreadyStaked(ProtocolError):
    pass


class NodeOccupied(ProtocolError):
    pass


class FullyDecayed(ProtocolError):
    pass


class UnknownNft(ProtocolError):
    pass


class DuplicateAnchor(ProtocolError):
    pass


class UnauthorizedSubmitter(ProtocolError):
    pass


class UnknownAnchor(ProtocolError):
    pass


class Overflow(ProtocolError):
    pass


# hardware registry
class UnknownClass(ProtocolError):
    pass


class UnknownRegion(ProtocolError):
    pass


class MalformedCapacity(ProtocolError):
    pass


class InvalidCommitment(ProtocolError):
    pass


class InsufficientCollateral(ProtocolError):
    pass


class CommitmentActive(ProtocolError):
    pass


class AllocationsOutstanding(ProtocolError):
    pass


class InvalidTransition(ProtocolError):
    pass


class DuplicateId(ProtocolError):
    pass


class NodeInactive(ProtocolError):
    pass


# resource composition
class InsufficientCapacity(ProtocolError):
    pass


class LocalityUnsatisfiable(ProtocolError):
    pass


class KpiUnsatisfiable(ProtocolError):
    pass


class NotElastic(ProtocolError):
    pass


class BoundsExceeded(ProtocolError):
    pass


class UnknownInstance(ProtocolError):
    pass


class UnknownBlueprint(ProtocolError):
    pass


class ProviderDeclined(ProtocolError):
    pass


class CommitmentTooShort(ProtocolError):
    pass


# performance enforcement
class NoEligibleHyperNodes(ProtocolError):
    pass


class SubjectInactive(ProtocolError):
    pass


class ReportsMissing(ProtocolError):
    pass


class UnknownSubject(ProtocolError):
    pass


class MalformedSpec(ProtocolError):
    pass


class DuplicateReport(ProtocolError):
    pass


# economics
class SettlementOutOfOrder(ProtocolError):
    pass


# simulator
class ScenarioInvalid(Exception):
    """Scenario failed validation; ``diagnostics`` lists (path, message) pairs."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{p}: {m}" for p, m in self.diagnostics)
        super().__init__(f"invalid scenario: {lines}")


class InvariantViolation(Exception):
    def __init__(self, invariant: str, epoch: int, detail: str = ""):
        self.invariant = invariant
        self.epoch = epoch
        self.detail = detail
        msg = f"invariant {invariant!r} violated at epoch {epoch}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
