"""Deterministic simulator of a decentralized cloud protocol.

The protocol state is split across a token :class:`Ledger`, a hardware
:class:`Registry`, a resource :class:`Composer`, challenge-based
:class:`Enforcement` and regional :class:`Economics`; :class:`Network` wires
them together and :func:`run` drives a scenario through the epoch loop.
"""
from .composition import Composer, Elastic, Instance, InstanceBlueprint, Requirement, Weights
from .economics import ACCESS_FEE, BOOTSTRAP, Economics, RegionEconomy, RewardStatement, split_reward
from .enforcement import ChallengeSpec, Enforcement, PerformanceReport, fault_severity, median
from .errors import InvariantViolation, ProtocolError, ScenarioInvalid
from .ledger import Ledger, NftPass
from .merkle import MerkleProof, MerkleTree
from .network import Network
from .registry import HardwareClass, NodeStatus, Region, Registry
from .scenario import bundled, random_scenario, validate
from .simulator import RunResult, run
from .units import ResourceType

__version__ = "0.1.0"
