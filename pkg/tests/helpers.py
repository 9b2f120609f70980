"""Builders shared by the test modules."""
from fractions import Fraction

from icnsim import HardwareClass, Ledger, Region, Registry
from icnsim.economics import RegionEconomy
from icnsim.enforcement import ChallengeSpec
from icnsim.network import Network
from icnsim.units import parse_capacity

RATES = {"Storage": 1, "Compute": 10}


def disk_class(size=100):
    return HardwareClass("disk", parse_capacity({"Storage": size}), {"throughput": 1000, "latency_inv": 500},
                         ["disk-throughput"])


def cpu_class():
    return HardwareClass("cpu", parse_capacity({"Compute": 8, "Memory": 32}), {"flops": 2000}, ["cpu-flops"])


def make_registry(balances=None, rates=RATES):
    ledger = Ledger(balances or {"prov": 100_000, "alice": 100_000, "bob": 100_000})
    reg = Registry(ledger, [Region("EU", parse_capacity(rates)), Region("US", parse_capacity(rates))],
                   [disk_class(), cpu_class()])
    return ledger, reg


def add_node(reg, node_id, region="EU", *, cls="disk", mult=1, price=1, share="1", commitment_end=1000,
             max_booking=1000, provider="prov", activate=True):
    template = reg.classes[cls].capacity_template
    cap = {t: q * mult for t, q in template.items()}
    reg.register_node(provider, cls, region, cap, share, price, max_booking, commitment_end, node_id)
    need = reg.min_collateral(node_id)
    if activate:
        if need:
            reg.ledger.lock_collateral(provider, node_id, need, commitment_end)
        reg.activate(node_id)
    return node_id


def small_network(seed=1, hypernodes=3, replication=3, noise=Fraction(0), emission=0, bootstrap_end=0):
    """Network with two regions, the disk class, one spec and staked hypernodes."""
    balances = {"prov": 1_000_000, "alice": 100_000, "bob": 100_000, "staker": 100_000}
    balances.update({f"op{i}": 100_000 for i in range(hypernodes)})
    net = Network.empty(balances, seed=seed, replication=replication, noise_amplitude=noise)
    for r in ("EU", "US"):
        net.add_region(RegionEconomy(r, parse_capacity({"Storage": 100}), bootstrap_end, emission,
                                     parse_capacity(RATES)))
    net.registry.add_class(disk_class())
    net.enforcement.register_challenge_spec(
        ChallengeSpec("disk-throughput", "disk", ("throughput",), {"throughput": Fraction(4, 5)}))
    for i in range(hypernodes):
        net.enforcement.register_hypernode(f"hn{i}", f"op{i}")
        net.ledger.stake(f"op{i}", f"hn{i}", 1000)
    return net


def step_epoch(net):
    """One full epoch in simulator order; returns (challenge outcome, settlement)."""
    net.begin_epoch()
    ch = net.challenge_phase()
    st = net.settle(ch.failed)
    net.end_epoch()
    return ch, st
