"""Building a tiny network by hand: register a node, deploy, run epochs."""
# %%
from fractions import Fraction

from icnsim import HardwareClass, Network, Requirement
from icnsim.economics import RegionEconomy
from icnsim.enforcement import ChallengeSpec
from icnsim.units import capacity_to_json, parse_capacity

# %% [markdown]
# A network starts from genesis balances. Regions carry a bootstrap budget
# and per-type collateral rates; hardware classes describe what a node offers.

# %%
net = Network.empty({"prov": 100_000, "alice": 10_000, "op1": 5_000, "op2": 5_000, "op3": 5_000}, seed=1)
net.add_region(RegionEconomy("EU", parse_capacity({"Storage": 200}), bootstrap_end=3,
                             bootstrap_emission_per_epoch=100, per_unit_collateral_rates=parse_capacity({"Storage": 2})))
net.registry.add_class(HardwareClass("disk", parse_capacity({"Storage": 100}), {"throughput": 1000},
                                     ["disk-throughput"]))
net.enforcement.register_challenge_spec(
    ChallengeSpec("disk-throughput", "disk", ("throughput",), {"throughput": Fraction(4, 5)}))
for i in (1, 2, 3):
    net.enforcement.register_hypernode(f"hn{i}", f"op{i}")
    net.ledger.stake(f"op{i}", f"hn{i}", 1_000)

# %% [markdown]
# A provider registers a node, locks the minimum collateral and activates it.

# %%
reg = net.registry
reg.register_node("prov", "disk", "EU", parse_capacity({"Storage": 100}), "7/10", 3, 50, 50, "n1")
net.ledger.lock_collateral("prov", "n1", reg.min_collateral("n1"), 50)
reg.activate("n1")
print("capability map:", capacity_to_json(reg.capability_map("EU")))

# %%
inst = net.composer.deploy("alice", [Requirement.make("Storage", 40)], duration=5, instance_id="web")
print("fee per epoch:", inst.epoch_fee(), "on", inst.nodes())

# %% [markdown]
# Each epoch bills instances, runs challenges, settles rewards and advances
# the clock. The first three epochs also pay bootstrap emission.

# %%
for _ in range(4):
    net.begin_epoch()
    outcome = net.challenge_phase()
    settlement = net.settle(outcome.failed)
    net.end_epoch()
    for s in settlement.statements:
        print(f"epoch {s.epoch} {s.source:<10} gross {s.gross:>4} provider {s.provider_cut}")

# %%
print("conservation residual:", net.ledger.conservation_residual())
