from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from icnsim import HardwareClass, Requirement, errors
from icnsim.economics import ACCESS_FEE, BOOTSTRAP, Economics, RegionEconomy, bootstrap_payouts, split_reward
from icnsim.units import parse_capacity

import oracles
from helpers import add_node, small_network, step_epoch


def test_split_with_one_staker():
    # floor(0.7 * 100) = 70 to the provider, remainder 30 to the staker
    assert oracles.split(100, "7/10", {"s": 5}) == (70, {"s": 30})
    assert split_reward(100, Fraction(7, 10), {"s": 5}) == (70, {"s": 30})


def test_zero_stake_provider_takes_all():
    assert split_reward(100, Fraction(7, 10), {}) == (100, {})


def test_rounding_dust_goes_to_provider():
    provider, cuts = split_reward(10, Fraction(1, 2), {"a": 1, "b": 1, "c": 1})
    assert cuts == {"a": 1, "b": 1, "c": 1} and provider == 7


@given(st.integers(0, 10**12), st.fractions(0, 1),
       st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 10**9), max_size=6))
def test_split_is_exact(gross, share, weights):
    provider, cuts = split_reward(gross, share, weights)
    assert provider + sum(cuts.values()) == gross
    assert provider >= int(share * gross) and all(c >= 0 for c in cuts.values())
    o_provider, o_cuts = oracles.split(gross, f"{share.numerator}/{share.denominator}",
                                       {k: w for k, w in weights.items() if w})
    assert provider == o_provider
    assert cuts == {k: v for k, v in o_cuts.items() if v}


def test_bootstrap_caps_at_target():
    # credited 80 * 100/160 = 50 each, earning 160 * 50 / 100 = 80
    assert oracles.bootstrap_single_type(160, 100, {"a": 80, "b": 80}) == {"a": 80, "b": 80}
    net = small_network()
    net.registry.add_class(HardwareClass("d80", parse_capacity({"Storage": 80}), {"throughput": 1000},
                                         ["disk-throughput"]))
    add_node(net.registry, "a", cls="d80")
    add_node(net.registry, "b", cls="d80")
    econ = RegionEconomy("EU", parse_capacity({"Storage": 100}), 10, 160)
    assert bootstrap_payouts(econ, net.registry.active_nodes("EU")) == {"a": 80, "b": 80}


def test_bootstrap_below_target_pays_per_unit():
    net = small_network()
    add_node(net.registry, "a")
    econ = RegionEconomy("EU", parse_capacity({"Storage": 400}), 10, 400)
    assert bootstrap_payouts(econ, net.registry.active_nodes("EU")) == {"a": 100}


def test_emission_split_across_target_types():
    net = small_network()
    add_node(net.registry, "a")
    econ = RegionEconomy("EU", parse_capacity({"Storage": 100, "Compute": 8}), 10, 301)
    # 151 to Storage (the remainder goes to the first type by name), 150 to Compute
    assert bootstrap_payouts(econ, net.registry.active_nodes("EU")) == {"a": 150}


def test_regime_switch_at_bootstrap_end():
    net = small_network(emission=100, bootstrap_end=2)
    add_node(net.registry, "n1")
    net.composer.deploy("alice", [Requirement.make("Storage", 10)], 10)
    sources = []
    for _ in range(4):
        _, st = step_epoch(net)
        sources.append(sorted({s.source for s in st.statements}))
    assert sources == [[ACCESS_FEE, BOOTSTRAP]] * 2 + [[ACCESS_FEE]] * 2


def test_failed_node_fees_are_burned():
    net = small_network()
    add_node(net.registry, "n1", price=4)
    net.composer.deploy("alice", [Requirement.make("Storage", 10)], 10)
    burned = net.ledger.burned_total
    st = net.settle(["n1"])
    assert st.statements == [] and st.burned_fees == 40 and st.charged == 40
    assert net.ledger.burned_total == burned + 40
    assert net.ledger.conservation_residual() == 0


def test_stakers_and_pass_share_fees():
    net = small_network()
    add_node(net.registry, "n1", price=10, share="1/2")
    net.ledger.stake("staker", "n1", 300)
    p = net.ledger.mint_nft("bob", 100, 50)
    net.ledger.stake_nft(p.id, "n1")
    net.composer.deploy("alice", [Requirement.make("Storage", 10)], 10)
    st = net.settle()
    (stmt,) = st.statements
    # rest 50 by weight 100:300 -> 12 and 37; the unit of dust goes to the provider
    assert oracles.split(100, "1/2", {"bob": 100, "staker": 300}) == (51, {"bob": 12, "staker": 37})
    assert (stmt.gross, stmt.provider_cut, dict(stmt.staker_cuts)) == (100, 51, {"bob": 12, "staker": 37})
    assert stmt.provider_cut + stmt.staker_total == stmt.gross
    assert st.charged == st.total(ACCESS_FEE) + st.burned_fees


def test_settlement_must_follow_the_clock():
    net = small_network()
    net.settle()
    with pytest.raises(errors.SettlementOutOfOrder):
        net.settle()
    net.end_epoch()
    with pytest.raises(errors.SettlementOutOfOrder):
        net.economics.settle_epoch(5)


def test_quote_is_stable_then_rises_after_price_change():
    net = small_network()
    add_node(net.registry, "n1", price=2)
    spec = [Requirement.make("Storage", 30)]
    q = net.economics.quote_price(spec, "EU")
    inst = net.composer.deploy("alice", spec, 20)
    assert inst.epoch_fee() == q == 60
    net.registry.nodes["n1"].reservation_price = 3
    assert net.economics.quote_price(spec, "EU") == 90
    with pytest.raises(errors.InsufficientCapacity):
        net.economics.quote_price(spec, "US")


def test_snapshot_round_trip():
    net = small_network(emission=50, bootstrap_end=5)
    add_node(net.registry, "n1")
    step_epoch(net)
    again = Economics.from_dict(net.economics.to_dict(), net.ledger, net.registry, net.composer)
    assert again.to_dict() == net.economics.to_dict()
    assert again.last_settled == 0
