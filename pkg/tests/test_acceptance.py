"""The nine acceptance criteria, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""
import functools
import random
import sys
import time
from collections import defaultdict
from fractions import Fraction

import pytest

from icnsim import Composer, Elastic, InstanceBlueprint, Ledger, Network, Requirement, Weights, errors, run, scenario
from icnsim.cli import main as cli_main
from icnsim.economics import ACCESS_FEE, BOOTSTRAP
from icnsim.enforcement import fault_severity
from icnsim.simulator import read_metrics
from icnsim.units import STORAGE

import oracles
from helpers import add_node, make_registry, small_network, step_epoch

RESULTS = {}


def criterion(n, title):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS[n] = f"criterion {n} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                print(RESULTS[n])
                raise
            RESULTS[n] = f"criterion {n} PASS  {title}" + (f" ({detail})" if detail else "")
            print(RESULTS[n])
        return wrapper
    return deco


def identity_residual(state):
    """Supply identity recomputed from a raw snapshot, independent of the ledger's own accounting."""
    led = state["ledger"]
    total = sum(int(v) for v in led["accounts"].values())
    total += sum(int(l["amount"]) for l in led["locks"].values())
    total += sum(int(s["amount"]) for s in led["stakes"].values())
    total += sum(int(p["sink_value"]) for p in led["nfts"].values())
    return total + int(led["burned_total"]) - int(led["emitted_total"]) - int(led["genesis_supply"])


# 1 -------------------------------------------------------------------------

@criterion(1, "conservation over a randomized 200-epoch scenario")
def test_criterion_1_conservation():
    doc = scenario.random_scenario(2024, epochs=200)
    actions = [e["action"] for e in doc["events"]]
    assert actions.count("register_node") >= 20
    assert actions.count("deploy") >= 50
    assert actions.count("inject_fault") >= 10
    start = time.perf_counter()
    res = run(doc)
    elapsed = time.perf_counter() - start
    assert res.exit_status == 0, res.violation
    assert len(res.frames) == 200
    assert all(f.conservation == "ok" for f in res.frames)
    assert sum(f.faults for f in res.frames) >= 1
    assert identity_residual(res.final_state) == 0
    assert elapsed < 10, f"{elapsed:.2f}s"
    return f"residual 0, {elapsed:.2f}s"


# 2 -------------------------------------------------------------------------

def independent_allocation_check(reg, comp):
    used = defaultdict(int)
    for inst in comp.instances.values():
        for u in inst.allocations:
            used[(u.node, u.type)] += u.quantity
            loc = inst.requirements[u.requirement].locality
            assert loc is None or u.region in loc, f"{inst.id} placed in {u.region} outside {sorted(loc)}"
            assert reg.nodes[u.node].region == u.region
    for (node, rtype), q in used.items():
        assert q <= reg.nodes[node].capacity.get(rtype, 0), f"{node}/{rtype}: {q} allocated"
    for node, per_type in reg.allocated.items():
        for rtype, q in per_type.items():
            assert q == used.get((node, rtype), 0), f"registry and instances disagree on {node}/{rtype}"


@criterion(2, "no double allocation across a 10,000-operation random walk")
def test_criterion_2_random_walk():
    rng = random.Random(42)
    ledger, reg = make_registry({"prov": 10**9, "alice": 10**9, "bob": 10**9})
    comp = Composer(reg, ledger, Weights())
    for i in range(8):
        add_node(reg, f"d{i}", "EU" if i % 2 else "US", mult=1 + i % 3, price=1 + i % 4)
    for i in range(4):
        add_node(reg, f"c{i}", "EU" if i % 2 else "US", cls="cpu", mult=1 + i % 2, price=2 + i)
    comp.add_blueprint(InstanceBlueprint("mix", (Requirement.make("Storage", 40, ["EU"]),
                                                 Requirement.make("Compute", 4)),
                                         Elastic(Fraction(1, 2), Fraction(3))))
    localities = [None, ["EU"], ["US"], ["EU", "US"]]
    counts = defaultdict(int)
    for step in range(10_000):
        op = rng.choice(["deploy", "deploy", "scale", "release", "extend", "tick", "price"])
        try:
            if op == "deploy":
                if rng.random() < 0.3:
                    comp.deploy(rng.choice(["alice", "bob"]), "mix", rng.randint(1, 12))
                else:
                    rtype = rng.choice(["Storage", "Compute", "Memory"])
                    q = rng.randint(1, {"Storage": 250, "Compute": 20, "Memory": 80}[rtype])
                    comp.deploy(rng.choice(["alice", "bob"]),
                                [Requirement.make(rtype, q, rng.choice(localities))], rng.randint(1, 12))
            elif op == "tick":
                ledger.epoch += 1
                comp.bill_epoch()
                comp.take_pending_fees()
            elif op == "price":
                node = rng.choice(sorted(reg.nodes))
                reg.nodes[node].reservation_price = rng.randint(0, 9)
            elif comp.instances:
                iid = rng.choice(sorted(comp.instances))
                if op == "scale":
                    comp.scale(iid, rng.choice(["Storage", "Compute"]), rng.randint(-40, 40) or 1)
                elif op == "release":
                    comp.release(iid)
                else:
                    comp.extend_reservation(iid, rng.randint(1, 5))
            counts[op] += 1
        except errors.ProtocolError:
            counts["rejected"] += 1
        assert comp.check_no_double_allocation() == [], f"step {step}"
        assert comp.check_locality() == [], f"step {step}"
        independent_allocation_check(reg, comp)
    assert counts["deploy"] > 1000 and counts["scale"] > 100 and counts["release"] > 100
    return f"{sum(counts.values())} ops, {counts['rejected']} rejected"


# 3 -------------------------------------------------------------------------

NOMINAL = {"throughput": 1000, "latency_inv": 500}


def oracle_kpi(medians):
    if not medians:
        return Fraction(0)
    return sum(min(Fraction(1), Fraction(medians[k], n)) for k, n in NOMINAL.items()) / len(NOMINAL)


def allocation_case(rng):
    n = rng.randint(1, 6)
    specs = [(rng.randint(1, 4), rng.randint(0, 9), rng.randint(0, 99)) for _ in range(n)]
    kpis = {f"n{i}": {"throughput": rng.randint(0, 1200), "latency_inv": rng.randint(0, 600)}
            for i in range(n) if rng.random() < 0.7}
    weights = Weights(*(Fraction(rng.randint(0, 4)) for _ in range(3)))
    if not any((weights.perf, weights.price, weights.avail)):
        weights = Weights()
    return specs, kpis, weights, rng.randint(1, 420)


def build_pool(specs, kpis, weights):
    ledger, reg = make_registry()
    comp = Composer(reg, ledger, weights, kpis.get)
    for i, (mult, price, used) in enumerate(specs):
        add_node(reg, f"n{i}", mult=mult, price=price)
        if used:
            reg.allocate(f"n{i}", STORAGE, used)
    return comp


@criterion(3, "greedy selection matches exhaustive search on 500 random deploys")
def test_criterion_3_allocation_oracle():
    rng = random.Random(7)
    start = time.perf_counter()
    compared = 0
    for _ in range(500):
        specs, kpis, weights, demand = allocation_case(rng)
        free = {f"n{i}": 100 * m - u for i, (m, _, u) in enumerate(specs)}
        comp = build_pool(specs, kpis, weights)
        req = [Requirement.make("Storage", demand)]
        if sum(free.values()) < demand:
            with pytest.raises(errors.InsufficientCapacity):
                comp.plan(req, 3)
            continue
        plan = comp.plan(req, 3)
        again = build_pool(specs, kpis, weights).plan(req, 3)
        assert [(u.node, u.quantity) for u in plan.units] == [(u.node, u.quantity) for u in again.units]
        assert sum(u.quantity for u in plan.units) == demand
        assert all(0 < u.quantity <= free[u.node] for u in plan.units)
        if demand <= max(free.values()):
            pmin = min(p for _, p, _ in specs)
            w = (weights.perf, weights.price, weights.avail)
            scores = {f"n{i}": oracles.score(oracle_kpi(kpis.get(f"n{i}")), p, pmin, free[f"n{i}"], 100 * m, w)
                      for i, (m, p, _) in enumerate(specs)}
            greedy = sum(u.quantity * scores[u.node] for u in plan.units)
            assert greedy == oracles.best_fill({k: v for k, v in free.items() if v}, scores, demand)
            compared += 1
    elapsed = time.perf_counter() - start
    assert compared >= 200
    assert elapsed < 30, f"{elapsed:.2f}s"
    return f"{compared} compared exhaustively, {elapsed:.2f}s"


# 4 -------------------------------------------------------------------------

@criterion(4, "every single-byte mutation of 100 reports fails verification")
def test_criterion_4_proof_binding():
    net = small_network(seed=5, hypernodes=5, replication=3, noise=Fraction(1, 20))
    rng = random.Random(5)
    for i in range(8):
        add_node(net.registry, f"n{i}", "EU" if i % 2 else "US", mult=1 + i % 3)
    samples = []
    for epoch in range(6):
        if epoch in (2, 4):
            net.enforcement.inject_fault(f"n{epoch}", Fraction(rng.randint(1, 9), 10), 1)
        ch, _ = step_epoch(net)
        samples += [(r.epoch, r.subject, r.challenger) for r in ch.reports]
    chosen = rng.sample(samples, 100)
    enf = net.enforcement
    mutations = 0
    for key in chosen:
        report, proof, anchor = enf.proof_for(*key)
        data = report.canonical()
        assert enf.verify_report(data, proof, anchor) is True
        for i in range(len(data)):
            for value in range(256):
                if value == data[i]:
                    continue
                mutated = data[:i] + bytes([value]) + data[i + 1:]
                assert enf.verify_report(mutated, proof, anchor) is False, (key, i, value)
                mutations += 1
    return f"{mutations} mutations rejected"


# 5 -------------------------------------------------------------------------

def random_positions(rng):
    ledger = Ledger({"prov": 10**9, "s1": 10**9, "s2": 10**9, "owner": 10**9})
    for _ in range(rng.randint(1, 4)):
        ledger.lock_collateral("prov", "node", rng.randint(1, 10**6), 100)
    for who in ("s1", "s2")[:rng.randint(0, 2)]:
        ledger.stake(who, "node", rng.randint(1, 10**6))
    if rng.random() < 0.5:
        p = ledger.mint_nft("owner", rng.randint(1, 10**5), rng.randint(1, 200))
        ledger.stake_nft(p.id, "node")
    return ledger.to_dict()


def random_fraction(rng, den=10**6):
    return Fraction(rng.randint(0, den), den)


@criterion(5, "slash zero case, monotonicity and severity bounds")
def test_criterion_5_slash_proportionality():
    rng = random.Random(11)
    for _ in range(300):
        snap = random_positions(rng)
        zero = Ledger.from_dict(snap)
        out = zero.slash("node", 0)
        assert out.total == 0 and zero.burned_total == 0 and zero.to_dict()["locks"] == snap["locks"]
        s1, s2 = sorted({random_fraction(rng), random_fraction(rng)})
        if s1 == s2:
            continue
        a, b = Ledger.from_dict(snap), Ledger.from_dict(snap)
        burned1, burned2 = a.slash("node", s1).total, b.slash("node", s2).total
        assert burned1 <= burned2
        amounts = [int(l["amount"]) for l in snap["locks"].values()] + [int(s["amount"]) for s in snap["stakes"].values()]
        assert (burned1, burned2) == (oracles.slash_burn(amounts, s1), oracles.slash_burn(amounts, s2))
    for _ in range(2000):
        kpis = rng.sample(["a", "b", "c", "d"], rng.randint(1, 4))
        nominal = {k: rng.randint(0, 10**6) for k in kpis}
        medians = {k: rng.randint(0, 2 * 10**6) for k in kpis}
        thresholds = {k: random_fraction(rng, 1000) for k in kpis}
        s = fault_severity(medians, nominal, thresholds)
        assert 0 <= s <= 1
    net = small_network(seed=3, noise=Fraction(1, 10))
    for i in range(6):
        add_node(net.registry, f"n{i}")
    seen = 0
    for epoch in range(40):
        for i in range(6):
            if rng.random() < 0.2:
                net.enforcement.inject_fault(f"n{i}", Fraction(rng.randint(0, 10), 10), rng.randint(1, 3))
        ch, _ = step_epoch(net)
        for f in ch.faults:
            assert 0 < f.severity <= 1
            seen += 1
        for agg in ch.aggregates:
            assert 0 <= agg.severity <= 1
    assert seen > 0
    return f"{seen} simulated faults in range"


# 6 -------------------------------------------------------------------------

def nft_run(initial, timelock, slash_at=None, severity=None):
    """Stake a fresh pass and advance until it is exhausted; returns (exhaustion epoch, payouts, ledger)."""
    ledger = Ledger({"owner": initial, "prov": 10})
    p = ledger.mint_nft("owner", initial, timelock)
    ledger.stake_nft(p.id, "node")
    payouts = []
    while p.sink_value:
        if ledger.epoch == slash_at:
            ledger.slash("node", severity)
        payouts.append(ledger.advance_epoch().decay_payouts.get(p.id, 0))
        assert ledger.conservation_residual() == 0
    return ledger.epoch, payouts, ledger, p


@criterion(6, "NFT pays exactly initial_sink and a slash hastens exhaustion")
def test_criterion_6_nft_lifecycle():
    rng = random.Random(13)
    cases = [(1000, 100), (1050, 100), (5, 10), (1, 1), (7, 3)]
    cases += [(rng.randint(1, 5000), rng.randint(1, 300)) for _ in range(200)]
    for initial, timelock in cases:
        end, payouts, ledger, p = nft_run(initial, timelock)
        assert payouts == oracles.nft_unslashed(initial, timelock)
        assert sum(payouts) == initial and ledger.balance("owner") == initial
        assert end == min(timelock, initial) if initial < timelock else end == timelock
        assert p.security == 0 and ledger.security("node") == 0
        for _ in range(5):
            ledger.advance_epoch()
        assert p.sink_value == 0 and ledger.balance("owner") == initial
        # a slash while at least two decay epochs remain
        if end < 2:
            continue
        for severity in (Fraction(1, 10**6), Fraction(1, 1000), random_fraction(rng) or Fraction(1, 2), Fraction(1)):
            slash_at = rng.randint(0, end - 2)
            slashed_end, slashed_payouts, _, _ = nft_run(initial, timelock, slash_at, severity)
            assert sum(slashed_payouts) == initial
            assert slashed_end < end, (initial, timelock, slash_at, severity)
    return f"{len(cases)} pass shapes"


# 7 -------------------------------------------------------------------------

@criterion(7, "regime switch at bootstrap_end 50, read from metrics.csv")
def test_criterion_7_regime_switch(tmp_path):
    doc = scenario.bundled()
    assert {r["bootstrap_end"] for r in doc["regions"]} == {50}
    res = run(doc, out_dir=tmp_path)
    assert res.exit_status == 0
    _, rewards = read_metrics(tmp_path / "metrics.csv")
    by_epoch = defaultdict(list)
    for r in rewards:
        by_epoch[int(r["epoch"])].append(r)
    assert not [r for r in rewards if r["source"] == BOOTSTRAP and int(r["epoch"]) >= 50]
    assert any(r["source"] == BOOTSTRAP for r in by_epoch[49])

    def without_source(rows, source):
        return sorted((r["node"], r["gross"], r["provider_cut"], r["staker_total"]) for r in rows
                      if r["source"] != source)

    assert without_source(by_epoch[49], BOOTSTRAP) == without_source(by_epoch[50], BOOTSTRAP)
    assert {r["source"] for r in by_epoch[50]} == {ACCESS_FEE}
    return f"{len(by_epoch[49])} rows at 49, {len(by_epoch[50])} at 50"


# 8 -------------------------------------------------------------------------

@criterion(8, "price fixing holds across a mid-booking price increase")
def test_criterion_8_price_fixing():
    rng = random.Random(17)
    for _ in range(25):
        net = small_network(seed=rng.randint(0, 99))
        add_node(net.registry, "n1", mult=3, price=rng.randint(1, 5))
        spec = [Requirement.make("Storage", rng.randint(1, 150))]
        duration = rng.randint(4, 20)
        bump_at = rng.randint(1, duration - 2)
        quote_before = net.economics.quote_price(spec, "EU")
        before = net.ledger.balance("alice")
        inst = net.composer.deploy("alice", spec, duration, "held")
        fee = inst.epoch_fee()
        assert fee == quote_before
        charges = [before - net.ledger.balance("alice")]
        quote_after = None
        for epoch in range(1, duration + 3):
            if epoch == bump_at:
                net.registry.nodes["n1"].reservation_price += rng.randint(1, 4)
                quote_after = net.economics.quote_price(spec, "EU")
            before = net.ledger.balance("alice")
            step_epoch(net)
            charges.append(before - net.ledger.balance("alice"))
        # the deploy pays for its own epoch; every later billed epoch charges the same fee
        assert [c for c in charges if c] == [fee] * duration
        assert set(charges) <= {0, fee}
        assert quote_after > quote_before
    # the bundled scenario raises eu-s1 and eu-s2 prices at epoch 30
    early, late = run(scenario.bundled(), epochs=30), run(scenario.bundled(), epochs=40)
    held = [r.network.composer.instances["alice-web"] for r in (early, late)]
    assert held[0].fixed_unit_prices == held[1].fixed_unit_prices
    assert held[0].epoch_fee() == held[1].epoch_fee()
    quotes = [r.network.economics.quote_price("eu-store", "EU") for r in (early, late)]
    assert quotes[1] > quotes[0]
    return f"alice-web fee {held[1].epoch_fee()}, quote {quotes[0]} -> {quotes[1]}"


# 9 -------------------------------------------------------------------------

@criterion(9, "bundled scenario is byte-for-byte deterministic")
def test_criterion_9_determinism(tmp_path):
    timings = []
    for name, seed in (("a", None), ("b", None), ("c", "8")):
        argv = ["simulate", "--scenario", "bundled:reference", "--out", str(tmp_path / name)]
        if seed:
            argv += ["--seed", seed]
        start = time.perf_counter()
        assert cli_main(argv) == 0
        timings.append(time.perf_counter() - start)
    a, b, c = (tmp_path / n for n in "abc")
    for f in ("metrics.csv", "final_state.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    assert (a / "metrics.csv").read_bytes() != (c / "metrics.csv").read_bytes()
    assert max(timings) < 5, timings
    return f"slowest run {max(timings):.2f}s"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
