import copy
import json

import pytest

from icnsim import scenario


@pytest.fixture
def ref():
    return scenario.bundled()


def test_bundled_reference_is_valid(ref):
    assert scenario.validate(ref) == []


def test_random_scenarios_are_valid():
    for seed in range(5):
        assert scenario.validate(scenario.random_scenario(seed, epochs=60, n_nodes=8, n_deploys=10)) == []


def test_unknown_node_reference_points_at_the_field(ref):
    doc = copy.deepcopy(ref)
    i = next(i for i, e in enumerate(doc["events"]) if e["action"] == "activate")
    doc["events"][i]["args"]["node"] = "ghost"
    diags = scenario.validate(doc)
    assert diags == [(f"/events/{i}/args/node", "unknown node 'ghost'")]


def test_out_of_order_events_name_both_indices(ref):
    doc = copy.deepcopy(ref)
    n = len(doc["events"])
    doc["events"].append({"epoch": 0, "action": "transfer", "args": {"from": "alice", "to": "bob", "amount": 1}})
    (diag,) = scenario.validate(doc)
    assert diag[0] == f"/events/{n}/epoch"
    assert f"event {n}" in diag[1] and f"event {n - 1}" in diag[1]


def test_reference_must_be_defined_earlier(ref):
    doc = copy.deepcopy(ref)
    doc["events"].insert(0, {"epoch": 0, "action": "activate", "args": {"node": "eu-s1"}})
    paths = [p for p, _ in scenario.validate(doc)]
    assert paths == ["/events/0/args/node"]


def test_schema_errors_are_reported_by_path(ref):
    doc = copy.deepcopy(ref)
    del doc["seed"]
    doc["regions"][0]["bootstrap_end"] = -1
    doc["hardware_classes"][1]["challenge_set"] = ["store-latency"]
    doc["events"][0]["args"]["rewards_share"] = "3/2"
    last = len(doc["events"]) - 1
    doc["events"][last]["action"] = "explode"
    assert scenario.validate(doc) == [
        ("/seed", "missing required field"),
        ("/regions/0/bootstrap_end", "must be >= 0, got -1"),
        ("/hardware_classes/1/challenge_set/0", "challenge kind 'store-latency' is not registered for class 'compute'"),
        ("/events/0/args/rewards_share", "'3/2' above allowed range"),
        (f"/events/{last}/action", "unknown action 'explode'"),
    ]


def test_deploy_needs_exactly_one_spec(ref):
    doc = copy.deepcopy(ref)
    ev = next(e for e in doc["events"] if e["action"] == "deploy" and "blueprint" in e["args"])
    ev["args"]["requirements"] = [{"type": "Storage", "quantity": "1"}]
    assert any("exactly one" in m for _, m in scenario.validate(doc))


def test_not_an_object():
    assert scenario.validate([]) == [("", "expected an object")]


def test_validate_file(tmp_path, ref):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(ref))
    assert scenario.validate_file(path) == []
    path.write_text("{not json")
    with pytest.raises(json.JSONDecodeError):
        scenario.validate_file(path)
