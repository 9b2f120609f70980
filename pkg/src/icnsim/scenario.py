"""Scenario documents: loading, validation with JSON-pointer diagnostics, random generation.

A scenario is a JSON object::

    {
      "seed": 7, "epochs": 120,
      "genesis": {"balances": {"alice": "100000"}},
      "regions": [{"id": "EU", "target_capacity": {"Storage": "400"}, "bootstrap_end": 50,
                   "bootstrap_emission_per_epoch": "400", "collateral_rates": {"Storage": "2"}}],
      "hardware_classes": [...], "challenge_specs": [...], "services": [...],
      "blueprints": [...], "hypernodes": [...],
      "replication_factor": 3, "weights": {"perf": "1/3", "price": "1/3", "avail": "1/3"},
      "noise_amplitude": "1/50", "retention_epochs": 8, "misbehavior_slash_rate": "1/10",
      "events": [{"epoch": 0, "action": "register_node", "args": {...}}, ...]
    }

Integers may be JSON numbers or decimal strings; rationals may be "3/4",
"0.75" or numbers.
"""
from __future__ import annotations

import json
import random
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Set, Tuple

from .units import ResourceType, parse_fraction, parse_int

Diagnostic = Tuple[str, str]

ACTIONS: Dict[str, Dict[str, Tuple[str, bool]]] = {
    # name -> {arg: (kind, required)}
    "register_node": {
        "id": ("new_node", True), "provider": ("account", True), "class": ("class", True),
        "region": ("region", True), "rewards_share": ("share", True), "reservation_price": ("int", True),
        "max_booking_duration": ("posint", True), "commitment_end": ("posint", True),
        "capacity": ("capacity", False), "collateral": ("int", False), "profile": ("kpimap", False),
    },
    "lock_collateral": {"owner": ("account", True), "node": ("node", True), "amount": ("posint", True),
                        "until": ("posint", False)},
    "activate": {"node": ("node", True)},
    "deploy": {
        "id": ("new_instance", True), "owner": ("account", True), "duration": ("posint", True),
        "blueprint": ("blueprint", False), "requirements": ("requirements", False),
        "elastic": ("elastic", False), "services": ("services", False),
    },
    "scale": {"instance": ("instance", True), "type": ("rtype", True), "delta": ("sint", True)},
    "release": {"instance": ("instance", True)},
    "extend": {"instance": ("instance", True), "extra": ("posint", True), "declines": ("node_list", False)},
    "stake": {"staker": ("account", True), "node": ("stake_target", True), "amount": ("posint", True)},
    "mint_nft": {"id": ("new_nft", True), "owner": ("account", True), "initial_sink": ("posint", True),
                 "timelock_epochs": ("posint", True)},
    "stake_nft": {"pass": ("nft", True), "node": ("stake_target", True)},
    "inject_fault": {"node": ("subject", True), "multiplier": ("unit", True), "duration": ("posint", True)},
    "retire": {"node": ("node", True)},
    "set_price": {"node": ("node", True), "reservation_price": ("int", True)},
    "release_collateral": {"node": ("node", True)},
    "corrupt_hypernode": {"hypernode": ("hypernode", True), "multiplier": ("frac", True),
                          "duration": ("posint", True)},
    "transfer": {"from": ("account", True), "to": ("account", True), "amount": ("int", True)},
}


def bundled(name: str = "reference") -> dict:
    """Load a scenario shipped with the package."""
    text = resources.files("icnsim").joinpath("scenarios", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def load(path) -> dict:
    """Parse a scenario file; raises ``json.JSONDecodeError`` on malformed JSON."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def validate_file(path) -> List[Diagnostic]:
    return validate(load(path))


class _Checker:
    def __init__(self):
        self.diags: List[Diagnostic] = []

    def err(self, path: str, msg: str) -> None:
        self.diags.append((path, msg))

    def int_(self, path: str, v, *, minimum: Optional[int] = 0) -> Optional[int]:
        try:
            n = parse_int(v)
        except (ValueError, TypeError):
            self.err(path, f"expected integer, got {v!r}")
            return None
        if minimum is not None and n < minimum:
            self.err(path, f"must be >= {minimum}, got {n}")
            return None
        return n

    def frac(self, path: str, v, lo=None, hi=None, lo_open=False):
        try:
            f = parse_fraction(v)
        except (ValueError, TypeError, ZeroDivisionError):
            self.err(path, f"expected rational, got {v!r}")
            return None
        if lo is not None and (f < lo or (lo_open and f == lo)):
            self.err(path, f"{v!r} below allowed range")
        if hi is not None and f > hi:
            self.err(path, f"{v!r} above allowed range")
        return f

    def rtype(self, path: str, v) -> Optional[ResourceType]:
        try:
            return ResourceType.parse(v)
        except ValueError as exc:
            self.err(path, str(exc))
            return None

    def capacity(self, path: str, v, need_positive=True) -> dict:
        if not isinstance(v, Mapping) or not v:
            self.err(path, "expected a non-empty resource map")
            return {}
        out = {}
        for k, q in v.items():
            t = self.rtype(f"{path}/{k}", k)
            n = self.int_(f"{path}/{k}", q)
            if t is not None and n is not None:
                out[t] = n
        if need_positive and out and not any(out.values()):
            self.err(path, "at least one quantity must be positive")
        return out

    def kpimap(self, path: str, v) -> dict:
        if not isinstance(v, Mapping) or not v:
            self.err(path, "expected a non-empty KPI map")
            return {}
        return {k: self.int_(f"{path}/{k}", q) for k, q in v.items()}

    def obj(self, path: str, v, required=(), optional=()) -> bool:
        if not isinstance(v, Mapping):
            self.err(path, "expected an object")
            return False
        for k in required:
            if k not in v:
                self.err(f"{path}/{k}", "missing required field")
        for k in v:
            if k not in required and k not in optional:
                self.err(f"{path}/{k}", "unknown field")
        return True


def validate(doc) -> List[Diagnostic]:
    """Return diagnostics ``(json_pointer, message)``; empty iff the scenario is valid."""
    c = _Checker()
    top_required = ("seed", "epochs", "genesis", "regions", "hardware_classes", "challenge_specs",
                    "hypernodes", "replication_factor", "events")
    top_optional = ("name", "description", "services", "blueprints", "weights", "noise_amplitude",
                    "retention_epochs", "misbehavior_slash_rate")
    if not c.obj("", doc, top_required, top_optional):
        return c.diags
    if "seed" in doc:
        s = c.int_("/seed", doc["seed"])
        if s is not None and s >= 2**64:
            c.err("/seed", "seed must fit in 64 bits")
    if "epochs" in doc:
        c.int_("/epochs", doc["epochs"], minimum=1)
    c.int_("/replication_factor", doc.get("replication_factor", 1), minimum=1)
    c.int_("/retention_epochs", doc.get("retention_epochs", 16), minimum=1)
    c.frac("/noise_amplitude", doc.get("noise_amplitude", 0), 0, 0.99)
    c.frac("/misbehavior_slash_rate", doc.get("misbehavior_slash_rate", 0), 0, 1)
    weights = doc.get("weights", {})
    if c.obj("/weights", weights, (), ("perf", "price", "avail")):
        for k, v in weights.items():
            c.frac(f"/weights/{k}", v, 0)

    accounts: Set[str] = set()
    genesis = doc.get("genesis", {})
    if c.obj("/genesis", genesis, ("balances",)):
        bal = genesis.get("balances", {})
        if not isinstance(bal, Mapping):
            c.err("/genesis/balances", "expected an object")
        else:
            for a, v in bal.items():
                c.int_(f"/genesis/balances/{a}", v)
                accounts.add(a)

    regions: Set[str] = set()
    for i, r in enumerate(_list(c, doc, "regions")):
        p = f"/regions/{i}"
        if c.obj(p, r, ("id", "target_capacity", "bootstrap_end", "bootstrap_emission_per_epoch"),
                 ("collateral_rates",)):
            _unique(c, p + "/id", r.get("id"), regions)
            c.capacity(p + "/target_capacity", r.get("target_capacity"), need_positive=False)
            c.int_(p + "/bootstrap_end", r.get("bootstrap_end"))
            c.int_(p + "/bootstrap_emission_per_epoch", r.get("bootstrap_emission_per_epoch"))
            if "collateral_rates" in r:
                c.capacity(p + "/collateral_rates", r["collateral_rates"], need_positive=False)

    services: Dict[str, dict] = {}
    for i, s in enumerate(_list(c, doc, "services", required=False)):
        p = f"/services/{i}"
        if c.obj(p, s, ("id", "builder", "bond", "profile")):
            sid = s.get("id")
            if _unique(c, p + "/id", sid, set(services)):
                services[sid] = c.kpimap(p + "/profile", s.get("profile"))
            _ref(c, p + "/builder", s.get("builder"), accounts, "account")
            c.int_(p + "/bond", s.get("bond"), minimum=1)

    classes: Dict[str, dict] = {}
    class_sets: Dict[str, Tuple[str, list]] = {}
    for i, hc in enumerate(_list(c, doc, "hardware_classes")):
        p = f"/hardware_classes/{i}"
        if c.obj(p, hc, ("id", "capacity_template", "performance_profile", "challenge_set")):
            cid = hc.get("id")
            if cid in services:
                c.err(p + "/id", f"{cid!r} collides with a service id")
            if _unique(c, p + "/id", cid, set(classes)):
                classes[cid] = {
                    "template": c.capacity(p + "/capacity_template", hc.get("capacity_template")),
                    "profile": c.kpimap(p + "/performance_profile", hc.get("performance_profile")),
                }
            cs = hc.get("challenge_set")
            if not isinstance(cs, list) or not cs:
                c.err(p + "/challenge_set", "expected a non-empty list of challenge kinds")
            else:
                class_sets[cid] = (p + "/challenge_set", cs)

    kinds: Dict[str, str] = {}
    for i, sp in enumerate(_list(c, doc, "challenge_specs")):
        p = f"/challenge_specs/{i}"
        if not c.obj(p, sp, ("kind", "subject", "kpis", "pass_thresholds")):
            continue
        kind, subj = sp.get("kind"), sp.get("subject")
        _unique(c, p + "/kind", kind, set(kinds))
        if subj in classes:
            profile = classes[subj]["profile"]
        elif subj in services:
            profile = services[subj]
        else:
            c.err(p + "/subject", f"unknown class or service {subj!r}")
            profile = None
        kpis = sp.get("kpis")
        if not isinstance(kpis, list) or not kpis:
            c.err(p + "/kpis", "expected a non-empty list")
            kpis = []
        thr = sp.get("pass_thresholds") or {}
        for j, k in enumerate(kpis):
            if profile is not None and k not in profile:
                c.err(f"{p}/kpis/{j}", f"KPI {k!r} not in the subject's profile")
            if k not in thr:
                c.err(f"{p}/pass_thresholds/{k}", "missing threshold")
        for k, v in thr.items():
            c.frac(f"{p}/pass_thresholds/{k}", v, 0, 1, lo_open=True)
            if k not in kpis:
                c.err(f"{p}/pass_thresholds/{k}", "threshold for a KPI not in the spec")
        if isinstance(kind, str):
            kinds[kind] = subj
    for cid, (p, cs) in class_sets.items():
        for j, k in enumerate(cs):
            if kinds.get(k) != cid:
                c.err(f"{p}/{j}", f"challenge kind {k!r} is not registered for class {cid!r}")

    blueprints: Set[str] = set()
    for i, bp in enumerate(_list(c, doc, "blueprints", required=False)):
        p = f"/blueprints/{i}"
        if c.obj(p, bp, ("id", "requirements"), ("elastic", "services")):
            _unique(c, p + "/id", bp.get("id"), blueprints)
            _requirements(c, p + "/requirements", bp.get("requirements"), regions)
            if "elastic" in bp:
                _elastic(c, p + "/elastic", bp["elastic"])
            for j, s in enumerate(bp.get("services", []) or []):
                _ref(c, f"{p}/services/{j}", s, services, "service")

    hypernodes: Set[str] = set()
    for i, h in enumerate(_list(c, doc, "hypernodes")):
        p = f"/hypernodes/{i}"
        if c.obj(p, h, ("id", "operator"), ("stake", "nft")):
            if h.get("id") in classes or h.get("id") in services:
                c.err(p + "/id", "hypernode id collides with a class or service id")
            _unique(c, p + "/id", h.get("id"), hypernodes)
            _ref(c, p + "/operator", h.get("operator"), accounts, "account")
            if "stake" in h:
                c.int_(p + "/stake", h["stake"])
            if "nft" in h and c.obj(p + "/nft", h["nft"], ("initial_sink", "timelock_epochs")):
                c.int_(p + "/nft/initial_sink", h["nft"].get("initial_sink"), minimum=1)
                c.int_(p + "/nft/timelock_epochs", h["nft"].get("timelock_epochs"), minimum=1)

    ctx = {
        "accounts": accounts, "regions": regions, "classes": set(classes), "blueprints": blueprints,
        "services": set(services), "hypernodes": hypernodes, "nodes": set(), "instances": set(), "nfts": set(),
    }
    events = _list(c, doc, "events")
    last: Optional[Tuple[int, int]] = None
    for i, ev in enumerate(events):
        p = f"/events/{i}"
        if not c.obj(p, ev, ("epoch", "action"), ("args",)):
            continue
        e = c.int_(p + "/epoch", ev.get("epoch"))
        if e is not None:
            if last is not None and e < last[1]:
                c.err(p + "/epoch", f"event {i} (epoch {e}) is out of order: event {last[0]} is at epoch {last[1]}")
            else:
                last = (i, e)
        action = ev.get("action")
        if action not in ACTIONS:
            c.err(p + "/action", f"unknown action {action!r}")
            continue
        _event_args(c, p + "/args", action, ev.get("args", {}), ctx, classes)
    return c.diags


def _list(c: _Checker, doc, key, required=True) -> list:
    v = doc.get(key)
    if v is None:
        if required:
            c.err(f"/{key}", "missing required field")
        return []
    if not isinstance(v, list):
        c.err(f"/{key}", "expected a list")
        return []
    return v


def _unique(c: _Checker, path, value, seen: Set[str]) -> bool:
    if not isinstance(value, str) or not value:
        c.err(path, "expected a non-empty string id")
        return False
    if value in seen:
        c.err(path, f"duplicate id {value!r}")
        return False
    seen.add(value)
    return True


def _ref(c: _Checker, path, value, known, what) -> None:
    if not isinstance(value, str) or value not in known:
        c.err(path, f"unknown {what} {value!r}")


def _requirements(c: _Checker, path, reqs, regions) -> None:
    if not isinstance(reqs, list) or not reqs:
        c.err(path, "expected a non-empty list of requirements")
        return
    for j, r in enumerate(reqs):
        p = f"{path}/{j}"
        if not c.obj(p, r, ("type", "quantity"), ("locality", "min_kpi")):
            continue
        c.rtype(p + "/type", r.get("type"))
        c.int_(p + "/quantity", r.get("quantity"), minimum=1)
        if "locality" in r:
            loc = r["locality"]
            if not isinstance(loc, list) or not loc:
                c.err(p + "/locality", "locality must be a non-empty list of regions")
            else:
                for k, reg in enumerate(loc):
                    _ref(c, f"{p}/locality/{k}", reg, regions, "region")
        if "min_kpi" in r:
            c.kpimap(p + "/min_kpi", r["min_kpi"])


def _elastic(c: _Checker, path, el) -> None:
    if c.obj(path, el, ("min_factor", "max_factor")):
        c.frac(path + "/min_factor", el.get("min_factor"), 0, 1, lo_open=True)
        c.frac(path + "/max_factor", el.get("max_factor"), 1)


def _event_args(c: _Checker, path, action, args, ctx, classes) -> None:
    schema = ACTIONS[action]
    required = [k for k, (_, req) in schema.items() if req]
    if not c.obj(path, args, required, [k for k in schema if k not in required]):
        return
    for key, value in args.items():
        if key not in schema:
            continue
        kind = schema[key][0]
        p = f"{path}/{key}"
        if kind == "account":
            _ref(c, p, value, ctx["accounts"], "account")
        elif kind == "new_node":
            if value in ctx["hypernodes"] or value in ctx["services"]:
                c.err(p, f"{value!r} collides with a hypernode or service id")
            _unique(c, p, value, ctx["nodes"])
        elif kind == "new_instance":
            _unique(c, p, value, ctx["instances"])
        elif kind == "new_nft":
            _unique(c, p, value, ctx["nfts"])
        elif kind == "node":
            _ref(c, p, value, ctx["nodes"], "node")
        elif kind == "stake_target":
            _ref(c, p, value, ctx["nodes"] | ctx["hypernodes"], "node or hypernode")
        elif kind == "subject":
            _ref(c, p, value, ctx["nodes"] | ctx["services"], "node or service")
        elif kind == "hypernode":
            _ref(c, p, value, ctx["hypernodes"], "hypernode")
        elif kind == "instance":
            _ref(c, p, value, ctx["instances"], "instance")
        elif kind == "nft":
            _ref(c, p, value, ctx["nfts"], "NFT pass")
        elif kind == "class":
            _ref(c, p, value, ctx["classes"], "hardware class")
        elif kind == "region":
            _ref(c, p, value, ctx["regions"], "region")
        elif kind == "blueprint":
            _ref(c, p, value, ctx["blueprints"], "blueprint")
        elif kind == "int":
            c.int_(p, value)
        elif kind == "posint":
            c.int_(p, value, minimum=1)
        elif kind == "sint":
            c.int_(p, value, minimum=None)
        elif kind == "share":
            c.frac(p, value, 0, 1)
        elif kind == "unit":
            c.frac(p, value, 0, 1)
        elif kind == "frac":
            c.frac(p, value, 0)
        elif kind == "rtype":
            c.rtype(p, value)
        elif kind == "capacity":
            tmpl = classes.get(args.get("class"), {}).get("template")
            cap = c.capacity(p, value)
            if tmpl and cap and set(cap) != set(tmpl):
                c.err(p, "capacity must name exactly the class template's resource types")
        elif kind == "kpimap":
            c.kpimap(p, value)
        elif kind == "requirements":
            _requirements(c, p, value, ctx["regions"])
        elif kind == "elastic":
            _elastic(c, p, value)
        elif kind == "services":
            if not isinstance(value, list):
                c.err(p, "expected a list")
            else:
                for j, s in enumerate(value):
                    _ref(c, f"{p}/{j}", s, ctx["services"], "service")
        elif kind == "node_list":
            if not isinstance(value, list):
                c.err(p, "expected a list")
            else:
                for j, n in enumerate(value):
                    _ref(c, f"{p}/{j}", n, ctx["nodes"], "node")
    if action == "deploy" and ("blueprint" in args) == ("requirements" in args):
        c.err(path, "deploy needs exactly one of 'blueprint' or 'requirements'")


def random_scenario(seed: int, *, epochs: int = 200, n_nodes: int = 24, n_deploys: int = 60,
                    n_faults: int = 12, n_hypernodes: int = 5) -> dict:
    """Generate a valid randomized scenario exercising the full lifecycle.

    Only the scenario layout is random; a run of the result is deterministic.
    """
    rng = random.Random(seed)
    regions = ["EU", "US", "APAC"]
    providers = [f"prov{i}" for i in range(6)]
    users = [f"user{i}" for i in range(8)]
    stakers = [f"staker{i}" for i in range(4)]
    operators = [f"op{i}" for i in range(n_hypernodes)]
    balances = {a: "2000000" for a in providers + users + stakers + operators}
    balances["builder"] = "50000"
    classes = [
        {"id": "store", "capacity_template": {"Storage:fast": "100", "Networking": "1000"},
         "performance_profile": {"throughput": "800000", "latency_inv": "500000"},
         "challenge_set": ["store-throughput", "store-latency"]},
        {"id": "compute", "capacity_template": {"Compute": "16", "Memory": "64", "Networking": "1000"},
         "performance_profile": {"flops": "2000000", "mem_bw": "900000"}, "challenge_set": ["compute-flops"]},
    ]
    specs = [
        {"kind": "store-throughput", "subject": "store", "kpis": ["throughput"], "pass_thresholds": {"throughput": "4/5"}},
        {"kind": "store-latency", "subject": "store", "kpis": ["latency_inv"], "pass_thresholds": {"latency_inv": "7/10"}},
        {"kind": "compute-flops", "subject": "compute", "kpis": ["flops", "mem_bw"],
         "pass_thresholds": {"flops": "4/5", "mem_bw": "3/4"}},
        {"kind": "kv-availability", "subject": "kvstore", "kpis": ["uptime"], "pass_thresholds": {"uptime": "9/10"}},
    ]
    blueprints = [
        {"id": "small-store", "requirements": [{"type": "Storage:fast", "quantity": "40"}],
         "elastic": {"min_factor": "1/2", "max_factor": "2"}},
        {"id": "eu-store", "requirements": [{"type": "Storage:fast", "quantity": "60", "locality": ["EU"]}]},
        {"id": "vm", "requirements": [{"type": "Compute", "quantity": "4"}, {"type": "Memory", "quantity": "16"}],
         "elastic": {"min_factor": "1/2", "max_factor": "3"}, "services": ["kvstore"]},
    ]
    events: List[dict] = []
    nodes: List[Tuple[str, str]] = []
    for i in range(n_nodes):
        cls = "store" if i % 2 == 0 else "compute"
        nid = f"n{i:03d}"
        epoch = 0 if i < n_nodes // 2 else rng.randrange(1, epochs // 4)
        mult = rng.randint(1, 3)
        tmpl = classes[0 if cls == "store" else 1]["capacity_template"]
        cap = {k: str(int(v) * mult) for k, v in tmpl.items()}
        events.append({"epoch": epoch, "action": "register_node", "args": {
            "id": nid, "provider": rng.choice(providers), "class": cls, "region": rng.choice(regions),
            "capacity": cap, "rewards_share": rng.choice(["7/10", "4/5", "1/2", "1"]),
            "reservation_price": str(rng.randint(1, 9)), "max_booking_duration": str(rng.randint(30, 120)),
            "commitment_end": str(epochs + rng.randint(0, 40)), "collateral": str(4000 * mult)}})
        events.append({"epoch": epoch, "action": "activate", "args": {"node": nid}})
        nodes.append((nid, cls))
        if rng.random() < 0.4:
            events.append({"epoch": epoch, "action": "stake",
                           "args": {"staker": rng.choice(stakers), "node": nid, "amount": str(rng.randint(100, 2000))}})
        if rng.random() < 0.25:
            pid = f"pass-{nid}"
            events.append({"epoch": epoch, "action": "mint_nft", "args": {
                "id": pid, "owner": rng.choice(stakers), "initial_sink": str(rng.randint(500, 3000)),
                "timelock_epochs": str(rng.randint(20, 150))}})
            events.append({"epoch": epoch, "action": "stake_nft", "args": {"pass": pid, "node": nid}})
    live: List[Tuple[str, str]] = []
    for j in range(n_deploys):
        epoch = rng.randrange(1, epochs - 1)
        iid = f"i{j:03d}"
        bp = rng.choice(blueprints)
        args = {"id": iid, "owner": rng.choice(users), "duration": str(rng.randint(5, 40))}
        if rng.random() < 0.2:
            args["requirements"] = [{"type": "Compute", "quantity": str(rng.randint(1, 12)),
                                     "locality": [rng.choice(regions)]}]
        else:
            args["blueprint"] = bp["id"]
        events.append({"epoch": epoch, "action": "deploy", "args": args})
        live.append((iid, args.get("blueprint", "custom")))
        follow = epoch + rng.randint(1, 10)
        if follow < epochs:
            r = rng.random()
            if r < 0.3 and args.get("blueprint") in ("small-store", "vm"):
                rt = "Storage:fast" if args["blueprint"] == "small-store" else "Compute"
                events.append({"epoch": follow, "action": "scale",
                               "args": {"instance": iid, "type": rt, "delta": str(rng.choice([-2, 1, 2, 4]))}})
            elif r < 0.5:
                events.append({"epoch": follow, "action": "release", "args": {"instance": iid}})
            elif r < 0.6:
                events.append({"epoch": follow, "action": "extend",
                               "args": {"instance": iid, "extra": str(rng.randint(1, 10))}})
    for _ in range(n_faults):
        nid, _cls = rng.choice(nodes)
        events.append({"epoch": rng.randrange(epochs // 4, epochs - 2), "action": "inject_fault",
                       "args": {"node": nid, "multiplier": rng.choice(["1/2", "3/5", "1/4", "0"]),
                                "duration": str(rng.randint(1, 4))}})
    events.append({"epoch": epochs // 2, "action": "inject_fault",
                   "args": {"node": "kvstore", "multiplier": "1/2", "duration": "2"}})
    events.append({"epoch": epochs // 3, "action": "corrupt_hypernode",
                   "args": {"hypernode": "hn0", "multiplier": "1/5", "duration": "3"}})
    events.sort(key=lambda e: e["epoch"])
    # scale/release/extend must follow their deploy even when sampled at the same epoch
    order = {"register_node": 0, "activate": 1, "stake": 2, "mint_nft": 2, "stake_nft": 3, "deploy": 4}
    events.sort(key=lambda e: (e["epoch"], order.get(e["action"], 5)))
    return {
        "name": f"random-{seed}",
        "seed": seed,
        "epochs": epochs,
        "genesis": {"balances": balances},
        "regions": [
            {"id": r, "target_capacity": {"Storage:fast": "600", "Compute": "64"}, "bootstrap_end": epochs // 4,
             "bootstrap_emission_per_epoch": "500", "collateral_rates": {"Storage": "20", "Compute": "100",
                                                                          "Memory": "10", "Networking": "1"}}
            for r in regions
        ],
        "hardware_classes": classes,
        "challenge_specs": specs,
        "services": [{"id": "kvstore", "builder": "builder", "bond": "5000", "profile": {"uptime": "1000000"}}],
        "blueprints": blueprints,
        "hypernodes": [{"id": f"hn{i}", "operator": operators[i], "stake": "10000"} for i in range(n_hypernodes)],
        "replication_factor": 3,
        "weights": {"perf": "1/2", "price": "1/4", "avail": "1/4"},
        "noise_amplitude": "1/50",
        "retention_epochs": 8,
        "misbehavior_slash_rate": "1/10",
        "events": events,
    }

