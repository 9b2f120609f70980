"""Command-line entry point: ``icnsim <command> ...``.

Exit codes: 0 success, 1 invariant violation or rejected proof, 2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import canonical, errors, scenario as scenario_mod, simulator
from .merkle import MerkleProof
from .network import Network
from .units import capacity_to_json, fraction_str

OK, FAILED, INVALID = 0, 1, 2
BUNDLED_PREFIX = "bundled:"


class InputError(Exception):
    pass


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc


def _load_scenario(ref: str) -> dict:
    if ref.startswith(BUNDLED_PREFIX):
        try:
            return scenario_mod.bundled(ref[len(BUNDLED_PREFIX):])
        except FileNotFoundError as exc:
            raise InputError(f"no bundled scenario {ref!r}") from exc
    return _read_json(ref)


def _load_state(path: str) -> Network:
    try:
        return Network.from_snapshot(_read_json(path))
    except (KeyError, TypeError, ValueError, errors.ProtocolError) as exc:
        raise InputError(f"{path}: not a valid state snapshot ({exc})") from exc


def _print_json(obj) -> None:
    sys.stdout.write(canonical.dumps_pretty(obj))


def cmd_simulate(args) -> int:
    doc = _load_scenario(args.scenario)
    try:
        result = simulator.run(doc, seed=args.seed, epochs=args.epochs, out_dir=args.out)
    except errors.ScenarioInvalid as exc:
        for path, msg in exc.diagnostics:
            print(f"{path or '/'}: {msg}", file=sys.stderr)
        return INVALID
    if result.violation is not None:
        print(f"error: {result.violation}", file=sys.stderr)
        return FAILED
    s = result.summary()
    print(f"ran {s['epochs_run']} epochs; conservation residual {s['conservation_residual']}; "
          f"{s['faults_detected']} faults; outputs in {args.out}")
    return OK


def cmd_validate(args) -> int:
    doc = _load_scenario(args.scenario)
    diags = scenario_mod.validate(doc)
    for path, msg in diags:
        print(f"{path or '/'}: {msg}")
    if diags:
        return INVALID
    print("ok")
    return OK


def cmd_inspect_state(args) -> int:
    net = _load_state(args.state)
    reg, ledger = net.registry, net.ledger
    if args.node:
        if args.node not in reg.nodes:
            raise InputError(f"unknown node {args.node!r}")
        n = reg.nodes[args.node]
        nft = ledger.nft_on(n.id)
        _print_json({
            "id": n.id, "provider": n.provider, "class": n.hw_class, "region": n.region,
            "status": n.status.value, "capacity": capacity_to_json(n.capacity),
            "allocated": capacity_to_json(reg.allocated.get(n.id, {})),
            "rewards_share": fraction_str(n.rewards_share), "reservation_price": str(n.reservation_price),
            "collateral": str(ledger.collateral(n.id)), "min_collateral": str(reg.min_collateral(n.id)),
            "security": str(ledger.security(n.id)),
            "stakes": {s.id: {"staker": s.staker, "amount": str(s.amount)} for s in ledger.stakes_on(n.id)},
            "nft": None if nft is None else {"id": nft.id, "sink_value": str(nft.sink_value)},
            "latest_kpis": net.enforcement.latest.get(n.id),
        })
    elif args.region:
        if args.region not in reg.regions:
            raise InputError(f"unknown region {args.region!r}")
        _print_json({
            "region": args.region,
            "capability_map": capacity_to_json(reg.capability_map(args.region)),
            "nodes": {n.id: n.status.value for n in sorted(reg.nodes.values(), key=lambda n: n.id)
                      if n.region == args.region},
            "economy": net.economics.economies[args.region].to_dict()
            if args.region in net.economics.economies else None,
        })
    else:
        _print_json({
            "epoch": ledger.epoch,
            "genesis_supply": str(ledger.genesis_supply),
            "circulating": str(ledger.circulating()),
            "burned_total": str(ledger.burned_total),
            "emitted_total": str(ledger.emitted_total),
            "conservation_residual": str(ledger.conservation_residual()),
            "regions": sorted(reg.regions),
            "nodes": {n.id: n.status.value for n in sorted(reg.nodes.values(), key=lambda n: n.id)},
            "instances": sorted(net.composer.instances),
            "anchors": len(ledger.anchors),
        })
    return OK


def cmd_verify_report(args) -> int:
    try:
        data = Path(args.report).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {args.report}: {exc.strerror}") from exc
    if data.endswith(b"\n"):
        data = data[:-1]
    try:
        proof = MerkleProof.from_dict(_read_json(args.proof))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.proof}: malformed proof ({exc})") from exc
    net = _load_state(args.state)
    try:
        ok = net.enforcement.verify_report(data, proof, args.anchor)
    except errors.UnknownAnchor:
        print(f"rejected: no anchor {args.anchor}")
        return FAILED
    print("verified" if ok else "rejected")
    return OK if ok else FAILED


def cmd_export_proof(args) -> int:
    net = _load_state(args.state)
    try:
        report, proof, anchor_id = net.enforcement.proof_for(args.epoch, args.subject, args.challenger)
    except errors.ReportsMissing as exc:
        raise InputError(f"no retained report: {exc}") from exc
    Path(args.out_report).write_bytes(report.canonical() + b"\n")
    Path(args.out_proof).write_bytes(canonical.dumps(proof.to_dict()) + b"\n")
    print(anchor_id)
    return OK


def cmd_deploy(args) -> int:
    net = _load_state(args.state)
    try:
        inst = net.composer.deploy(args.owner, args.blueprint, args.duration, args.id)
    except errors.ProtocolError as exc:
        print(f"rejected: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INVALID
    out = args.out or args.state
    Path(out).write_bytes(canonical.dumps(net.snapshot()) + b"\n")
    _print_json({
        "instance": inst.id, "epoch_fee": str(inst.epoch_fee()), "booked_until": str(inst.booked_until),
        "units": [{"node": u.node, "type": str(u.type), "quantity": str(u.quantity)} for u in inst.allocations],
    })
    return OK


def cmd_quote(args) -> int:
    net = _load_state(args.state)
    try:
        price = net.economics.quote_price(args.blueprint, args.region, args.duration)
    except errors.ProtocolError as exc:
        print(f"rejected: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INVALID
    print(price)
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icnsim", description="Deterministic ICN protocol simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log protocol events to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write metrics.csv, summary.json, final_state.json")
    s.add_argument("--scenario", required=True, help=f"scenario JSON path, or {BUNDLED_PREFIX}<name>")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--epochs", type=int, help="override the scenario length")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("validate", help="check a scenario and print diagnostics")
    s.add_argument("--scenario", required=True)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("inspect-state", help="summarize a state snapshot")
    s.add_argument("--state", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--region")
    g.add_argument("--node")
    s.set_defaults(func=cmd_inspect_state)

    s = sub.add_parser("verify-report", help="check a report's inclusion proof against an anchored root")
    s.add_argument("--report", required=True)
    s.add_argument("--proof", required=True)
    s.add_argument("--anchor", type=int, required=True)
    s.add_argument("--state", default="final_state.json", help="snapshot holding the anchors")
    s.set_defaults(func=cmd_verify_report)

    s = sub.add_parser("export-proof", help="write a retained report and its inclusion proof")
    s.add_argument("--state", required=True)
    s.add_argument("--epoch", type=int, required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--challenger", required=True)
    s.add_argument("--out-report", required=True)
    s.add_argument("--out-proof", required=True)
    s.set_defaults(func=cmd_export_proof)

    s = sub.add_parser("deploy", help="deploy a blueprint against a saved state")
    s.add_argument("--state", required=True)
    s.add_argument("--blueprint", required=True)
    s.add_argument("--duration", type=int, required=True)
    s.add_argument("--owner", required=True)
    s.add_argument("--id")
    s.add_argument("--out", help="where to write the new state (default: overwrite --state)")
    s.set_defaults(func=cmd_deploy)

    s = sub.add_parser("quote", help="price a blueprint in a region against a saved state")
    s.add_argument("--state", required=True)
    s.add_argument("--blueprint", required=True)
    s.add_argument("--region", required=True)
    s.add_argument("--duration", type=int, default=1)
    s.set_defaults(func=cmd_quote)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INVALID if exc.code else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
