import json
import subprocess
import sys

import pytest

from icnsim import Network, scenario
from icnsim.cli import main


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--scenario", "bundled:reference", "--epochs", "40", "--out", str(out)]) == 0
    return out


def test_simulate_writes_outputs(outdir, capsys):
    for name in ("metrics.csv", "summary.json", "final_state.json"):
        assert (outdir / name).stat().st_size > 0
    assert json.loads((outdir / "summary.json").read_text())["epochs_run"] == 40


def test_validate_ok_and_invalid(tmp_path, capsys):
    assert main(["validate", "--scenario", "bundled:reference"]) == 0
    assert capsys.readouterr().out == "ok\n"
    doc = scenario.bundled()
    doc["events"][0]["args"]["region"] = "Mars"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["validate", "--scenario", str(path)]) == 2
    assert "/events/0/args/region" in capsys.readouterr().out
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2


def test_unreadable_inputs_exit_2(tmp_path, capsys):
    assert main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert main(["validate", "--scenario", "bundled:nope"]) == 2
    (tmp_path / "junk.json").write_text("{")
    assert main(["inspect-state", "--state", str(tmp_path / "junk.json")]) == 2
    assert main(["no-such-command"]) == 2


def test_inspect_state_views(outdir, capsys):
    state = str(outdir / "final_state.json")
    assert main(["inspect-state", "--state", state]) == 0
    top = json.loads(capsys.readouterr().out)
    assert top["epoch"] == 40 and top["conservation_residual"] == "0"
    assert main(["inspect-state", "--state", state, "--node", "eu-s1"]) == 0
    node = json.loads(capsys.readouterr().out)
    assert node["region"] == "EU" and node["nft"]["id"] == "pass-sam"
    assert main(["inspect-state", "--state", state, "--region", "US"]) == 0
    assert "us-c1" in json.loads(capsys.readouterr().out)["nodes"]
    assert main(["inspect-state", "--state", state, "--node", "ghost"]) == 2


def test_export_then_verify(outdir, tmp_path, capsys):
    state = str(outdir / "final_state.json")
    rep, prf = tmp_path / "r.json", tmp_path / "p.json"
    net = Network.from_snapshot(json.loads((outdir / "final_state.json").read_text()))
    challenger = net.enforcement.store.aggregates[(38, "eu-s1")].challengers[0]
    assert main(["export-proof", "--state", state, "--epoch", "38", "--subject", "eu-s1",
                 "--challenger", challenger, "--out-report", str(rep), "--out-proof", str(prf)]) == 0
    anchor = capsys.readouterr().out.strip()
    base = ["verify-report", "--report", str(rep), "--proof", str(prf), "--state", state]
    assert main(base + ["--anchor", anchor]) == 0
    assert capsys.readouterr().out == "verified\n"
    assert main(base + ["--anchor", "99999"]) == 1
    other = str(int(anchor) - 1)
    assert main(base + ["--anchor", other]) == 1
    rep.write_bytes(rep.read_bytes().replace(b'"epoch":38', b'"epoch":37'))
    assert main(base + ["--anchor", anchor]) == 1
    prf.write_text('{"path": 3}')
    assert main(base + ["--anchor", anchor]) == 2


def test_export_missing_report_exit_2(outdir, tmp_path):
    assert main(["export-proof", "--state", str(outdir / "final_state.json"), "--epoch", "0", "--subject",
                 "ghost", "--challenger", "hn-a", "--out-report", str(tmp_path / "r"),
                 "--out-proof", str(tmp_path / "p")]) == 2


def test_quote_and_deploy(outdir, tmp_path, capsys):
    state = str(outdir / "final_state.json")
    assert main(["quote", "--state", state, "--blueprint", "eu-store", "--region", "EU", "--duration", "4"]) == 0
    quoted = int(capsys.readouterr().out)
    assert quoted > 0
    new = tmp_path / "s.json"
    assert main(["deploy", "--state", state, "--blueprint", "eu-store", "--duration", "4",
                 "--owner", "alice", "--id", "cli-inst", "--out", str(new)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["instance"] == "cli-inst" and int(out["epoch_fee"]) == quoted
    assert main(["inspect-state", "--state", str(new)]) == 0
    assert "cli-inst" in json.loads(capsys.readouterr().out)["instances"]
    assert main(["quote", "--state", state, "--blueprint", "eu-store", "--region", "US"]) == 2
    assert main(["deploy", "--state", state, "--blueprint", "nope", "--duration", "4", "--owner", "alice"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "icnsim.cli", "validate", "--scenario", "bundled:reference"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "ok\n"
