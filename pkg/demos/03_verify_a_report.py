"""Exporting a challenge report with its inclusion proof and checking it."""
# %%
import json
import tempfile
from pathlib import Path

from icnsim import Network, run, scenario
from icnsim.merkle import MerkleProof

# %%
result = run(scenario.bundled(), epochs=20)
net = Network.from_snapshot(result.final_state)
enf = net.enforcement

# %% [markdown]
# Reports stay in the satellite store for the retention window. The proof
# binds one report to the Merkle root anchored on the ledger for that epoch.

# %%
epoch, subject = 18, "eu-s1"
challenger = enf.store.aggregates[(epoch, subject)].challengers[0]
report, proof, anchor_id = enf.proof_for(epoch, subject, challenger)
print(report.canonical().decode())
print("anchor", anchor_id, "verifies:", enf.verify_report(report, proof, anchor_id))

# %% [markdown]
# Flipping any byte breaks the proof.

# %%
data = bytearray(report.canonical())
data[10] ^= 1
print("tampered verifies:", enf.verify_report(bytes(data), proof, anchor_id))

# %% [markdown]
# The same check is available from the command line on saved files.

# %%
tmp = Path(tempfile.mkdtemp())
(tmp / "report.json").write_bytes(report.canonical())
(tmp / "proof.json").write_text(json.dumps(proof.to_dict()))
assert MerkleProof.from_dict(json.loads((tmp / "proof.json").read_text())) == proof
print(f"icnsim verify-report --report {tmp}/report.json --proof {tmp}/proof.json --anchor {anchor_id} --state <final_state.json>")
