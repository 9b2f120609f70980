"""Running the bundled reference scenario and reading its metrics."""
# %%
import tempfile
from collections import Counter
from pathlib import Path

from icnsim import run, scenario
from icnsim.simulator import read_metrics

# %% [markdown]
# The reference scenario spans two regions over 80 epochs with deploys,
# scaling, injected faults, a corrupted hypernode and a price change.

# %%
doc = scenario.bundled()
print(len(doc["events"]), "scripted events,", doc["epochs"], "epochs")

# %%
out = Path(tempfile.mkdtemp())
result = run(doc, out_dir=out)
summary = result.summary()
print({k: summary[k] for k in ("epochs_run", "conservation_residual", "faults_detected", "burned_total")})

# %% [markdown]
# metrics.csv holds one frame row per epoch and one reward row per statement.
# Bootstrap rewards stop at the region's bootstrap_end (50 here).

# %%
frames, rewards = read_metrics(out / "metrics.csv")
sources = Counter((int(r["epoch"]) >= 50, r["source"]) for r in rewards)
print("before 50:", {s: n for (late, s), n in sources.items() if not late})
print("from 50:  ", {s: n for (late, s), n in sources.items() if late})

# %%
print("residual EU fast storage by epoch:", [f["residual:EU:Storage:fast"] for f in frames][::10])
