"""End to end on a synthetic product target.

y depends on a*b only, so the raw columns are weak on their own and the loop
has to discover the interaction. Everything runs offline with the scripted
agents, and the run directory can be replayed afterwards.
"""

import sys
import time
from pathlib import Path

import numpy as np

from agentfe.dataset import from_arrays
from agentfe.orchestrator import RunConfig, replay_pool, run

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_run")

rng = np.random.default_rng(7)
a, b, c = rng.normal(size=(3, 500))
y = a * b + 0.1 * rng.normal(size=500)
ds = from_arrays({"a": a, "b": b, "c": c}, y, "regression", name="synthetic_product")

t0 = time.perf_counter()
result = run(RunConfig(iterations=10, seed=1), ds, out)
print(f"{time.perf_counter() - t0:.1f} s")

for it, nrmse, count in result.trajectory:
    print(f"iteration {it:2d}  NRMSE {nrmse:.4f}  active {count}")

print("best:", result.best_iteration, round(result.best_metric, 4))
print([t.source_text for t in result.best_active_features][:5], "...")

# every pool mutation went through the transcript, so it can be rebuilt
assert replay_pool(out, ds) == result.pool
print("report at", out / "report.md")
