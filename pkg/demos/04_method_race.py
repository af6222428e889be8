"""Every method on the benchmark, one seed: rounds to the loss target.

Writes per-method metrics to demos_out/ and then ranks them the same way
``fedsim compare`` does.

Run from the repo root:  python3 demos/04_method_race.py
"""
import math
import warnings
from pathlib import Path

from fedsim.benchmark import bench_config
from fedsim.cli import execute
from fedsim.methods import METHODS
from fedsim.orchestrator import rounds_to_target

warnings.simplefilter("ignore")
out = Path("demos_out")
streams = {}
for name in METHODS:
    result, _ = execute(bench_config(name, seeds=(0,)), out / name)
    streams[name] = result.streams[0]

target = 1.2 * min(r.train_loss for r in streams["fedavg"])
hits = {n: rounds_to_target(s, "train_loss", target) for n, s in streams.items()}
best = min(hits.values())
print(f"target train loss {target:.4f}\n")
print(f"{'method':16} {'rounds':>6} {'vs best':>8} {'final acc':>10}")
for n in sorted(hits, key=hits.get):
    r = hits[n]
    ratio = "inf" if math.isinf(r) else f"{r / best:.2f}x"
    print(f"{n:16} {r:>6} {ratio:>8} {streams[n][-1].test_acc:10.3f}")

# On this convex problem FedAdam's near sign-like server steps make steady
# progress, so it does not show the slowdown seen on deep networks.
print(f"\nper-method metrics.csv files are under {out}/; try:")
print(f"  fedsim compare {out}/fedavg/metrics.csv {out}/fedlada/metrics.csv --target {target:.4f}")
