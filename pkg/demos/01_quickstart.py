"""Quickstart: one federation, two methods, a short loss table.

Run from the repo root:  python3 demos/01_quickstart.py
"""
import warnings

import numpy as np

from fedsim.benchmark import bench_config
from fedsim.orchestrator import build_federation, run_seed

warnings.simplefilter("ignore")

# %% The benchmark federation: 20 clients, label-skewed shards.
cfg = bench_config("fedlada", T=60, seeds=(0,))
fed = build_federation(cfg, seed=0)
sizes = [len(c.shard) for c in fed.clients]
print(f"{fed.m} clients, shard sizes {min(sizes)}..{max(sizes)}, model dimension {fed.model.dim}")

# label mix of the first few clients: each one sees mostly two or three classes
for c in fed.clients[:4]:
    counts = np.bincount(fed.train.labels[c.shard], minlength=5)
    print(f"  client {c.cid}: {counts.tolist()}")

# %% Train FedAvg and FedLADA on the same seed; 2 of 20 clients per round.
streams = {name: run_seed(bench_config(name, T=60, seeds=(0,)), 0) for name in ("fedavg", "fedlada")}

print("\nround   fedavg loss   fedlada loss   fedlada acc")
for t in (1, 5, 10, 20, 40, 60):
    a, b = streams["fedavg"][t - 1], streams["fedlada"][t - 1]
    print(f"{t:5d}   {a.train_loss:11.4f}   {b.train_loss:12.4f}   {b.test_acc:11.3f}")

# %% The global offset g_a carries last round's per-step movement into this round.
print("\n|g_a| over the first rounds:",
      " ".join(f"{r.ga_norm:.2f}" for r in streams["fedlada"][:8]))
