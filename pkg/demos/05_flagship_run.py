"""The flagship run: default config end to end, metrics on disk.

Runs fedd2s on the desk digit task for 30 rounds, prints the learning
curve and the per-client spread, and writes both metrics formats under
demos/out/ for the report tooling to consume.
"""

import os

from fedd2s.experiment import (
    RunConfig,
    average_ua,
    client_uas,
    emit_metrics,
    fairness_histogram,
    run_training,
)

cfg = RunConfig()  # the defaults are the flagship experiment
print(f"{cfg.protocol} on {cfg.dataset}, {cfg.clients} clients, "
      f"{cfg.rounds} rounds, seed {cfg.seed}")

log = run_training(cfg)
acc = 100.0 * log.accuracy_matrix().mean(axis=1)
print("\nround : mean accuracy")
for r in range(0, len(acc), 5):
    print(f"  {r:>3}  {acc[r]:5.1f}%  {'*' * int(acc[r] / 2)}")

print(f"\naverage UA over the last 10 rounds: {average_ua(log, 10):.2f}%")

uas = client_uas(log, 10)
print("per-client UA: " + "  ".join(f"{u:.0f}" for u in uas))
buckets = fairness_histogram(uas, bucket_width=10)
print("fairness histogram (10-point buckets): " + " ".join(map(str, buckets)))

out = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out, exist_ok=True)
for name in ("flagship.json", "flagship.csv"):
    emit_metrics(log, os.path.join(out, name))
print(f"\nwrote metrics to {out}/flagship.json and .csv")
