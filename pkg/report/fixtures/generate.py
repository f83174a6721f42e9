"""Regenerate the bundled metrics fixtures and their oracle values.

Runs short desk-scale trainings through the experiment module, writes the
metrics CSVs this package's tests parse, and records every aggregate the
TypeScript side must reproduce. Oracle numbers are recomputed from the CSV
bytes on disk (not the in-memory log), so both sides read literally the
same file.

usage: python3 generate.py
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

from fedd2s.experiment import (
    RunConfig,
    average_ua,
    client_uas,
    emit_metrics,
    fairness_histogram,
    load_metrics,
    run_training,
)

HERE = pathlib.Path(__file__).resolve().parent
WINDOW = 10
BUCKET_WIDTH = 10

BASE = dict(
    rounds=12,
    clients=6,
    rho=0.5,
    epochs=2,
    batch=8,
    lr=0.01,
    tau=3.0,
    alpha=0.1,
    z0=2,
    drop_set=(2, 3, 5, 6),
    arch="desk",
    dataset="digits:20,0.3",
)

RUNS = [
    ("fedd2s_s0.csv", "fedd2s", 0),
    ("fedd2s_s1.csv", "fedd2s", 1),
    ("fedd2s_s2.csv", "fedd2s", 2),
    ("fedavg_s0.csv", "fedavg", 0),
    ("fixed_s0.csv", "fedd2s_fixed_layer", 0),
]


def round_means_percent(log) -> list:
    return [float(v) for v in 100.0 * log.accuracy_matrix().mean(axis=1)]


def main() -> None:
    oracle: dict = {"window": WINDOW, "bucket_width": BUCKET_WIDTH, "files": {}}
    for name, protocol, seed in RUNS:
        cfg = RunConfig(protocol=protocol, seed=seed, **BASE)
        path = HERE / name
        emit_metrics(run_training(cfg), str(path), fmt="csv")
        log = load_metrics(str(path))
        uas = client_uas(log, WINDOW)
        oracle["files"][name] = {
            "rounds": [r.round for r in log.rounds],
            "round_means": round_means_percent(log),
            "average_ua": average_ua(log, WINDOW),
            "client_uas": [float(v) for v in uas],
            "fairness": fairness_histogram(uas, BUCKET_WIDTH),
        }
        print(f"{name}: average_ua={oracle['files'][name]['average_ua']:.2f}")

    seeds = ["fedd2s_s0.csv", "fedd2s_s1.csv", "fedd2s_s2.csv"]
    stack = np.array([oracle["files"][n]["round_means"] for n in seeds])
    oracle["fedd2s_band"] = {
        "files": seeds,
        "mean": [float(v) for v in stack.mean(axis=0)],
        "std": [float(v) for v in stack.std(axis=0)],  # population std, ddof 0
    }

    (HERE / "empty.csv").write_text("")
    (HERE / "malformed.csv").write_text(
        "round,client_id,selected,test_acc,distill_layer,loss_kl,loss_ce\n"
        "0,0,0,0.5,,,\n"
        "0,1,0,not_a_number,,,\n"
    )
    (HERE / "oracle.json").write_text(json.dumps(oracle, indent=1) + "\n")
    print(f"wrote {len(RUNS)} metrics fixtures + oracle.json")


if __name__ == "__main__":
    main()
