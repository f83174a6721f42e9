"""Command-line entry point.

Subcommands:
    partition    dataset + alpha + clients -> partition plan JSON
    run          config file -> metrics file (json or csv)
    report-data  metrics file -> tidy CSV tables for plotting

Every failure exits nonzero with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .data import dirichlet_partition
from .errors import ConfigError, IngestError, MetricsError, PartitionError, ProtocolError
from .experiment import (
    average_ua,
    client_uas,
    emit_metrics,
    fairness_histogram,
    load_config,
    load_dataset,
    load_metrics,
    run_training,
)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedd2s", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("partition", help="draw a Dirichlet partition plan")
    pp.add_argument("--dataset", required=True,
                    help="blobs:c,per_class,dims,sep | digits:per_class,noise | csv:path | idx:im,lb")
    pp.add_argument("--alpha", type=float, required=True)
    pp.add_argument("--clients", type=int, required=True)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", required=True)

    rp = sub.add_parser("run", help="run a config file and write metrics")
    rp.add_argument("--config", required=True)
    rp.add_argument("--seed", type=int, default=None, help="override the config seed")
    rp.add_argument("--out", required=True)
    rp.add_argument("--format", choices=("csv", "json"), default=None)

    dp = sub.add_parser("report-data", help="write plot-ready tables from a metrics file")
    dp.add_argument("--in", dest="infile", required=True)
    dp.add_argument("--out", required=True, help="output directory")
    dp.add_argument("--window", type=int, default=None, help="UA window (default: from config)")
    dp.add_argument("--bucket-width", type=int, default=10)
    return p


def _cmd_partition(args) -> int:
    ds = load_dataset(args.dataset, args.seed)
    plan = dirichlet_partition(ds, args.clients, args.alpha, args.seed)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(plan.to_json())
        f.write("\n")
    print(f"wrote partition of {len(ds)} samples for {args.clients} clients to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    log = run_training(cfg)
    emit_metrics(log, args.out, args.format)
    window = min(log.config["ua_window"], len(log.rounds))
    print(f"wrote {len(log.rounds)} round records to {args.out}; "
          f"average UA {average_ua(log, window):.2f}%")
    return 0


def _cmd_report_data(args) -> int:
    import os

    log = load_metrics(args.infile)
    window = args.window or int(log.config.get("ua_window", 10))
    window = min(window, len(log.rounds))
    os.makedirs(args.out, exist_ok=True)
    curve_path = os.path.join(args.out, "curve.csv")
    acc = log.accuracy_matrix()
    with open(curve_path, "w", encoding="utf-8") as f:
        f.write("round,avg_ua\n")
        for r, row in zip(log.rounds, acc):
            f.write(f"{r.round},{repr(float(100.0 * row.mean()))}\n")
    fair_path = os.path.join(args.out, "fairness.csv")
    uas = client_uas(log, window)
    counts = fairness_histogram(uas, args.bucket_width)
    with open(fair_path, "w", encoding="utf-8") as f:
        f.write("bucket_lo,bucket_hi,count\n")
        for i, n in enumerate(counts):
            f.write(f"{i * args.bucket_width},{(i + 1) * args.bucket_width},{n}\n")
    print(f"wrote {curve_path} and {fair_path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = {
        "partition": _cmd_partition,
        "run": _cmd_run,
        "report-data": _cmd_report_data,
    }[args.command]
    try:
        return handler(args)
    except (ConfigError, IngestError, MetricsError, PartitionError, ProtocolError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
