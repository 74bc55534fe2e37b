#!/usr/bin/env python3
"""Churn experiment: random kills and rejoins, lookup consistency report."""

import argparse
import sys

from logicnode.protocols.chord import churn_experiment


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=64)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--mean-session-ms", type=float, default=1200000)
    ap.add_argument("--duration-ms", type=float, default=300000)
    ap.add_argument("--downtime-ms", type=float, default=20000)
    ap.add_argument("--threshold", type=float, default=0.90)
    args = ap.parse_args()

    rep = churn_experiment(args.nodes, args.seed, args.mean_session_ms,
                           args.duration_ms, downtime_ms=args.downtime_ms)
    print("kills=%d rejoins=%d lookups=%d answered=%d consistency=%.4f"
          % (rep.kills, rep.joins, len(rep.results),
             sum(r.answered for r in rep.results), rep.consistency))
    return 0 if rep.consistency >= args.threshold else 1


if __name__ == "__main__":
    sys.exit(main())
